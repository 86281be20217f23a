import pytest

from octex.fields import ReportKind
from octex.layout import load_default_template


@pytest.fixture(scope="session")
def rnfl_template():
    return load_default_template(ReportKind.RNFL)


@pytest.fixture(scope="session")
def gcc_template():
    return load_default_template(ReportKind.GCC)
