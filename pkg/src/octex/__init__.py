"""octex: structured numeric extraction from Cirrus optic-nerve OCT reports.

Library plus CLI covering the post-OCR pipeline: DICOM harvesting, layout
templates and crop planning, rule-based RNFL/GCC field extraction, QC for
the recurring OCR error patterns, precision scoring against gold labels,
and a ground-truthed synthetic report generator.
"""

__version__ = "0.1.0"

from octex.fields import Eye, ExtractedField, FieldId, FieldStatus, ReportKind
from octex.layout import LayoutTemplate, load_default_template, load_template, plan_crops
from octex.tokens import OcrToken, TokenStream, parse_token_stream, reading_order

__all__ = [
    "__version__",
    "Eye",
    "ExtractedField",
    "FieldId",
    "FieldStatus",
    "ReportKind",
    "LayoutTemplate",
    "load_default_template",
    "load_template",
    "plan_crops",
    "OcrToken",
    "TokenStream",
    "parse_token_stream",
    "reading_order",
]
