"""OCR backend: rasterize report pages, crop per plan, emit token streams."""

__version__ = "0.1.0"

from octex_backend.backend import BackendJob, run_backend, run_batch
from octex_backend.engine import get_engine

__all__ = ["__version__", "BackendJob", "run_backend", "run_batch", "get_engine"]
