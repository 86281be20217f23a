"""Self-validation of emitted token-stream documents.

Mirrors the consumer-side schema contract (version "1") so every stream
is checked before it is written; the backend talks to the extraction
toolkit only through files, so the rules are restated here rather than
imported from it.
"""

from __future__ import annotations


class StreamValidationError(ValueError):
    pass


def _fail(token_id, field, message):
    where = f"token {token_id}" if token_id is not None else "stream"
    raise StreamValidationError(f"{where}: field '{field}': {message}")


def validate_stream_dict(doc: dict) -> None:
    """Raise StreamValidationError unless the document satisfies schema 1."""
    if doc.get("schema_version") != "1":
        _fail(None, "schema_version", f"must be '1', got {doc.get('schema_version')!r}")
    if not isinstance(doc.get("report_id"), str) or not doc["report_id"]:
        _fail(None, "report_id", "must be a non-empty string")
    if doc.get("report_kind") not in ("rnfl", "gcc"):
        _fail(None, "report_kind", f"must be 'rnfl' or 'gcc', got {doc.get('report_kind')!r}")
    if not isinstance(doc.get("backend_name"), str):
        _fail(None, "backend_name", "must be a string")
    tokens = doc.get("tokens")
    if not isinstance(tokens, list):
        _fail(None, "tokens", "must be a list")

    seen = set()
    for raw in tokens:
        tid = raw.get("id")
        if not isinstance(tid, int) or isinstance(tid, bool) or tid < 0:
            _fail(None, "id", "must be an integer >= 0")
        if tid in seen:
            _fail(tid, "id", "duplicate token id")
        seen.add(tid)
        text = raw.get("text")
        if not isinstance(text, str) or not text.strip():
            _fail(tid, "text", "must be a non-empty string")
        if text != text.strip():
            _fail(tid, "text", "must not carry surrounding whitespace")
        conf = raw.get("conf")
        if not isinstance(conf, (int, float)) or isinstance(conf, bool) or not 0 <= conf <= 1:
            _fail(tid, "conf", f"must be a number in [0,1], got {conf!r}")
        bbox = raw.get("bbox")
        if not isinstance(bbox, list) or len(bbox) != 4:
            _fail(tid, "bbox", "must be [x0, y0, x1, y1]")
        x0, y0, x1, y1 = bbox
        if not all(isinstance(v, (int, float)) and 0 <= v <= 1 for v in bbox):
            _fail(tid, "bbox", f"coordinates must lie in [0,1], got {bbox}")
        if not (x0 < x1 and y0 < y1):
            _fail(tid, "bbox", f"must have positive extent, got {bbox}")
        if not isinstance(raw.get("crop_id"), str) or not raw["crop_id"]:
            _fail(tid, "crop_id", "must be a non-empty string")
