"""OCR token-stream interchange format: parsing, validation, reading order.

A token stream is the bit-exact boundary between the OCR backend and this
toolkit: one JSON document per report, schema version "1". This module is
a pure codec; confidences pass through unmodified.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from statistics import median

from octex.fields import ReportKind

SCHEMA_VERSION = "1"
SUPPORTED_SCHEMA_VERSIONS = (SCHEMA_VERSION,)

# Row clustering tolerance as a fraction of the median token height.
ROW_TOLERANCE_FRACTION = 0.5


class TokenSchemaError(ValueError):
    """Token-stream document violates the schema contract."""


@dataclass(frozen=True)
class OcrToken:
    """One recognized text fragment within a named crop region."""

    id: int
    text: str
    conf: float
    bbox: tuple[float, float, float, float]  # (x0, y0, x1, y1), crop-normalized
    crop_id: str

    @property
    def x_center(self) -> float:
        return (self.bbox[0] + self.bbox[2]) / 2.0

    @property
    def y_center(self) -> float:
        return (self.bbox[1] + self.bbox[3]) / 2.0

    @property
    def height(self) -> float:
        return self.bbox[3] - self.bbox[1]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "conf": self.conf,
            "bbox": list(self.bbox),
            "crop_id": self.crop_id,
        }


@dataclass
class TokenStream:
    """All tokens recognized on one report page."""

    report_id: str
    report_kind: ReportKind
    tokens: list[OcrToken] = field(default_factory=list)
    backend_name: str = ""
    schema_version: str = SCHEMA_VERSION

    def by_crop(self) -> dict[str, list[OcrToken]]:
        groups: dict[str, list[OcrToken]] = {}
        for tok in self.tokens:
            groups.setdefault(tok.crop_id, []).append(tok)
        return groups

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "report_id": self.report_id,
            "report_kind": self.report_kind.value,
            "backend_name": self.backend_name,
            "tokens": [t.to_dict() for t in sorted(self.tokens, key=lambda t: t.id)],
        }


def _fail(token_id: int | None, field_name: str, message: str) -> None:
    where = f"token {token_id}" if token_id is not None else "stream"
    raise TokenSchemaError(f"{where}: field '{field_name}': {message}")


def _validate_token(raw: dict, seen_ids: set[int]) -> OcrToken:
    tid = raw.get("id")
    if not isinstance(tid, int) or isinstance(tid, bool) or tid < 0:
        _fail(tid if isinstance(tid, int) else None, "id", "must be an integer >= 0")
    if tid in seen_ids:
        _fail(tid, "id", "duplicate token id")

    text = raw.get("text")
    if not isinstance(text, str) or not text.strip():
        _fail(tid, "text", "must be a non-empty string")
    text = text.strip()

    conf = raw.get("conf")
    if not isinstance(conf, (int, float)) or isinstance(conf, bool):
        _fail(tid, "conf", "must be a number")
    if not 0.0 <= float(conf) <= 1.0:
        _fail(tid, "conf", f"must be in [0,1], got {conf}")

    bbox = raw.get("bbox")
    if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
        _fail(tid, "bbox", "must be [x0, y0, x1, y1]")
    try:
        x0, y0, x1, y1 = (float(v) for v in bbox)
    except (TypeError, ValueError):
        _fail(tid, "bbox", "coordinates must be numbers")
    for name, v in (("x0", x0), ("y0", y0), ("x1", x1), ("y1", y1)):
        if not 0.0 <= v <= 1.0:
            _fail(tid, "bbox", f"{name}={v} outside [0,1]")
    if not x0 < x1:
        _fail(tid, "bbox", f"x0={x0} must be < x1={x1}")
    if not y0 < y1:
        _fail(tid, "bbox", f"y0={y0} must be < y1={y1}")

    crop_id = raw.get("crop_id")
    if not isinstance(crop_id, str) or not crop_id:
        _fail(tid, "crop_id", "must be a non-empty string")

    return OcrToken(tid, text, float(conf), (x0, y0, x1, y1), crop_id)


def parse_token_stream(data: bytes | str) -> TokenStream:
    """Parse and fully validate a token-stream document.

    Raises TokenSchemaError naming the first offending token id and field;
    a version mismatch lists the supported versions.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise TokenSchemaError(f"stream: not valid UTF-8: {e}") from e
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise TokenSchemaError(f"stream: not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise TokenSchemaError("stream: top level must be a JSON object")

    version = doc.get("schema_version")
    if version not in SUPPORTED_SCHEMA_VERSIONS:
        raise TokenSchemaError(
            f"stream: field 'schema_version': {version!r} not supported "
            f"(supported: {', '.join(SUPPORTED_SCHEMA_VERSIONS)})"
        )

    report_id = doc.get("report_id")
    if not isinstance(report_id, str) or not report_id:
        _fail(None, "report_id", "must be a non-empty string")

    kind_raw = doc.get("report_kind")
    try:
        kind = ReportKind(kind_raw)
    except ValueError:
        _fail(None, "report_kind", f"must be 'rnfl' or 'gcc', got {kind_raw!r}")

    backend_name = doc.get("backend_name", "")
    if not isinstance(backend_name, str):
        _fail(None, "backend_name", "must be a string")

    raw_tokens = doc.get("tokens")
    if not isinstance(raw_tokens, list):
        _fail(None, "tokens", "must be a list")

    tokens: list[OcrToken] = []
    seen: set[int] = set()
    for raw in raw_tokens:
        if not isinstance(raw, dict):
            _fail(None, "tokens", "entries must be objects")
        tok = _validate_token(raw, seen)
        seen.add(tok.id)
        tokens.append(tok)

    return TokenStream(report_id, kind, tokens, backend_name, version)


def serialize_token_stream(stream: TokenStream) -> str:
    """Canonical JSON serialization; parse(serialize(s)) is the identity."""
    return json.dumps(stream.to_dict(), indent=1, sort_keys=True) + "\n"


def cluster_rows(tokens: list[OcrToken]) -> list[list[OcrToken]]:
    """Group same-crop tokens into visual rows.

    A token starts a new row when its vertical center is more than the row
    tolerance (0.5 x median token height) below the row's anchor token.
    Output is independent of input order.
    """
    if not tokens:
        return []
    crops = {t.crop_id for t in tokens}
    if len(crops) > 1:
        raise ValueError(f"tokens span multiple crops: {sorted(crops)}")

    tol = ROW_TOLERANCE_FRACTION * median(t.height for t in tokens)
    ordered = sorted(tokens, key=lambda t: (t.y_center, t.bbox[0], t.id))
    rows: list[list[OcrToken]] = []
    anchor_y = None
    for tok in ordered:
        if anchor_y is None or tok.y_center - anchor_y > tol:
            rows.append([tok])
            anchor_y = tok.y_center
        else:
            rows[-1].append(tok)
    for row in rows:
        row.sort(key=lambda t: (t.bbox[0], t.y_center, t.id))
    return rows


def reading_order(tokens: list[OcrToken]) -> list[OcrToken]:
    """Sort one crop's tokens into deterministic reading order.

    Rows top-to-bottom, tokens within a row left-to-right. The result is a
    permutation of the input and is invariant under input shuffling.
    """
    return [tok for row in cluster_rows(tokens) for tok in row]
