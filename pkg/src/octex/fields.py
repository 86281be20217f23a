"""Canonical field identities and value grammars for Cirrus RNFL/GCC reports.

Every downstream stage (extraction, QC, scoring) keys its records on the
closed FieldId set defined here: 24 RNFL names and 9 GCC names, each
reported once per eye (48 and 18 fields total).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional


class ReportKind(str, Enum):
    RNFL = "rnfl"
    GCC = "gcc"


class Eye(str, Enum):
    OD = "OD"
    OS = "OS"


class ValueKind(str, Enum):
    """Grammar family a field's printed value must parse under."""

    THICKNESS_UM = "thickness_um"      # integer micrometres, unit suffix tolerated
    GCLIPL_UM = "gclipl_um"            # integer micrometres (macular GCL+IPL scale)
    RATIO = "ratio"                    # real in [0,1], <= 2 decimals
    AREA_MM2 = "area_mm2"              # non-negative real, <= 2 decimals
    VOLUME_MM3 = "volume_mm3"          # non-negative real, <= 2 decimals
    PERCENT = "percent"                # real in [0,100], '%' suffix tolerated
    SIGNAL = "signal"                  # integer 0..10 printed as N/10


QUADRANTS = ("superior", "temporal", "nasal", "inferior")

# Table order: superior first, then clockwise around the macular annulus.
GCC_SECTORS = (
    "superior",
    "superior_nasal",
    "inferior_nasal",
    "inferior",
    "inferior_temporal",
    "superior_temporal",
)

RNFL_GLOBAL_NAMES = (
    "rnfl.signal_strength",
    "rnfl.avg_thickness",
    "rnfl.symmetry",
    "rnfl.rim_area",
    "rnfl.disc_area",
    "rnfl.avg_cd_ratio",
    "rnfl.vert_cd_ratio",
    "rnfl.cup_volume",
)

RNFL_FIELD_NAMES = (
    RNFL_GLOBAL_NAMES
    + tuple(f"rnfl.quadrant.{q}" for q in QUADRANTS)
    + tuple(f"rnfl.clock.{h}" for h in range(1, 13))
)

GCC_FIELD_NAMES = (
    ("gcc.signal_strength",)
    + tuple(f"gcc.sector.{s}" for s in GCC_SECTORS)
    + ("gcc.avg_gclipl", "gcc.min_gclipl")
)

_VALUE_KIND_BY_NAME: dict[str, ValueKind] = {
    "rnfl.signal_strength": ValueKind.SIGNAL,
    "rnfl.avg_thickness": ValueKind.THICKNESS_UM,
    "rnfl.symmetry": ValueKind.PERCENT,
    "rnfl.rim_area": ValueKind.AREA_MM2,
    "rnfl.disc_area": ValueKind.AREA_MM2,
    "rnfl.avg_cd_ratio": ValueKind.RATIO,
    "rnfl.vert_cd_ratio": ValueKind.RATIO,
    "rnfl.cup_volume": ValueKind.VOLUME_MM3,
    "gcc.signal_strength": ValueKind.SIGNAL,
    "gcc.avg_gclipl": ValueKind.GCLIPL_UM,
    "gcc.min_gclipl": ValueKind.GCLIPL_UM,
}
_VALUE_KIND_BY_NAME.update(
    {f"rnfl.quadrant.{q}": ValueKind.THICKNESS_UM for q in QUADRANTS}
)
_VALUE_KIND_BY_NAME.update(
    {f"rnfl.clock.{h}": ValueKind.THICKNESS_UM for h in range(1, 13)}
)
_VALUE_KIND_BY_NAME.update(
    {f"gcc.sector.{s}": ValueKind.GCLIPL_UM for s in GCC_SECTORS}
)


@dataclass(frozen=True, order=True)
class FieldId:
    """One scored report field: a canonical name plus the eye it belongs to."""

    name: str
    eye: Eye

    def __post_init__(self) -> None:
        if self.name not in _VALUE_KIND_BY_NAME:
            raise ValueError(f"unknown field name: {self.name!r}")

    @property
    def kind(self) -> ReportKind:
        return ReportKind.RNFL if self.name.startswith("rnfl.") else ReportKind.GCC

    @property
    def value_kind(self) -> ValueKind:
        return _VALUE_KIND_BY_NAME[self.name]

    def key(self) -> str:
        return f"{self.name}:{self.eye.value}"


def field_names(kind: ReportKind) -> tuple[str, ...]:
    return RNFL_FIELD_NAMES if kind is ReportKind.RNFL else GCC_FIELD_NAMES


def all_fields(kind: ReportKind) -> list[FieldId]:
    """The full per-eye field set: 48 entries for RNFL, 18 for GCC."""
    return [FieldId(name, eye) for name in field_names(kind) for eye in (Eye.OD, Eye.OS)]


def value_kind_of(name: str) -> ValueKind:
    return _VALUE_KIND_BY_NAME[name]


# --- value grammars -------------------------------------------------------

# OCR-mangled micrometre suffixes seen in practice: "um", "m", bare "µm".
_THICKNESS_RE = re.compile(r"^(\d{1,3})\s*(?:µm|um|m)?$")
_RATIO_RE = re.compile(r"^(0(?:\.\d{1,2})?|1(?:\.0{1,2})?)$")
_DECIMAL_RE = re.compile(r"^(\d{1,2}(?:\.\d{1,2})?)\s*(?:mm²|mm2|mm³|mm3)?$")
_PERCENT_RE = re.compile(r"^(\d{1,3}(?:\.\d{1,2})?)\s*%?$")
_SIGNAL_RE = re.compile(r"^(\d{1,2})\s*/\s*10$")
_FOVEA_RE = re.compile(r"^fovea\s*:?\s*(\d{1,3})\s*,\s*(\d{1,3})$", re.IGNORECASE)


class SignalScaleError(ValueError):
    """Signal strength matched N/10 but N exceeds the 10-point scale."""


def parse_signal_strength(text: str) -> Optional[int]:
    """Parse an N/10 signal-strength string to the integer N.

    Returns None when the text is not an N/10 pattern; raises
    SignalScaleError for a malformed scale such as 12/10.
    """
    m = _SIGNAL_RE.match(text.strip())
    if not m:
        return None
    n = int(m.group(1))
    if n > 10:
        raise SignalScaleError(f"signal strength {n}/10 exceeds scale")
    return n


def parse_value(kind: ValueKind, text: str) -> Optional[int | float]:
    """Parse token text under one value grammar.

    Returns the typed scalar, or None when the text does not satisfy the
    grammar (values are never coerced into range).
    """
    text = text.strip()
    if kind is ValueKind.SIGNAL:
        try:
            return parse_signal_strength(text)
        except SignalScaleError:
            return None
    if kind in (ValueKind.THICKNESS_UM, ValueKind.GCLIPL_UM):
        m = _THICKNESS_RE.match(text)
        return int(m.group(1)) if m else None
    if kind is ValueKind.RATIO:
        m = _RATIO_RE.match(text)
        return float(m.group(1)) if m else None
    if kind in (ValueKind.AREA_MM2, ValueKind.VOLUME_MM3):
        m = _DECIMAL_RE.match(text)
        return float(m.group(1)) if m else None
    if kind is ValueKind.PERCENT:
        m = _PERCENT_RE.match(text)
        if not m:
            return None
        v = float(m.group(1))
        return v if 0.0 <= v <= 100.0 else None
    raise ValueError(f"unhandled value kind: {kind}")


def parse_fovea(text: str) -> Optional[tuple[int, int]]:
    """Parse a "Fovea: x, y" annotation into macular-cube coordinates.

    Coordinates outside the 200x200 cube are rejected.
    """
    m = _FOVEA_RE.match(text.strip())
    if not m:
        return None
    x, y = int(m.group(1)), int(m.group(2))
    if not (0 <= x <= 200 and 0 <= y <= 200):
        return None
    return (x, y)


# --- extraction records ---------------------------------------------------

class FieldStatus(str, Enum):
    DETECTED = "detected"
    NOT_DETECTED = "not_detected"


# NotDetected reason codes. The first three follow the label-anchored
# extractor's contract; slot_empty and qc_reject cover grid misses and
# post-hoc QC downgrades.
REASON_ANCHOR_MISSING = "anchor_missing"
REASON_VALUE_UNPARSEABLE = "value_unparseable"
REASON_COLUMN_AMBIGUOUS = "column_ambiguous"
REASON_SLOT_EMPTY = "slot_empty"
REASON_QC_REJECT = "qc_reject"


@dataclass
class ExtractedField:
    """One field's extraction outcome with token provenance."""

    field: FieldId
    status: FieldStatus = FieldStatus.NOT_DETECTED
    value: Optional[int | float] = None
    conf: Optional[float] = None
    token_ids: list[int] = field(default_factory=list)
    reason: Optional[str] = None

    @classmethod
    def detected(
        cls, fid: FieldId, value: int | float, conf: float, token_ids: list[int]
    ) -> "ExtractedField":
        return cls(fid, FieldStatus.DETECTED, value, conf, list(token_ids), None)

    @classmethod
    def missing(cls, fid: FieldId, reason: str) -> "ExtractedField":
        return cls(fid, FieldStatus.NOT_DETECTED, None, None, [], reason)

    def to_dict(self) -> dict:
        d: dict = {
            "name": self.field.name,
            "eye": self.field.eye.value,
            "status": self.status.value,
        }
        if self.status is FieldStatus.DETECTED:
            d["value"] = self.value
            d["conf"] = self.conf
            d["token_ids"] = list(self.token_ids)
        elif self.reason:
            d["reason"] = self.reason
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractedField":
        fid = FieldId(d["name"], Eye(d["eye"]))
        status = FieldStatus(d["status"])
        if status is FieldStatus.DETECTED:
            return cls.detected(fid, d["value"], d["conf"], d.get("token_ids", []))
        return cls.missing(fid, d.get("reason", ""))


def format_value(kind: ValueKind, value: int | float) -> str:
    """Render a scalar the way the synthetic reports print it."""
    if kind in (ValueKind.THICKNESS_UM, ValueKind.GCLIPL_UM, ValueKind.SIGNAL):
        return str(int(value))
    if kind is ValueKind.PERCENT:
        return str(int(value)) if float(value).is_integer() else f"{value:.2f}"
    # ratios, areas, volumes: two decimals with trailing zeros trimmed
    s = f"{value:.2f}".rstrip("0").rstrip(".")
    return s if s else "0"
