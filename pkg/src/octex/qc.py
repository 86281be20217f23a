"""Post-extraction quality control for the recurring OCR failure patterns.

Detectors cover implausible values, low-confidence reads, laterally
swapped OD/OS pairs, clock-hour sequence shifts, and digit flips
(horizontal reversal and 180-degree rotation). QC never rewrites a
detected value: Reject flags downgrade the field to NotDetected and Warn
flags annotate only.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

from octex.extract import ExtractionResult, SlotConflict
from octex.fields import (
    REASON_QC_REJECT,
    ExtractedField,
    Eye,
    FieldId,
    FieldStatus,
    ValueKind,
)
from octex.layout import LayoutTemplate
from octex.tokens import TokenStream

DEFAULT_LOW_CONF_THRESHOLD = 0.90

# Robust-outlier screen: a grid value is suspect when it falls outside
# median +/- OUTLIER_IQR_MULTIPLier * IQR of its same-grid peers.
OUTLIER_IQR_MULTIPLIER = 3.0
MIN_NEIGHBORS_FOR_OUTLIER = 5


class QcKind(str, Enum):
    OUT_OF_RANGE = "out_of_range"
    LOW_CONFIDENCE = "low_confidence"
    OD_OS_SWAP_SUSPECT = "od_os_swap_suspect"
    SEQUENCE_SHIFT_SUSPECT = "sequence_shift_suspect"
    HORIZONTAL_FLIP_SUSPECT = "horizontal_flip_suspect"
    VERTICAL_FLIP_SUSPECT = "vertical_flip_suspect"
    SLOT_CONFLICT = "slot_conflict"


class QcSeverity(str, Enum):
    WARN = "warn"
    REJECT = "reject"


@dataclass(frozen=True)
class QcFlag:
    report_id: str
    kind: QcKind
    severity: QcSeverity
    fields: tuple[FieldId, ...]
    detail: str

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "severity": self.severity.value,
            "fields": [{"name": f.name, "eye": f.eye.value} for f in self.fields],
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, report_id: str, d: dict) -> "QcFlag":
        return cls(
            report_id,
            QcKind(d["kind"]),
            QcSeverity(d["severity"]),
            tuple(FieldId(f["name"], Eye(f["eye"])) for f in d["fields"]),
            d.get("detail", ""),
        )


# --- range policy -----------------------------------------------------------

DEFAULT_RANGE_BOUNDS: dict[str, tuple[float, float]] = {
    "thickness_um": (0, 300),
    "ratio": (0, 1),
    "rim_area_mm2": (0, 5),
    "disc_area_mm2": (0.2, 6),
    "cup_volume_mm3": (0, 2),
    "symmetry_pct": (0, 100),
    "signal": (0, 10),
    "gclipl_um": (0, 250),
}

_POLICY_KEY_BY_FIELD_NAME = {
    "rnfl.rim_area": "rim_area_mm2",
    "rnfl.disc_area": "disc_area_mm2",
    "rnfl.cup_volume": "cup_volume_mm3",
    "rnfl.symmetry": "symmetry_pct",
}

_POLICY_KEY_BY_VALUE_KIND = {
    ValueKind.THICKNESS_UM: "thickness_um",
    ValueKind.GCLIPL_UM: "gclipl_um",
    ValueKind.RATIO: "ratio",
    ValueKind.SIGNAL: "signal",
    ValueKind.PERCENT: "symmetry_pct",
}


@dataclass(frozen=True)
class RangePolicy:
    """Clinical-plausibility intervals, closed on both ends."""

    bounds: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_RANGE_BOUNDS)
    )

    def __post_init__(self) -> None:
        for key, (lo, hi) in self.bounds.items():
            if not lo < hi:
                raise ValueError(f"range policy '{key}': lower {lo} must be < upper {hi}")

    def bounds_for(self, fid: FieldId) -> tuple[float, float]:
        key = _POLICY_KEY_BY_FIELD_NAME.get(fid.name)
        if key is None:
            key = _POLICY_KEY_BY_VALUE_KIND[fid.value_kind]
        return self.bounds[key]

    def in_range(self, fid: FieldId, value: float) -> bool:
        lo, hi = self.bounds_for(fid)
        return lo <= value <= hi

    @classmethod
    def from_json(cls, data: bytes | str) -> "RangePolicy":
        doc = json.loads(data)
        bounds = dict(DEFAULT_RANGE_BOUNDS)
        for key, pair in doc.items():
            if key not in bounds:
                raise ValueError(f"range policy: unknown interval '{key}'")
            bounds[key] = (float(pair[0]), float(pair[1]))
        return cls(bounds)

    @classmethod
    def from_file(cls, path: str | Path) -> "RangePolicy":
        return cls.from_json(Path(path).read_bytes())


# --- digit flips -------------------------------------------------------------

_VFLIP_MAP = {"0": "0", "1": "1", "6": "9", "8": "8", "9": "6"}


def hflip(digits: str) -> str:
    """Horizontal flip of a digit string: plain reversal (86 -> 68)."""
    return digits[::-1]


def vflip(digits: str) -> Optional[str]:
    """180-degree rotation of a digit string (66 -> 99).

    Returns None when any digit lies outside the rotatable set {0,1,6,8,9}.
    """
    if any(d not in _VFLIP_MAP for d in digits):
        return None
    return "".join(_VFLIP_MAP[d] for d in reversed(digits))


# --- detectors ---------------------------------------------------------------

def check_ranges(
    report_id: str, fields: Iterable[ExtractedField], policy: RangePolicy
) -> list[QcFlag]:
    """One OutOfRange Reject per detected value outside its interval."""
    flags = []
    for f in fields:
        if f.status is not FieldStatus.DETECTED:
            continue
        if not policy.in_range(f.field, float(f.value)):
            lo, hi = policy.bounds_for(f.field)
            flags.append(
                QcFlag(
                    report_id,
                    QcKind.OUT_OF_RANGE,
                    QcSeverity.REJECT,
                    (f.field,),
                    f"value {f.value} outside [{lo}, {hi}]",
                )
            )
    return flags


def check_low_confidence(
    report_id: str,
    fields: Iterable[ExtractedField],
    threshold: float = DEFAULT_LOW_CONF_THRESHOLD,
) -> list[QcFlag]:
    flags = []
    for f in fields:
        if f.status is FieldStatus.DETECTED and f.conf is not None and f.conf < threshold:
            flags.append(
                QcFlag(
                    report_id,
                    QcKind.LOW_CONFIDENCE,
                    QcSeverity.WARN,
                    (f.field,),
                    f"confidence {f.conf:.3f} below {threshold:.2f}",
                )
            )
    return flags


def detect_od_os_swap(
    report_id: str,
    fields: list[ExtractedField],
    stream: TokenStream,
    template: LayoutTemplate,
) -> list[QcFlag]:
    """Flag field pairs whose provenance sits on the wrong side of the page.

    The pair binder trusts emission order; this check is the independent
    geometric route. A pair is suspect only when the OD value's supporting
    tokens all lie right of the OS column start and the OS value's all lie
    left of the OD column end.
    """
    tokens_by_id = {t.id: t for t in stream.tokens}
    regions_by_name = {r.name: r for r in template.regions}

    def page_xs(f: ExtractedField) -> list[float]:
        xs = []
        for tid in f.token_ids:
            tok = tokens_by_id.get(tid)
            if tok is None:
                continue
            region = regions_by_name.get(tok.crop_id)
            if region is None:
                continue
            xs.append(region.to_page_x(tok.x_center))
        return xs

    by_key: dict[tuple[str, Eye], ExtractedField] = {
        (f.field.name, f.field.eye): f for f in fields
    }
    flags = []
    for name in sorted({f.field.name for f in fields}):
        od = by_key.get((name, Eye.OD))
        os_ = by_key.get((name, Eye.OS))
        if od is None or os_ is None:
            continue
        if od.status is not FieldStatus.DETECTED or os_.status is not FieldStatus.DETECTED:
            continue
        od_xs, os_xs = page_xs(od), page_xs(os_)
        if not od_xs or not os_xs:
            continue
        if min(od_xs) >= template.os_column_x_min and max(os_xs) <= template.od_column_x_max:
            flags.append(
                QcFlag(
                    report_id,
                    QcKind.OD_OS_SWAP_SUSPECT,
                    QcSeverity.WARN,
                    (od.field, os_.field),
                    f"OD value {od.value} read from the OS column and "
                    f"OS value {os_.value} from the OD column",
                )
            )
    return flags


def detect_sequence_shift(
    report_id: str,
    clock_fields: list[ExtractedField],
    conflicts: list[SlotConflict],
) -> list[QcFlag]:
    """Flag the conflict-next-to-hole pattern left by a one-slot shift.

    A slot conflict at hour h with hour h-1 empty (12 wrapping to 1) is
    the signature of a value drifting one increment ahead in the sequence.
    """
    if not clock_fields:
        return []
    eye = clock_fields[0].field.eye
    status: dict[int, FieldStatus] = {}
    for f in clock_fields:
        hour = int(f.field.name.rsplit(".", 1)[1])
        status[hour] = f.status
    conflicted = {
        int(c.field.name.rsplit(".", 1)[1])
        for c in conflicts
        if c.field.eye is eye and c.field.name.startswith("rnfl.clock.")
    }

    flags = []
    for h in range(1, 13):
        prev = 12 if h == 1 else h - 1
        if h in conflicted and status.get(prev) is FieldStatus.NOT_DETECTED:
            flags.append(
                QcFlag(
                    report_id,
                    QcKind.SEQUENCE_SHIFT_SUSPECT,
                    QcSeverity.WARN,
                    (FieldId(f"rnfl.clock.{prev}", eye), FieldId(f"rnfl.clock.{h}", eye)),
                    f"slot conflict at hour {h} with hour {prev} empty; values may "
                    f"sit one increment ahead",
                )
            )
    return flags


def _is_outlier(value: float, neighbors: list[float]) -> bool:
    if len(neighbors) < MIN_NEIGHBORS_FOR_OUTLIER:
        return False
    med = statistics.median(neighbors)
    q = statistics.quantiles(neighbors, n=4, method="inclusive")
    iqr = q[2] - q[0]
    spread = OUTLIER_IQR_MULTIPLIER * iqr
    return value < med - spread or value > med + spread


def flag_flip_candidates(
    report_id: str,
    f: ExtractedField,
    neighbor_values: list[float],
    policy: RangePolicy,
) -> list[QcFlag]:
    """Flag a suspect integer value whose flip variant would be plausible.

    Suspicion means out of range or a robust outlier among same-grid
    peers; the candidate correction rides along in the detail and is
    never applied.
    """
    if f.status is not FieldStatus.DETECTED or not isinstance(f.value, int):
        return []
    value = f.value
    suspect = not policy.in_range(f.field, value) or _is_outlier(value, neighbor_values)
    if not suspect:
        return []

    digits = str(value)
    flags = []
    for kind, variant in (
        (QcKind.HORIZONTAL_FLIP_SUSPECT, hflip(digits)),
        (QcKind.VERTICAL_FLIP_SUSPECT, vflip(digits)),
    ):
        if variant is None or variant == digits:
            continue
        candidate = int(variant)
        if policy.in_range(f.field, candidate) and not _is_outlier(
            candidate, neighbor_values
        ):
            flags.append(
                QcFlag(
                    report_id,
                    kind,
                    QcSeverity.WARN,
                    (f.field,),
                    f"value {value} suspect; flip candidate {variant}",
                )
            )
    return flags


# --- report-level driver -----------------------------------------------------

_GRID_STEMS = ("rnfl.clock.", "gcc.sector.")


def _grid_neighbor_values(
    fields: list[ExtractedField], f: ExtractedField
) -> list[float]:
    stem = next((s for s in _GRID_STEMS if f.field.name.startswith(s)), None)
    if stem is None:
        return []
    return [
        float(g.value)
        for g in fields
        if g.field.eye is f.field.eye
        and g.field.name.startswith(stem)
        and g.field != f.field
        and g.status is FieldStatus.DETECTED
    ]


def validate_report(
    result: ExtractionResult,
    stream: TokenStream,
    template: LayoutTemplate,
    policy: RangePolicy | None = None,
    low_conf_threshold: float = DEFAULT_LOW_CONF_THRESHOLD,
) -> tuple[ExtractionResult, list[QcFlag]]:
    """Run every detector over one report and apply Reject downgrades.

    Returns a new result carrying the flags under qc_flags; Reject flags
    force their fields to NotDetected, Warn flags leave values intact.
    """
    policy = policy or RangePolicy()
    rid = result.report_id
    fields = result.fields

    flags: list[QcFlag] = [
        QcFlag(
            rid,
            QcKind.SLOT_CONFLICT,
            QcSeverity.WARN,
            (c.field,),
            f"tokens {list(c.loser_token_ids)} ({', '.join(c.loser_texts)}) lost slot "
            f"to token {c.winner_token_id} ({c.winner_text})",
        )
        for c in result.slot_conflicts
    ]
    flags += check_ranges(rid, fields, policy)
    flags += check_low_confidence(rid, fields, low_conf_threshold)
    flags += detect_od_os_swap(rid, fields, stream, template)
    for eye in (Eye.OD, Eye.OS):
        clock = [
            f
            for f in fields
            if f.field.eye is eye and f.field.name.startswith("rnfl.clock.")
        ]
        flags += detect_sequence_shift(rid, clock, result.slot_conflicts)
    for f in fields:
        flags += flag_flip_candidates(rid, f, _grid_neighbor_values(fields, f), policy)

    rejected = {
        fid for flag in flags if flag.severity is QcSeverity.REJECT for fid in flag.fields
    }
    new_fields = [
        ExtractedField.missing(f.field, REASON_QC_REJECT) if f.field in rejected else f
        for f in fields
    ]
    validated = replace(
        result, fields=new_fields, qc_flags=[fl.to_dict() for fl in flags]
    )
    return validated, flags


QC_CSV_HEADER = ["report_id", "kind", "severity", "fields", "detail"]


def flags_to_csv(flags: list[QcFlag]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(QC_CSV_HEADER)
    for fl in flags:
        writer.writerow(
            [
                fl.report_id,
                fl.kind.value,
                fl.severity.value,
                ";".join(f.key() for f in fl.fields),
                fl.detail,
            ]
        )
    return buf.getvalue()
