"""Score extraction output against gold labels, per field and eye.

Produces detection counts and precision (positive predictive value) in
the same row layout the report tables use: one display row per parameter
with OD and OS column pairs.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Optional

from octex.extract import ExtractionResult
from octex.fields import (
    GCC_SECTORS,
    QUADRANTS,
    Eye,
    FieldId,
    FieldStatus,
    ReportKind,
    ValueKind,
    field_names,
)


class ScoreInputError(ValueError):
    """Predictions reference reports missing from the gold set."""

    def __init__(self, orphans: list[str]):
        self.orphans = orphans
        super().__init__(
            "predictions for reports absent from gold: " + ", ".join(orphans)
        )


class GoldFormatError(ValueError):
    """Gold CSV is malformed."""


@dataclass(frozen=True)
class GoldRecord:
    """Ground-truth value for one report field; raw text keeps the printed
    decimal precision for comparison."""

    report_id: str
    field: FieldId
    raw_value: str


@dataclass
class PrecisionRow:
    field: FieldId
    detected: int = 0
    correct: int = 0

    @property
    def precision(self) -> Optional[float]:
        if self.detected == 0:
            return None
        return self.correct / self.detected

    def to_dict(self) -> dict:
        return {
            "name": self.field.name,
            "eye": self.field.eye.value,
            "detected": self.detected,
            "correct": self.correct,
            "precision": self.precision,
        }


_INT_KINDS = {ValueKind.THICKNESS_UM, ValueKind.GCLIPL_UM, ValueKind.SIGNAL}


def values_match(fid: FieldId, predicted: int | float, gold_raw: str) -> bool:
    """Integer fields compare exactly; decimal fields compare after
    rounding the prediction to the gold value's printed precision, so
    "0.80" matches a gold "0.8"."""
    try:
        gold = Decimal(gold_raw)
    except InvalidOperation:
        return False
    pred = Decimal(str(predicted))
    if fid.value_kind in _INT_KINDS:
        return pred == gold
    exponent = gold.as_tuple().exponent
    target = Decimal(1) if exponent >= 0 else gold
    return pred.quantize(target, rounding=ROUND_HALF_EVEN) == gold


def score(
    predictions: Iterable[ExtractionResult], gold: Iterable[GoldRecord]
) -> list[PrecisionRow]:
    """Tally detections and exact matches into one row per field.

    Detected counts every status=detected prediction; correct requires a
    matching gold value. A detection whose report lacks that gold field
    counts as detected-but-incorrect. Row order follows the report tables.
    """
    gold_by_key: dict[tuple[str, FieldId], str] = {}
    gold_reports: set[str] = set()
    for g in gold:
        gold_by_key[(g.report_id, g.field)] = g.raw_value
        gold_reports.add(g.report_id)

    predictions = list(predictions)
    orphans = sorted({p.report_id for p in predictions} - gold_reports)
    if orphans:
        raise ScoreInputError(orphans)

    kinds = {p.kind for p in predictions}
    rows: dict[FieldId, PrecisionRow] = {}
    for kind in sorted(kinds, key=lambda k: k.value, reverse=True):  # rnfl, then gcc
        for name in field_names(kind):
            for eye in (Eye.OD, Eye.OS):
                fid = FieldId(name, eye)
                rows[fid] = PrecisionRow(fid)

    for p in predictions:
        for f in p.fields:
            if f.status is not FieldStatus.DETECTED:
                continue
            row = rows.get(f.field)
            if row is None:
                continue
            row.detected += 1
            raw = gold_by_key.get((p.report_id, f.field))
            if raw is not None and values_match(f.field, f.value, raw):
                row.correct += 1

    return list(rows.values())


# --- rendering ---------------------------------------------------------------

RNFL_DISPLAY_LABELS = {
    "rnfl.signal_strength": "Signal Strength",
    "rnfl.avg_thickness": "Average RNFL Thickness",
    "rnfl.symmetry": "RNFL Symmetry",
    "rnfl.rim_area": "Rim Area",
    "rnfl.disc_area": "Disc Area",
    "rnfl.avg_cd_ratio": "Average C/D Ratio",
    "rnfl.vert_cd_ratio": "Vertical C/D Ratio",
    "rnfl.cup_volume": "Cup Volume",
    **{f"rnfl.quadrant.{q}": f"{q.capitalize()} Quadrant" for q in QUADRANTS},
    **{f"rnfl.clock.{h}": f"Clock Hour {h}" for h in range(1, 13)},
}

GCC_DISPLAY_LABELS = {
    "gcc.signal_strength": "Signal Strength",
    **{
        f"gcc.sector.{s}": s.replace("_", "-").title() + " Sector"
        for s in GCC_SECTORS
    },
    "gcc.avg_gclipl": "Average GCL+IPL Thickness",
    "gcc.min_gclipl": "Minimum GCL+IPL Thickness",
}

UNDEFINED_PRECISION = "—"  # em dash: no detections, precision undefined


def display_label(name: str) -> str:
    return {**RNFL_DISPLAY_LABELS, **GCC_DISPLAY_LABELS}[name]


def _format_precision(p: Optional[float]) -> str:
    return UNDEFINED_PRECISION if p is None else f"{p:.4f}"


def render_table(rows: list[PrecisionRow], kind: ReportKind) -> str:
    """Fixed-width text table with OD and OS precision/detected pairs.

    Byte-identical for identical input; rows are re-ordered canonically so
    input order never matters.
    """
    by_key = {(r.field.name, r.field.eye): r for r in rows}
    names = field_names(kind)
    missing = [
        f"{n}:{e.value}"
        for n in names
        for e in (Eye.OD, Eye.OS)
        if (n, e) not in by_key
    ]
    if missing:
        raise ValueError("precision rows missing fields: " + ", ".join(missing))

    label_width = max(len(display_label(n)) for n in names)
    header_1 = f"{'':<{label_width}}  {'OD':>20}  {'OS':>20}"
    header_2 = (
        f"{'Parameter':<{label_width}}  "
        f"{'Precision':>9} {'Detected':>10}  "
        f"{'Precision':>9} {'Detected':>10}"
    )
    sep = "-" * len(header_2)
    lines = [header_1, header_2, sep]
    for name in names:
        od = by_key[(name, Eye.OD)]
        os_ = by_key[(name, Eye.OS)]
        lines.append(
            f"{display_label(name):<{label_width}}  "
            f"{_format_precision(od.precision):>9} {od.detected:>10}  "
            f"{_format_precision(os_.precision):>9} {os_.detected:>10}"
        )
    return "\n".join(lines) + "\n"


def rows_to_json(rows: list[PrecisionRow]) -> str:
    ordered = sorted(rows, key=lambda r: (r.field.kind.value, _row_sort_key(r.field)))
    return json.dumps([r.to_dict() for r in ordered], indent=1) + "\n"


def rows_to_csv(rows: list[PrecisionRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["kind", "name", "eye", "detected", "correct", "precision"])
    ordered = sorted(rows, key=lambda r: (r.field.kind.value, _row_sort_key(r.field)))
    for r in ordered:
        writer.writerow(
            [
                r.field.kind.value,
                r.field.name,
                r.field.eye.value,
                r.detected,
                r.correct,
                "" if r.precision is None else f"{r.precision:.4f}",
            ]
        )
    return buf.getvalue()


def _row_sort_key(fid: FieldId) -> tuple[int, int]:
    names = field_names(fid.kind)
    return (names.index(fid.name), 0 if fid.eye is Eye.OD else 1)


# --- gold CSV ----------------------------------------------------------------

GOLD_CSV_HEADER = ["report_id", "kind", "name", "eye", "value"]


def write_gold_csv(records: list[GoldRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GOLD_CSV_HEADER)
    for g in records:
        writer.writerow(
            [g.report_id, g.field.kind.value, g.field.name, g.field.eye.value, g.raw_value]
        )
    return buf.getvalue()


def load_gold_csv(data: str) -> list[GoldRecord]:
    reader = csv.reader(io.StringIO(data))
    try:
        header = next(reader)
    except StopIteration:
        raise GoldFormatError("gold CSV is empty")
    if header != GOLD_CSV_HEADER:
        raise GoldFormatError(
            f"gold CSV header must be {','.join(GOLD_CSV_HEADER)}, got {','.join(header)}"
        )
    records = []
    seen: set[tuple[str, FieldId]] = set()
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise GoldFormatError(f"gold CSV line {line_no}: expected 5 columns")
        report_id, _kind, name, eye, value = row
        try:
            fid = FieldId(name, Eye(eye))
        except ValueError as e:
            raise GoldFormatError(f"gold CSV line {line_no}: {e}") from e
        key = (report_id, fid)
        if key in seen:
            raise GoldFormatError(
                f"gold CSV line {line_no}: duplicate gold value for {report_id} {fid.key()}"
            )
        seen.add(key)
        records.append(GoldRecord(report_id, fid, value))
    return records


def load_gold_file(path: str | Path) -> list[GoldRecord]:
    return load_gold_csv(Path(path).read_text(encoding="utf-8"))
