"""Report-level extraction driver and its output records.

Binds a token stream to a layout template, dispatches each region to the
matching strategy (label-anchored rows or angular grids), and always emits
the complete field set for the report kind: missing data surfaces as
NotDetected entries, never as absent rows.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from octex.fields import Eye, ExtractedField, FieldId, FieldStatus, ReportKind, field_names
from octex.layout import LayoutTemplate
from octex.tokens import TokenStream


class BindError(ValueError):
    """Token stream is incompatible with the layout template."""


@dataclass(frozen=True)
class SlotConflict:
    """Two or more tokens competed for one grid slot; the loser is kept
    for QC instead of being silently discarded."""

    field: FieldId
    winner_token_id: int
    winner_text: str
    loser_token_ids: tuple[int, ...]
    loser_texts: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "name": self.field.name,
            "eye": self.field.eye.value,
            "winner_token_id": self.winner_token_id,
            "winner_text": self.winner_text,
            "loser_token_ids": list(self.loser_token_ids),
            "loser_texts": list(self.loser_texts),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SlotConflict":
        return cls(
            FieldId(d["name"], Eye(d["eye"])),
            d["winner_token_id"],
            d.get("winner_text", ""),
            tuple(d["loser_token_ids"]),
            tuple(d.get("loser_texts", ())),
        )


@dataclass
class ExtractionResult:
    report_id: str
    kind: ReportKind
    template_id: str
    fields: list[ExtractedField]
    slot_conflicts: list[SlotConflict] = field(default_factory=list)
    fovea: dict[str, tuple[int, int] | None] = field(default_factory=dict)
    qc_flags: list[dict] = field(default_factory=list)

    def field_map(self) -> dict[FieldId, ExtractedField]:
        return {f.field: f for f in self.fields}

    def to_dict(self) -> dict:
        d: dict = {
            "report_id": self.report_id,
            "kind": self.kind.value,
            "template_id": self.template_id,
            "fields": [f.to_dict() for f in self.fields],
            "slot_conflicts": [c.to_dict() for c in self.slot_conflicts],
        }
        if self.kind is ReportKind.GCC:
            d["fovea"] = {
                eye: list(xy) if xy else None for eye, xy in sorted(self.fovea.items())
            }
        if self.qc_flags:
            d["qc_flags"] = self.qc_flags
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractionResult":
        fovea = {
            eye: tuple(xy) if xy else None
            for eye, xy in (d.get("fovea") or {}).items()
        }
        return cls(
            report_id=d["report_id"],
            kind=ReportKind(d["kind"]),
            template_id=d.get("template_id", ""),
            fields=[ExtractedField.from_dict(f) for f in d["fields"]],
            slot_conflicts=[SlotConflict.from_dict(c) for c in d.get("slot_conflicts", [])],
            fovea=fovea,
            qc_flags=list(d.get("qc_flags", [])),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def canonical_field_order(kind: ReportKind) -> list[FieldId]:
    return [FieldId(name, eye) for name in field_names(kind) for eye in (Eye.OD, Eye.OS)]


def finalize_fields(kind: ReportKind, collected: list[ExtractedField]) -> list[ExtractedField]:
    """Order extracted fields canonically, guaranteeing full coverage."""
    by_id = {f.field: f for f in collected}
    expected = canonical_field_order(kind)
    missing = [fid for fid in expected if fid not in by_id]
    if missing:
        raise BindError(
            "extraction did not cover: " + ", ".join(f.key() for f in missing)
        )
    extras = set(by_id) - set(expected)
    if extras:
        raise BindError(
            "extraction produced unexpected fields: "
            + ", ".join(sorted(f.key() for f in extras))
        )
    return [by_id[fid] for fid in expected]


def preflight(stream: TokenStream, template: LayoutTemplate) -> None:
    if stream.report_kind is not template.report_kind:
        raise BindError(
            f"stream kind '{stream.report_kind.value}' does not match template "
            f"'{template.template_id}' ({template.report_kind.value})"
        )
    unknown = sorted({t.crop_id for t in stream.tokens} - template.region_names())
    if unknown:
        raise BindError(
            f"stream references crops absent from template "
            f"'{template.template_id}': {', '.join(unknown)}"
        )


def extract_report(stream: TokenStream, template: LayoutTemplate) -> ExtractionResult:
    """Extract every field of the stream's report kind."""
    from octex.extract_gcc import extract_gcc_report
    from octex.extract_rnfl import extract_rnfl_report

    if stream.report_kind is ReportKind.RNFL:
        return extract_rnfl_report(stream, template)
    return extract_gcc_report(stream, template)


EXTRACTION_CSV_HEADER = ["report_id", "name", "eye", "status", "value", "conf"]


def results_to_csv(results: list[ExtractionResult]) -> str:
    """Flat per-field CSV across reports, canonically ordered."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EXTRACTION_CSV_HEADER)
    for result in sorted(results, key=lambda r: r.report_id):
        for f in result.fields:
            detected = f.status is FieldStatus.DETECTED
            writer.writerow(
                [
                    result.report_id,
                    f.field.name,
                    f.field.eye.value,
                    f.status.value,
                    "" if not detected else f.value,
                    "" if not detected else f"{f.conf:.4f}",
                ]
            )
    return buf.getvalue()
