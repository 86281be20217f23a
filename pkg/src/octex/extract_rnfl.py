"""Rule-based extraction of RNFL report fields.

Three strategies cover the page: label-anchored rows for the eight global
parameters, quadrant wedges, and the twelve-slot clock-hour grid whose
packed numerals are assigned by angle about the grid center.
"""

from __future__ import annotations

from octex.anchors import extract_column_pair_region, extract_label_value_region
from octex.extract import ExtractionResult, SlotConflict, finalize_fields, preflight
from octex.fields import (
    REASON_SLOT_EMPTY,
    ExtractedField,
    Eye,
    FieldId,
    ReportKind,
    ValueKind,
    parse_value,
)
from octex.geometry import WedgeGrid, assign_slots, clock_grid, quadrant_grid
from octex.layout import GeometryKind, LayoutTemplate, Region
from octex.tokens import OcrToken, TokenStream


def _numeric_tokens(tokens: list[OcrToken], kind: ValueKind) -> dict[int, int | float]:
    values: dict[int, int | float] = {}
    for tok in tokens:
        v = parse_value(kind, tok.text)
        if v is not None:
            values[tok.id] = v
    return values


def _extract_grid(
    tokens: list[OcrToken],
    grid: WedgeGrid,
    eye: Eye,
    name_for_label,
    value_kind: ValueKind,
) -> tuple[list[ExtractedField], list[SlotConflict]]:
    values = _numeric_tokens(tokens, value_kind)
    numeric = [t for t in tokens if t.id in values]
    assignment = assign_slots(grid, numeric)

    fields: list[ExtractedField] = []
    for label in grid.labels:
        fid = FieldId(name_for_label(label), eye)
        winner = assignment.winners.get(label)
        if winner is None:
            fields.append(ExtractedField.missing(fid, REASON_SLOT_EMPTY))
        else:
            fields.append(
                ExtractedField.detected(fid, values[winner.id], winner.conf, [winner.id])
            )

    conflicts = [
        SlotConflict(
            FieldId(name_for_label(label), eye),
            winner.id,
            winner.text,
            tuple(t.id for t in losers),
            tuple(t.text for t in losers),
        )
        for label, winner, losers in assignment.conflicts
    ]
    return fields, conflicts


def assign_clock_hours(
    tokens: list[OcrToken], grid: WedgeGrid, eye: Eye
) -> tuple[list[ExtractedField], list[SlotConflict]]:
    """Assign clock-hour thickness tokens to the twelve 30-degree slots.

    Every hour emits exactly one field; an empty slot is NotDetected and
    slot competition resolves by confidence with the loser reported.
    """
    return _extract_grid(
        tokens, grid, eye, lambda label: f"rnfl.clock.{label}", ValueKind.THICKNESS_UM
    )


def extract_quadrants(
    tokens: list[OcrToken], grid: WedgeGrid, eye: Eye
) -> tuple[list[ExtractedField], list[SlotConflict]]:
    """Assign the four quadrant thickness values by angular position."""
    return _extract_grid(
        tokens, grid, eye, lambda label: f"rnfl.quadrant.{label}", ValueKind.THICKNESS_UM
    )


def grid_from_region(region: Region) -> WedgeGrid:
    spec = region.grid
    center = spec.center if spec else (0.5, 0.5)
    mirror = spec.mirror if spec else False
    if region.geometry_kind is GeometryKind.CLOCK_GRID:
        return clock_grid(center, mirror)
    sample = region.expected_fields[0].name
    if ".quadrant." in sample:
        return quadrant_grid(center, mirror)
    from octex.geometry import sector_grid

    return sector_grid(center, mirror)


def extract_global_params(
    stream: TokenStream, template: LayoutTemplate
) -> list[ExtractedField]:
    """Extract the eight global parameters per eye from the table regions."""
    by_crop = stream.by_crop()
    fields: list[ExtractedField] = []
    for region in template.regions:
        if region.geometry_kind is not GeometryKind.LABEL_VALUE or not region.expected_fields:
            continue
        fields.extend(
            extract_label_value_region(region, by_crop.get(region.name, []), template)
        )
    return fields


def extract_rnfl_report(stream: TokenStream, template: LayoutTemplate) -> ExtractionResult:
    """Extract all 48 RNFL fields from one bound token stream."""
    preflight(stream, template)
    by_crop = stream.by_crop()
    collected: list[ExtractedField] = []
    conflicts: list[SlotConflict] = []

    for region in template.regions:
        tokens = by_crop.get(region.name, [])
        if region.geometry_kind is GeometryKind.LABEL_VALUE:
            if region.expected_fields:
                collected.extend(extract_label_value_region(region, tokens, template))
        elif region.geometry_kind is GeometryKind.COLUMN_PAIR:
            collected.extend(extract_column_pair_region(region, tokens, template))
        else:
            eye = next(iter(region.eyes()))
            grid = grid_from_region(region)
            if region.geometry_kind is GeometryKind.CLOCK_GRID:
                f, c = assign_clock_hours(tokens, grid, eye)
            else:
                f, c = extract_quadrants(tokens, grid, eye)
            collected.extend(f)
            conflicts.extend(c)

    return ExtractionResult(
        report_id=stream.report_id,
        kind=ReportKind.RNFL,
        template_id=template.template_id,
        fields=finalize_fields(ReportKind.RNFL, collected),
        slot_conflicts=conflicts,
    )
