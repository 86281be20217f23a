"""Rule-based extraction of Ganglion-Cell analysis fields.

Covers signal strength and the average/minimum GCL+IPL thicknesses via
label-anchored rows, the six macular sectors via 60-degree wedges, and
the auxiliary fovea coordinates (reported but never scored).
"""

from __future__ import annotations

from octex.anchors import extract_column_pair_region, extract_label_value_region
from octex.extract import ExtractionResult, SlotConflict, finalize_fields, preflight
from octex.fields import (
    ExtractedField,
    Eye,
    ReportKind,
    ValueKind,
    parse_fovea,
)
from octex.extract_rnfl import _extract_grid, grid_from_region
from octex.geometry import WedgeGrid
from octex.layout import GeometryKind, LayoutTemplate, Region
from octex.tokens import OcrToken, TokenStream, reading_order


def extract_sectors(
    tokens: list[OcrToken], grid: WedgeGrid, eye: Eye
) -> tuple[list[ExtractedField], list[SlotConflict]]:
    """Assign the six GCL+IPL sector values by angular position."""
    return _extract_grid(
        tokens, grid, eye, lambda label: f"gcc.sector.{label}", ValueKind.GCLIPL_UM
    )


def extract_gcc_globals(
    stream: TokenStream, template: LayoutTemplate
) -> list[ExtractedField]:
    """Signal strength plus average/minimum GCL+IPL thickness, per eye."""
    by_crop = stream.by_crop()
    fields: list[ExtractedField] = []
    for region in template.regions:
        if region.geometry_kind is not GeometryKind.LABEL_VALUE or not region.expected_fields:
            continue
        fields.extend(
            extract_label_value_region(region, by_crop.get(region.name, []), template)
        )
    return fields


def _fovea_eye(region: Region, template: LayoutTemplate) -> Eye | None:
    rect_center_x = (region.rect[0] + region.rect[2]) / 2.0
    return template.column_of(rect_center_x)


def extract_fovea(
    stream: TokenStream, template: LayoutTemplate
) -> dict[str, tuple[int, int] | None]:
    """Read the per-eye fovea annotations from the field-less map regions."""
    by_crop = stream.by_crop()
    fovea: dict[str, tuple[int, int] | None] = {}
    for region in template.regions:
        if region.expected_fields or region.geometry_kind is not GeometryKind.LABEL_VALUE:
            continue
        eye = _fovea_eye(region, template)
        if eye is None:
            continue
        tokens = by_crop.get(region.name, [])
        coords = None
        for tok in reading_order(tokens):
            coords = parse_fovea(tok.text)
            if coords is not None:
                break
        if coords is None and tokens:
            # engines may split the annotation into word tokens; retry per row
            from octex.tokens import cluster_rows

            for row in cluster_rows(tokens):
                coords = parse_fovea(" ".join(t.text for t in row))
                if coords is not None:
                    break
        fovea[eye.value] = coords
    return fovea


def extract_gcc_report(stream: TokenStream, template: LayoutTemplate) -> ExtractionResult:
    """Extract all 18 scored GCC fields plus the auxiliary fovea output."""
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
            f, c = extract_sectors(tokens, grid_from_region(region), eye)
            collected.extend(f)
            conflicts.extend(c)

    return ExtractionResult(
        report_id=stream.report_id,
        kind=ReportKind.GCC,
        template_id=template.template_id,
        fields=finalize_fields(ReportKind.GCC, collected),
        slot_conflicts=conflicts,
        fovea=extract_fovea(stream, template),
    )
