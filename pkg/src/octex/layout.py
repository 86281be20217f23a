"""Declarative page-layout templates and the crop planner.

A template names the crop regions of one report page, the fields each
region is expected to yield, and the OD/OS column split. Coordinates are
calibration data, not code: the shipped defaults live in
octex/templates/ and can be re-measured against a sample report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from octex.fields import Eye, FieldId, ReportKind, all_fields

DEFAULT_TEMPLATE_FILES = {
    ReportKind.RNFL: "cirrus_rnfl_ou_v1.json",
    ReportKind.GCC: "cirrus_gcc_ou_v1.json",
}


class TemplateError(ValueError):
    """Template file violates the layout schema or its invariants."""


class GeometryKind(str, Enum):
    LABEL_VALUE = "label_value"    # label anchor + OD/OS value cells per row
    CLOCK_GRID = "clock_grid"      # 12 values around the peripapillary circle
    SECTOR_GRID = "sector_grid"    # 4 quadrant or 6 sector values around an annulus
    COLUMN_PAIR = "column_pair"    # OD/OS value columns bound by row order, no labels


@dataclass(frozen=True)
class GridSpec:
    """Placement parameters for a circular value grid within its crop."""

    center: tuple[float, float] = (0.5, 0.5)
    radius: float = 0.38
    mirror: bool = False


@dataclass(frozen=True)
class Region:
    name: str
    rect: tuple[float, float, float, float]  # page-normalized (x0, y0, x1, y1)
    geometry_kind: GeometryKind
    expected_fields: tuple[FieldId, ...]
    grid: GridSpec | None = None

    def to_page_x(self, crop_x: float) -> float:
        return self.rect[0] + crop_x * (self.rect[2] - self.rect[0])

    def eyes(self) -> set[Eye]:
        return {f.eye for f in self.expected_fields}


@dataclass(frozen=True)
class LayoutTemplate:
    template_id: str
    report_kind: ReportKind
    page_aspect: float
    od_column_x_max: float
    os_column_x_min: float
    regions: tuple[Region, ...]

    def region(self, name: str) -> Region:
        for r in self.regions:
            if r.name == name:
                return r
        raise KeyError(name)

    def region_names(self) -> set[str]:
        return {r.name for r in self.regions}

    def column_of(self, page_x: float) -> Eye | None:
        """OD/OS column membership of a page-space x; None in the dead zone."""
        if page_x <= self.od_column_x_max:
            return Eye.OD
        if page_x >= self.os_column_x_min:
            return Eye.OS
        return None


def _check_rect(name: str, rect: list) -> tuple[float, float, float, float]:
    if not isinstance(rect, (list, tuple)) or len(rect) != 4:
        raise TemplateError(f"region '{name}': rect must be [x0, y0, x1, y1]")
    x0, y0, x1, y1 = (float(v) for v in rect)
    for v in (x0, y0, x1, y1):
        if not 0.0 <= v <= 1.0:
            raise TemplateError(f"region '{name}': rect coordinate {v} outside [0,1]")
    if not (x0 < x1 and y0 < y1):
        raise TemplateError(f"region '{name}': rect must have positive width and height")
    return (x0, y0, x1, y1)


def _parse_region(raw: dict) -> Region:
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        raise TemplateError("region without a name")
    rect = _check_rect(name, raw.get("rect"))
    try:
        kind = GeometryKind(raw.get("geometry_kind"))
    except ValueError:
        raise TemplateError(
            f"region '{name}': unknown geometry_kind {raw.get('geometry_kind')!r}"
        ) from None

    fields: list[FieldId] = []
    for f in raw.get("expected_fields", []):
        try:
            fields.append(FieldId(f["name"], Eye(f["eye"])))
        except (KeyError, TypeError, ValueError) as e:
            raise TemplateError(f"region '{name}': bad expected_fields entry {f!r}: {e}")

    grid = None
    if "grid" in raw:
        g = raw["grid"]
        grid = GridSpec(
            center=tuple(g.get("center", (0.5, 0.5))),
            radius=float(g.get("radius", 0.38)),
            mirror=bool(g.get("mirror", False)),
        )
    if kind in (GeometryKind.CLOCK_GRID, GeometryKind.SECTOR_GRID):
        if grid is None:
            grid = GridSpec()
        grid_eyes = {f.eye for f in fields}
        if len(grid_eyes) != 1:
            raise TemplateError(f"region '{name}': grid regions must serve exactly one eye")
        stems = {f.name.rsplit(".", 1)[0] for f in fields}
        claimed = {f.name for f in fields}
        if kind is GeometryKind.CLOCK_GRID:
            wanted = {f"rnfl.clock.{h}" for h in range(1, 13)}
        elif stems == {"rnfl.quadrant"}:
            wanted = {f"rnfl.quadrant.{q}" for q in ("superior", "temporal", "nasal", "inferior")}
        else:
            wanted = {f"gcc.sector.{s}" for s in
                      ("superior", "superior_nasal", "inferior_nasal",
                       "inferior", "inferior_temporal", "superior_temporal")}
        if claimed != wanted:
            raise TemplateError(
                f"region '{name}': grid must claim the complete slot set "
                f"({len(wanted)} fields of one eye)"
            )

    return Region(name, rect, kind, tuple(fields), grid)


def load_template(data: bytes | str) -> LayoutTemplate:
    """Parse and validate a template document; enforces field coverage."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise TemplateError(f"template is not valid JSON: {e}") from e

    template_id = doc.get("template_id")
    if not isinstance(template_id, str) or not template_id:
        raise TemplateError("missing template_id")
    try:
        kind = ReportKind(doc.get("report_kind"))
    except ValueError:
        raise TemplateError(f"report_kind must be 'rnfl' or 'gcc', got {doc.get('report_kind')!r}")

    page_aspect = float(doc.get("page_aspect", 0.0))
    if page_aspect <= 0:
        raise TemplateError("page_aspect must be positive")

    od_max = float(doc.get("od_column_x_max", -1.0))
    os_min = float(doc.get("os_column_x_min", -1.0))
    if not (0.0 <= od_max <= 1.0 and 0.0 <= os_min <= 1.0):
        raise TemplateError("column boundaries must be within [0,1]")
    if od_max > os_min:
        raise TemplateError(
            f"od_column_x_max ({od_max}) must not exceed os_column_x_min ({os_min})"
        )

    raw_regions = doc.get("regions")
    if not isinstance(raw_regions, list) or not raw_regions:
        raise TemplateError("template must declare at least one region")
    regions = tuple(_parse_region(r) for r in raw_regions)

    names = [r.name for r in regions]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise TemplateError(f"duplicate region names: {', '.join(dupes)}")

    claimed: dict[FieldId, str] = {}
    for region in regions:
        for fid in region.expected_fields:
            if fid.kind is not kind:
                raise TemplateError(
                    f"region '{region.name}': field {fid.key()} does not belong to a "
                    f"{kind.value} report"
                )
            if fid in claimed:
                raise TemplateError(
                    f"field {fid.key()} claimed by both '{claimed[fid]}' and '{region.name}'"
                )
            claimed[fid] = region.name

    missing = [f for f in all_fields(kind) if f not in claimed]
    if missing:
        raise TemplateError(
            "incomplete field coverage; missing: " + ", ".join(f.key() for f in missing)
        )

    return LayoutTemplate(template_id, kind, page_aspect, od_max, os_min, regions)


def load_template_file(path: str | Path) -> LayoutTemplate:
    return load_template(Path(path).read_bytes())


def load_default_template(kind: ReportKind) -> LayoutTemplate:
    """Load the shipped default template for a report kind."""
    name = DEFAULT_TEMPLATE_FILES[kind]
    data = resources.files("octex.templates").joinpath(name).read_bytes()
    return load_template(data)


def plan_crops(template: LayoutTemplate) -> list[tuple[str, tuple[float, float, float, float]]]:
    """Emit the crop rectangles the OCR backend must process, one per region.

    Deterministic: ordered by region name; a pure function of the template.
    """
    return sorted(((r.name, r.rect) for r in template.regions), key=lambda e: e[0])


def crop_plan_json(template: LayoutTemplate) -> str:
    entries = [
        {"crop_id": name, "rect": list(rect)} for name, rect in plan_crops(template)
    ]
    return json.dumps(entries, indent=1) + "\n"
