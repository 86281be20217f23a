import json
import math
import subprocess
import sys
from pathlib import Path

import pytest
from PIL import Image, ImageDraw, ImageFont

PAGE_PX = (1275, 1650)  # US letter at 150 dpi
PAGE_PT = (612, 792)
OD_X, OS_X = 0.45, 0.57  # page-normalized value column centers
LABEL_SIZE, VALUE_SIZE = 16, 22


def primary_cli(*args):
    """Invoke the extraction toolkit CLI through its file interface."""
    return subprocess.run(
        [sys.executable, "-m", "octex.cli", *map(str, args)],
        capture_output=True,
        text=True,
    )


def backend_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "octex_backend.cli", *map(str, args)],
        capture_output=True,
        text=True,
    )


def _font(size):
    from matplotlib import font_manager

    return ImageFont.truetype(font_manager.findfont("DejaVu Sans"), size)


class PageSpec:
    """Declarative text placements in page-normalized coordinates."""

    def __init__(self):
        self.items = []  # (text, x, y, anchor, px_size)

    def left(self, text, x, y, size=LABEL_SIZE):
        self.items.append((text, x, y, "left", size))

    def center(self, text, x, y, size=VALUE_SIZE):
        self.items.append((text, x, y, "center", size))


def _rows(rect, count):
    y0, y1 = rect[1], rect[3]
    return [(y0 + (i + 0.5) * (y1 - y0) / count) for i in range(count)]


def _ring(rect, radius, slot_angle, mirror):
    cx = (rect[0] + rect[2]) / 2
    theta = math.radians(slot_angle)
    sx = math.sin(theta) * (-1 if mirror else 1)
    x = cx + radius * (rect[2] - rect[0]) * sx
    y0, y1 = rect[1], rect[3]
    y = (y0 + y1) / 2 - radius * (y1 - y0) * math.cos(theta)
    return x, y


RNFL_VALUES = {
    "signal": ("8/10", "9/10"),
    "avg": ("85", "92"),
    "symmetry": ("87%", "88%"),
    "rim": ("1.31", "1.35"),
    "disc": ("1.91", "1.88"),
    "avg_cd": ("0.45", "0.48"),
    "vert_cd": ("0.42", "0.46"),
    "cup": ("0.12", "0.13"),
    "quadrants_od": {"superior": 120, "nasal": 85, "inferior": 130, "temporal": 72},
    "quadrants_os": {"superior": 118, "nasal": 88, "inferior": 128, "temporal": 75},
    "clock_od": {h: 60 + h for h in range(1, 13)},
    "clock_os": {h: 80 + h for h in range(1, 13)},
}


def rnfl_page_spec(plan) -> PageSpec:
    rects = {e["crop_id"]: e["rect"] for e in plan}
    spec = PageSpec()
    v = RNFL_VALUES

    y = _rows(rects["signal"], 1)[0]
    spec.left("Signal Strength:", 0.31, y)
    spec.center(v["signal"][0], OD_X, y)
    spec.center(v["signal"][1], OS_X, y)

    def table(crop, rows):
        for (label, od, os_), y in zip(rows, _rows(rects[crop], len(rows))):
            spec.left(label, rects[crop][0] + 0.006, y)
            spec.center(od, OD_X, y)
            spec.center(os_, OS_X, y)

    table("thickness_summary", [
        ("Average RNFL Thickness", *v["avg"]),
        ("RNFL Symmetry", *v["symmetry"]),
    ])
    table("onh_areas", [("Rim Area", *v["rim"]), ("Disc Area", *v["disc"])])
    table("cd_ratios", [
        ("Average C/D Ratio", *v["avg_cd"]),
        ("Vertical C/D Ratio", *v["vert_cd"]),
    ])
    table("cup_volume", [("Cup Volume", *v["cup"])])

    quadrant_angles = {"superior": 0, "nasal": 90, "inferior": 180, "temporal": 270}
    for crop, mirror in (("quadrants_od", False), ("quadrants_os", True)):
        for name, value in v[crop].items():
            x, y = _ring(rects[crop], 0.30, quadrant_angles[name], mirror)
            spec.center(str(value), x, y)
    for crop, mirror in (("clock_od", False), ("clock_os", True)):
        for hour, value in v[crop].items():
            x, y = _ring(rects[crop], 0.38, (hour % 12) * 30, mirror)
            spec.center(str(value), x, y)
    return spec


GCC_VALUES = {
    "signal": ("8/10", "9/10"),
    "avg": ("80", "81"),
    "minimum": ("76", "78"),
    "sectors_od": {
        "superior": 82, "superior_nasal": 84, "inferior_nasal": 86,
        "inferior": 81, "inferior_temporal": 83, "superior_temporal": 85,
    },
    "sectors_os": {
        "superior": 79, "superior_nasal": 81, "inferior_nasal": 83,
        "inferior": 78, "inferior_temporal": 80, "superior_temporal": 82,
    },
    "fovea_od": "Fovea: 105, 106",
    "fovea_os": "Fovea: 102, 106",
}

SECTOR_ANGLES = {
    "superior": 0, "superior_nasal": 60, "inferior_nasal": 120,
    "inferior": 180, "inferior_temporal": 240, "superior_temporal": 300,
}


def gcc_page_spec(plan) -> PageSpec:
    rects = {e["crop_id"]: e["rect"] for e in plan}
    spec = PageSpec()
    v = GCC_VALUES

    y = _rows(rects["signal"], 1)[0]
    spec.left("Signal Strength:", 0.31, y)
    spec.center(v["signal"][0], OD_X, y)
    spec.center(v["signal"][1], OS_X, y)

    for (label, od, os_), y in zip(
        [
            ("Average GCL + IPL Thickness", *v["avg"]),
            ("Minimum GCL + IPL Thickness", *v["minimum"]),
        ],
        _rows(rects["gclipl_table"], 2),
    ):
        spec.left(label, rects["gclipl_table"][0] + 0.006, y)
        spec.center(od, OD_X, y)
        spec.center(os_, OS_X, y)

    for crop, mirror in (("sectors_od", False), ("sectors_os", True)):
        for name, value in v[crop].items():
            x, y = _ring(rects[crop], 0.34, SECTOR_ANGLES[name], mirror)
            spec.center(str(value), x, y)

    for crop in ("fovea_od", "fovea_os"):
        rect = rects[crop]
        spec.left(v[crop], rect[0] + 0.01, (rect[1] + rect[3]) / 2)
    return spec


def render_png(spec: PageSpec, path: Path):
    image = Image.new("RGB", PAGE_PX, "white")
    draw = ImageDraw.Draw(image)
    for text, x, y, anchor, size in spec.items:
        px, py = x * PAGE_PX[0], y * PAGE_PX[1]
        draw.text((px, py), text, font=_font(size), fill="black",
                  anchor="lm" if anchor == "left" else "mm")
    image.save(path)
    return path


def render_pdf(spec: PageSpec, path: Path):
    from reportlab.pdfgen import canvas as rl_canvas

    c = rl_canvas.Canvas(str(path), pagesize=PAGE_PT)
    for text, x, y, anchor, size in spec.items:
        font_pt = size * 72 / 150  # match the PNG pixel sizes at 150 dpi
        c.setFont("Helvetica", font_pt)
        px = x * PAGE_PT[0]
        py = PAGE_PT[1] - y * PAGE_PT[1] - font_pt * 0.35
        if anchor == "left":
            c.drawString(px, py, text)
        else:
            c.drawCentredString(px, py, text)
    c.showPage()
    c.save()
    return path


@pytest.fixture(scope="session")
def crop_plans(tmp_path_factory):
    out = tmp_path_factory.mktemp("plans")
    plans = {}
    for kind in ("rnfl", "gcc"):
        path = out / f"{kind}_plan.json"
        proc = primary_cli("crop-plan", "--kind", kind, "--out", path)
        assert proc.returncode == 0, proc.stderr
        plans[kind] = path
    return plans


@pytest.fixture(scope="session")
def rnfl_page_png(crop_plans, tmp_path_factory):
    plan = json.loads(crop_plans["rnfl"].read_text())
    path = tmp_path_factory.mktemp("pages") / "rnfl_page.png"
    return render_png(rnfl_page_spec(plan), path)


@pytest.fixture(scope="session")
def gcc_page_png(crop_plans, tmp_path_factory):
    plan = json.loads(crop_plans["gcc"].read_text())
    path = tmp_path_factory.mktemp("pages") / "gcc_page.png"
    return render_png(gcc_page_spec(plan), path)


@pytest.fixture(scope="session")
def rnfl_page_pdf(crop_plans, tmp_path_factory):
    plan = json.loads(crop_plans["rnfl"].read_text())
    path = tmp_path_factory.mktemp("pages") / "rnfl_page.pdf"
    return render_pdf(rnfl_page_spec(plan), path)
