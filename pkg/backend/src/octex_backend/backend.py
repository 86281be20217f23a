"""Run OCR over a report page per a crop plan and emit a token stream.

One job = one page: rasterize (or load) the page image, cut out each
planned crop, recognize text per crop, and write a schema-conformant
token-stream JSON with bbox coordinates normalized inside each crop.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from octex_backend.engine import get_engine
from octex_backend.rasterize import load_page_image
from octex_backend.validate import validate_stream_dict

logger = logging.getLogger("octex_backend")

MIN_DPI = 72


class CropPlanError(ValueError):
    pass


@dataclass(frozen=True)
class BackendJob:
    pdf_path: Path
    crop_plan_path: Path
    report_id: str
    report_kind: str  # "rnfl" | "gcc"
    out_path: Path
    dpi: int = 300
    engine_name: str = "auto"

    def __post_init__(self) -> None:
        if self.dpi < MIN_DPI:
            raise ValueError(f"dpi must be >= {MIN_DPI}, got {self.dpi}")
        if self.report_kind not in ("rnfl", "gcc"):
            raise ValueError(f"report_kind must be 'rnfl' or 'gcc', got {self.report_kind!r}")


def load_crop_plan(path: str | Path) -> list[tuple[str, tuple[float, float, float, float]]]:
    """Parse a crop plan: [{"crop_id": ..., "rect": [x0, y0, x1, y1]}, ...]."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CropPlanError(f"crop plan is not valid JSON: {e}") from e
    if not isinstance(doc, list) or not doc:
        raise CropPlanError("crop plan must be a non-empty list")
    plan = []
    seen = set()
    for entry in doc:
        crop_id = entry.get("crop_id")
        rect = entry.get("rect")
        if not isinstance(crop_id, str) or not crop_id:
            raise CropPlanError(f"crop entry without crop_id: {entry!r}")
        if crop_id in seen:
            raise CropPlanError(f"duplicate crop_id '{crop_id}'")
        seen.add(crop_id)
        if not isinstance(rect, list) or len(rect) != 4:
            raise CropPlanError(f"crop '{crop_id}': rect must be [x0, y0, x1, y1]")
        x0, y0, x1, y1 = (float(v) for v in rect)
        if not (0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1):
            raise CropPlanError(f"crop '{crop_id}': rect {rect} is not a valid page region")
        plan.append((crop_id, (x0, y0, x1, y1)))
    return plan


def _crop_image(page: Image.Image, rect: tuple[float, float, float, float]) -> Image.Image:
    w, h = page.size
    x0 = int(rect[0] * w)
    y0 = int(rect[1] * h)
    x1 = max(x0 + 1, int(rect[2] * w))
    y1 = max(y0 + 1, int(rect[3] * h))
    return page.crop((x0, y0, x1, y1))


def _normalized_bbox(bbox_px, crop_size) -> list[float]:
    cw, ch = crop_size
    x0 = min(max(bbox_px[0] / cw, 0.0), 1.0)
    y0 = min(max(bbox_px[1] / ch, 0.0), 1.0)
    x1 = min(max(bbox_px[2] / cw, 0.0), 1.0)
    y1 = min(max(bbox_px[3] / ch, 0.0), 1.0)
    # guarantee positive extent after clipping
    if x1 <= x0:
        x1 = min(1.0, x0 + 1e-4)
        x0 = max(0.0, x1 - 1e-4)
    if y1 <= y0:
        y1 = min(1.0, y0 + 1e-4)
        y0 = max(0.0, y1 - 1e-4)
    return [round(v, 6) for v in (x0, y0, x1, y1)]


def run_backend(job: BackendJob) -> Path:
    """Execute one OCR job and write the self-validated token stream."""
    plan = load_crop_plan(job.crop_plan_path)
    page = load_page_image(job.pdf_path, dpi=job.dpi)
    engine = get_engine(job.engine_name)

    tokens = []
    next_id = 0
    for crop_id, rect in plan:
        crop = _crop_image(page, rect)
        recognized = engine.recognize(crop)
        if not recognized:
            logger.debug("crop '%s': no text found", crop_id)
        for item in recognized:
            text = item.text.strip()
            if not text:
                continue
            tokens.append(
                {
                    "id": next_id,
                    "text": text,
                    "conf": round(float(min(max(item.conf, 0.0), 1.0)), 4),
                    "bbox": _normalized_bbox(item.bbox_px, crop.size),
                    "crop_id": crop_id,
                }
            )
            next_id += 1

    if not tokens:
        logger.warning(
            "report %s: engine returned zero tokens for every crop (blank page?)",
            job.report_id,
        )

    stream = {
        "schema_version": "1",
        "report_id": job.report_id,
        "report_kind": job.report_kind,
        "backend_name": engine.name,
        "tokens": tokens,
    }
    validate_stream_dict(stream)

    out = Path(job.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(stream, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return out


def run_batch(
    manifest_path: str | Path,
    crop_plans: dict[str, Path],
    out_dir: str | Path,
    dpi: int = 300,
    engine_name: str = "auto",
) -> tuple[list[Path], list[dict]]:
    """Process every pipeline-relevant manifest entry; returns (written, errors).

    The manifest is the harvest JSONL; PDFs are expected alongside it named
    <sop_instance_uid>.pdf. Entries whose kind has no crop plan are skipped.
    """
    manifest_path = Path(manifest_path)
    out_dir = Path(out_dir)
    kind_map = {"rnfl": "rnfl", "ganglion_cell": "gcc", "gcc": "gcc"}

    written: list[Path] = []
    errors: list[dict] = []
    for line in manifest_path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        entry = json.loads(line)
        kind = kind_map.get(entry.get("report_kind", ""))
        if kind is None or kind not in crop_plans:
            continue
        report_id = entry["sop_instance_uid"]
        job = BackendJob(
            pdf_path=manifest_path.parent / f"{report_id}.pdf",
            crop_plan_path=Path(crop_plans[kind]),
            report_id=report_id,
            report_kind=kind,
            out_path=out_dir / f"{report_id}.tokens.json",
            dpi=dpi,
            engine_name=engine_name,
        )
        try:
            written.append(run_backend(job))
        except Exception as e:  # keep batch going; record the failure
            errors.append({"report_id": report_id, "error": str(e)})
    return written, errors
