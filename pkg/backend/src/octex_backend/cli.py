"""Command line for the OCR backend.

Single-job mode emits one token stream:
    octex-backend --pdf page.pdf --crop-plan plan.json --report-id r1 \
        --kind rnfl --dpi 300 --out r1.tokens.json

Batch mode walks a harvest manifest:
    octex-backend batch --manifest out/manifest.jsonl \
        --crop-plan-rnfl rnfl_plan.json --crop-plan-gcc gcc_plan.json \
        --out-dir streams/
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from octex_backend.backend import BackendJob, CropPlanError, run_backend, run_batch
from octex_backend.rasterize import RasterizationError
from octex_backend.validate import StreamValidationError


def _single_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="octex-backend", description=__doc__)
    p.add_argument("--pdf", required=True, help="PDF or page-image file")
    p.add_argument("--crop-plan", required=True)
    p.add_argument("--report-id", required=True)
    p.add_argument("--kind", required=True, choices=["rnfl", "gcc"])
    p.add_argument("--dpi", type=int, default=300)
    p.add_argument("--out", required=True, help="token-stream JSON to write")
    p.add_argument("--engine", default="auto")
    p.add_argument("--verbose", action="store_true")
    return p


def _batch_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="octex-backend batch")
    p.add_argument("--manifest", required=True, help="harvest manifest JSONL")
    p.add_argument("--crop-plan-rnfl")
    p.add_argument("--crop-plan-gcc")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dpi", type=int, default=300)
    p.add_argument("--engine", default="auto")
    p.add_argument("--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    batch_mode = bool(argv) and argv[0] == "batch"

    if batch_mode:
        args = _batch_parser().parse_args(argv[1:])
    else:
        args = _single_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)

    if batch_mode:
        plans: dict[str, Path] = {}
        if args.crop_plan_rnfl:
            plans["rnfl"] = Path(args.crop_plan_rnfl)
        if args.crop_plan_gcc:
            plans["gcc"] = Path(args.crop_plan_gcc)
        if not plans:
            print("batch mode needs at least one crop plan", file=sys.stderr)
            return 2
        written, errors = run_batch(
            args.manifest, plans, args.out_dir, dpi=args.dpi, engine_name=args.engine
        )
        for record in errors:
            print(json.dumps(record), file=sys.stderr)
        print(f"wrote {len(written)} streams to {args.out_dir} ({len(errors)} failures)")
        return 1 if errors else 0

    job = BackendJob(
        pdf_path=Path(args.pdf),
        crop_plan_path=Path(args.crop_plan),
        report_id=args.report_id,
        report_kind=args.kind,
        out_path=Path(args.out),
        dpi=args.dpi,
        engine_name=args.engine,
    )
    try:
        out = run_backend(job)
    except (RasterizationError, CropPlanError, StreamValidationError, OSError, ValueError) as e:
        print(json.dumps({"report_id": args.report_id, "error": str(e)}), file=sys.stderr)
        return 1
    print(str(out))
    return 0


if __name__ == "__main__":
    sys.exit(main())
