"""Command-line pipeline: harvest, crop-plan, extract, validate, eval, synth.

Verbs communicate only through files so each stage can run independently
and any stage's output re-reads losslessly into the next. Exit codes:
0 success, 2 usage error, 3 validate found Reject flags, 4 input schema
error, 1 other fatal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from octex.extract import (
    BindError,
    ExtractionResult,
    extract_report,
    results_to_csv,
)
from octex.fields import ReportKind
from octex.harvest import DicomError, scan_dicom_dir, write_harvest
from octex.layout import (
    LayoutTemplate,
    TemplateError,
    crop_plan_json,
    load_default_template,
    load_template_file,
)
from octex.qc import QcSeverity, RangePolicy, flags_to_csv, validate_report
from octex.scoring import (
    GoldFormatError,
    ScoreInputError,
    load_gold_file,
    render_table,
    rows_to_csv,
    rows_to_json,
    score,
    write_gold_csv,
)
from octex.synth import NoiseProfile, ProfileError, gen_reports, ledger_to_csv
from octex.tokens import TokenSchemaError, parse_token_stream, serialize_token_stream

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_REJECTS = 3
EXIT_SCHEMA = 4
EXIT_FATAL = 1

CONFIG_ENV_VAR = "OCTEX_CONFIG"

SCHEMA_ERRORS = (
    TokenSchemaError,
    TemplateError,
    BindError,
    GoldFormatError,
    ScoreInputError,
    ProfileError,
)

logger = logging.getLogger("octex")


@dataclass
class PipelineConfig:
    """File-backed defaults for the pipeline verbs."""

    template_rnfl: Path | None = None
    template_gcc: Path | None = None
    range_policy: Path | None = None
    noise_profile: Path | None = None
    input_dir: Path | None = None
    output_dir: Path | None = None
    parallelism: int = 1
    log_level: str = "info"

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        cfg = cls(
            template_rnfl=Path(doc["template_rnfl"]) if doc.get("template_rnfl") else None,
            template_gcc=Path(doc["template_gcc"]) if doc.get("template_gcc") else None,
            range_policy=Path(doc["range_policy"]) if doc.get("range_policy") else None,
            noise_profile=Path(doc["noise_profile"]) if doc.get("noise_profile") else None,
            input_dir=Path(doc["input_dir"]) if doc.get("input_dir") else None,
            output_dir=Path(doc["output_dir"]) if doc.get("output_dir") else None,
            parallelism=int(doc.get("parallelism", 1)),
            log_level=str(doc.get("log_level", "info")),
        )
        if cfg.parallelism < 1:
            raise ValueError("config: parallelism must be >= 1")
        for name in ("template_rnfl", "template_gcc", "range_policy", "noise_profile"):
            p = getattr(cfg, name)
            if p is not None and not p.is_file():
                raise FileNotFoundError(f"config: {name} does not exist: {p}")
        return cfg


class _Templates:
    """Template resolution: explicit flag, then config, then shipped default."""

    def __init__(self, override: Path | None, config: PipelineConfig):
        self._cache: dict[ReportKind, LayoutTemplate] = {}
        self._config = config
        if override is not None:
            t = load_template_file(override)
            self._cache[t.report_kind] = t

    def get(self, kind: ReportKind) -> LayoutTemplate:
        if kind not in self._cache:
            cfg_path = (
                self._config.template_rnfl
                if kind is ReportKind.RNFL
                else self._config.template_gcc
            )
            self._cache[kind] = (
                load_template_file(cfg_path) if cfg_path else load_default_template(kind)
            )
        return self._cache[kind]


def _collect_json_files(inputs: list[str], suffix: str = ".json") -> list[Path]:
    files: list[Path] = []
    for raw in inputs:
        p = Path(raw)
        if p.is_dir():
            files.extend(sorted(q for q in p.rglob(f"*{suffix}") if q.is_file()))
        elif p.is_file():
            files.append(p)
        else:
            raise FileNotFoundError(f"input not found: {p}")
    return files


def _pmap(fn, items, parallel: int):
    if parallel > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# --- verbs -------------------------------------------------------------------

def _cmd_harvest(args, config: PipelineConfig) -> int:
    in_dir = Path(args.input or config.input_dir or ".")
    out_dir = Path(args.out or config.output_dir or "harvest_out")
    scan = scan_dicom_dir(in_dir, workers=args.parallel)
    manifest = write_harvest(scan, out_dir)
    logger.info(
        "harvest: %d records, %d skipped, %d visited -> %s",
        len(scan.records),
        len(scan.skips),
        scan.visited,
        manifest,
    )
    print(f"harvested {len(scan.records)} reports ({len(scan.skips)} skipped) -> {manifest}")
    return EXIT_OK


def _cmd_crop_plan(args, config: PipelineConfig) -> int:
    templates = _Templates(args.template, config)
    kind = ReportKind(args.kind)
    plan = crop_plan_json(templates.get(kind))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(plan, encoding="utf-8")
        print(f"crop plan -> {args.out}")
    else:
        sys.stdout.write(plan)
    return EXIT_OK


def _cmd_extract(args, config: PipelineConfig) -> int:
    templates = _Templates(args.template, config)
    out_dir = Path(args.out or config.output_dir or "extract_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    files = _collect_json_files(args.inputs)
    if not files:
        print("no token-stream files found", file=sys.stderr)
        return EXIT_SCHEMA

    def run(path: Path) -> ExtractionResult:
        stream = parse_token_stream(path.read_bytes())
        return extract_report(stream, templates.get(stream.report_kind))

    results = _pmap(run, files, args.parallel)
    for result in results:
        (out_dir / f"{result.report_id}.extraction.json").write_text(
            result.to_json(), encoding="utf-8"
        )
    (out_dir / "extractions.csv").write_text(results_to_csv(results), encoding="utf-8")
    print(f"extracted {len(results)} reports -> {out_dir}")
    return EXIT_OK


def _find_stream_file(streams_dir: Path, report_id: str) -> Path:
    for candidate in (f"{report_id}.tokens.json", f"{report_id}.json"):
        p = streams_dir / candidate
        if p.is_file():
            return p
    raise FileNotFoundError(
        f"token stream for report '{report_id}' not found under {streams_dir}"
    )


def _cmd_validate(args, config: PipelineConfig) -> int:
    templates = _Templates(args.template, config)
    policy_path = args.range_policy or config.range_policy
    policy = RangePolicy.from_file(policy_path) if policy_path else RangePolicy()
    low_conf = args.low_conf_threshold
    streams_dir = Path(args.streams)
    out_dir = Path(args.out or config.output_dir or "validate_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    files = _collect_json_files(args.inputs)
    if not files:
        print("no extraction files found", file=sys.stderr)
        return EXIT_SCHEMA

    def run(path: Path):
        result = ExtractionResult.from_dict(
            json.loads(path.read_text(encoding="utf-8"))
        )
        stream = parse_token_stream(
            _find_stream_file(streams_dir, result.report_id).read_bytes()
        )
        return validate_report(
            result, stream, templates.get(result.kind), policy, low_conf_threshold=low_conf
        )

    outcomes = _pmap(run, files, args.parallel)
    all_flags = []
    any_reject = False
    for validated, flags in outcomes:
        (out_dir / f"{validated.report_id}.validated.json").write_text(
            validated.to_json(), encoding="utf-8"
        )
        all_flags.extend(flags)
        any_reject = any_reject or any(f.severity is QcSeverity.REJECT for f in flags)
    all_flags.sort(key=lambda f: (f.report_id, f.kind.value, [x.key() for x in f.fields]))
    (out_dir / "qc_flags.csv").write_text(flags_to_csv(all_flags), encoding="utf-8")
    print(
        f"validated {len(outcomes)} reports, {len(all_flags)} flags -> {out_dir}"
    )
    return EXIT_REJECTS if any_reject else EXIT_OK


def _cmd_eval(args, config: PipelineConfig) -> int:
    gold = load_gold_file(args.gold)
    files = _collect_json_files(args.pred)
    if not files:
        print("no prediction files found", file=sys.stderr)
        return EXIT_SCHEMA
    predictions = [
        ExtractionResult.from_dict(json.loads(p.read_text(encoding="utf-8")))
        for p in files
    ]
    rows = score(predictions, gold)
    out_dir = Path(args.out or config.output_dir or "eval_out")
    out_dir.mkdir(parents=True, exist_ok=True)

    kinds = sorted({p.kind for p in predictions}, key=lambda k: k.value, reverse=True)
    for kind in kinds:
        kind_rows = [r for r in rows if r.field.kind is kind]
        table = render_table(kind_rows, kind)
        (out_dir / f"{kind.value}_table.txt").write_text(table, encoding="utf-8")
        sys.stdout.write(table + "\n")
        from octex.figures import render_precision_figure

        render_precision_figure(kind_rows, kind, out_dir / f"{kind.value}_precision.png")
    (out_dir / "precision.json").write_text(rows_to_json(rows), encoding="utf-8")
    (out_dir / "precision.csv").write_text(rows_to_csv(rows), encoding="utf-8")
    print(f"eval -> {out_dir}")
    return EXIT_OK


def _cmd_synth(args, config: PipelineConfig) -> int:
    profile_path = args.profile or config.noise_profile
    profile = NoiseProfile.from_file(profile_path) if profile_path else NoiseProfile()
    if args.seed is not None:
        profile = replace(profile, seed=args.seed)

    kinds = (
        [ReportKind.RNFL, ReportKind.GCC]
        if args.kind == "both"
        else [ReportKind(args.kind)]
    )
    out_dir = Path(args.out or config.output_dir or "synth_out")
    streams_dir = out_dir / "streams"
    streams_dir.mkdir(parents=True, exist_ok=True)
    templates = _Templates(args.template, config)

    all_gold = []
    all_ledger = []
    count = 0
    for kind in kinds:
        streams, gold, ledger = gen_reports(kind, args.count, profile, templates.get(kind))
        for stream in streams:
            (streams_dir / f"{stream.report_id}.tokens.json").write_text(
                serialize_token_stream(stream), encoding="utf-8"
            )
        all_gold.extend(gold)
        all_ledger.extend(ledger)
        count += len(streams)

    (out_dir / "gold.csv").write_text(write_gold_csv(all_gold), encoding="utf-8")
    (out_dir / "ledger.csv").write_text(ledger_to_csv(all_ledger), encoding="utf-8")
    (out_dir / "profile.json").write_text(profile.to_json(), encoding="utf-8")
    print(
        f"synthesized {count} reports ({len(all_ledger)} injected errors) -> {out_dir}"
    )
    return EXIT_OK


# --- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="octex",
        description="Extract structured numeric results from Cirrus optic-nerve "
        "OCT report token streams.",
    )
    parser.add_argument("--config", help=f"pipeline config JSON (default: ${CONFIG_ENV_VAR})")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("harvest", help="scan DICOMs and extract encapsulated PDFs")
    p.add_argument("input", nargs="?", help="directory of DICOM files")
    p.add_argument("--out", help="output directory")
    p.add_argument("--parallel", type=int, default=1)

    p = sub.add_parser("crop-plan", help="emit the OCR crop plan for a template")
    p.add_argument("--template", type=Path, help="template JSON path")
    p.add_argument("--kind", choices=["rnfl", "gcc"], default="rnfl")
    p.add_argument("--out", help="output file (stdout when omitted)")

    p = sub.add_parser("extract", help="token streams -> extraction JSON/CSV")
    p.add_argument("inputs", nargs="+", help="token-stream files or directories")
    p.add_argument("--template", type=Path)
    p.add_argument("--out", help="output directory")
    p.add_argument("--parallel", type=int, default=1)

    p = sub.add_parser("validate", help="run QC detectors over extraction output")
    p.add_argument("inputs", nargs="+", help="extraction JSON files or directories")
    p.add_argument("--streams", required=True, help="directory of token streams")
    p.add_argument("--template", type=Path)
    p.add_argument("--range-policy", type=Path)
    p.add_argument("--low-conf-threshold", type=float, default=0.90)
    p.add_argument("--out", help="output directory")
    p.add_argument("--parallel", type=int, default=1)

    p = sub.add_parser("eval", help="score predictions against gold labels")
    p.add_argument("--pred", nargs="+", required=True, help="prediction files or dirs")
    p.add_argument("--gold", required=True, help="gold CSV path")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("synth", help="generate synthetic fixtures with noise")
    p.add_argument("--kind", choices=["rnfl", "gcc", "both"], default="both")
    p.add_argument("-n", "--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=None, help="overrides the profile seed")
    p.add_argument("--profile", type=Path, help="noise profile JSON")
    p.add_argument("--template", type=Path)
    p.add_argument("--out", help="output directory")

    return parser


_VERBS = {
    "harvest": _cmd_harvest,
    "crop-plan": _cmd_crop_plan,
    "extract": _cmd_extract,
    "validate": _cmd_validate,
    "eval": _cmd_eval,
    "synth": _cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )

    config_path = args.config or os.environ.get(CONFIG_ENV_VAR)
    try:
        config = PipelineConfig.load(config_path) if config_path else PipelineConfig()
    except (OSError, ValueError) as e:
        print(f"octex: bad config: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return _VERBS[args.verb](args, config)
    except SCHEMA_ERRORS as e:
        print(f"octex {args.verb}: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except FileNotFoundError as e:
        print(f"octex {args.verb}: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except DicomError as e:
        print(f"octex {args.verb}: {e}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
