"""Command-line driver: run, stage, validate, report.

Configuration lives in a TOML file; flags override individual scalars.
Exit codes: 0 success, 1 runtime error, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import PipelineConfig, apply_overrides, load_config
from .corpus import load_corpus, validate
from .errors import ConfigError, KpnetError, MissingUpstream
from .pipeline import STAGES, PipelineContext, load_reports, run_stage
from .report import emit_grid_report

log = logging.getLogger("kpnet")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML configuration file")
    parser.add_argument("--corpus", dest="corpus_path", help="corpus path (overrides config)")
    parser.add_argument("--format", dest="corpus_format", choices=["argkp_csv", "jsonl"])
    parser.add_argument("--style", choices=["closed", "open", "hybrid", "paraphrase", "original"])
    parser.add_argument("--generator", help="generation backend: mock | fixture:<path> | chat:<model>")
    parser.add_argument("--embedding", help="embedding backend: mock[:dim] | http:<model>")
    parser.add_argument("--max-questions", dest="max_questions", type=int)
    parser.add_argument("--policy", dest="policy_kind",
                        choices=["complete", "weight_threshold", "top_k"])
    parser.add_argument("--tau", dest="policy_tau", type=float)
    parser.add_argument("--top-k", dest="policy_k", type=int)
    parser.add_argument("--measure", dest="measures", action="append",
                        choices=["pagerank", "degree", "betweenness", "closeness"],
                        help="repeatable; overrides the config list")
    parser.add_argument("--n-max", dest="n_max", type=int)
    parser.add_argument("--truncation-fraction", dest="truncation_fraction", type=float)
    parser.add_argument("--theta", type=float, help="override the fitted matching threshold")
    parser.add_argument("--out-dir", dest="out_dir")
    parser.add_argument("--run-id", dest="run_id")
    parser.add_argument("--cache-dir", dest="cache_dir")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--parallelism", type=int)
    parser.add_argument("--force", action="store_true", help="recompute completed stages")


_OVERRIDE_KEYS = (
    "corpus_path", "corpus_format", "style", "generator", "embedding", "max_questions",
    "policy_kind", "policy_tau", "policy_k", "measures", "n_max", "truncation_fraction",
    "theta", "out_dir", "run_id", "cache_dir", "seed", "parallelism",
)


def _build_config(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    overrides = {key: getattr(args, key, None) for key in _OVERRIDE_KEYS}
    config = apply_overrides(config, overrides)
    config.validate()
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kpnet",
        description="Mine key points from a debate corpus by ranking generated "
                    "questions in a similarity-weighted QA network.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute the full pipeline")
    _add_config_flags(p_run)

    p_stage = sub.add_parser("stage", help="execute a single pipeline stage")
    p_stage.add_argument("stage", choices=STAGES)
    _add_config_flags(p_stage)

    p_val = sub.add_parser("validate", help="check corpus invariants")
    p_val.add_argument("--config", help="TOML configuration file")
    p_val.add_argument("--corpus", dest="corpus_path")
    p_val.add_argument("--format", dest="corpus_format", choices=["argkp_csv", "jsonl"])

    p_rep = sub.add_parser("report", help="consolidate runs into grid CSVs")
    p_rep.add_argument("--runs", nargs="+", required=True, help="completed run directories")
    p_rep.add_argument("--out", required=True, help="output directory for grid CSVs")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    config = _build_config(args)
    ctx = PipelineContext(config)
    current = "setup"
    try:
        for stage in STAGES:
            current = stage
            outcome = run_stage(ctx, stage, force=args.force)
            status = "skipped (cache hit)" if outcome.skipped else "done"
            print(f"[{ctx.run_id}] stage {stage}: {status}")
    except KpnetError as exc:
        print(json.dumps({"error": type(exc).__name__, "stage": current, "message": str(exc)}),
              file=sys.stderr)
        return 1
    print(f"[{ctx.run_id}] run directory: {ctx.run_dir}")
    return 0


def _cmd_stage(args: argparse.Namespace) -> int:
    config = _build_config(args)
    ctx = PipelineContext(config)
    try:
        outcome = run_stage(ctx, args.stage, force=args.force)
    except MissingUpstream as exc:
        print(json.dumps({"error": "MissingUpstream", "stage": exc.stage, "needs": exc.needs,
                          "message": str(exc)}), file=sys.stderr)
        return 1
    except KpnetError as exc:
        print(json.dumps({"error": type(exc).__name__, "stage": args.stage, "message": str(exc)}),
              file=sys.stderr)
        return 1
    status = "skipped (cache hit)" if outcome.skipped else "done"
    print(f"[{ctx.run_id}] stage {args.stage}: {status}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    if args.config:
        config = load_config(args.config)
        if args.corpus_path:
            config = apply_overrides(config, {"corpus_path": args.corpus_path})
        if args.corpus_format:
            config = apply_overrides(config, {"corpus_format": args.corpus_format})
    else:
        if not args.corpus_path:
            raise ConfigError("validate needs --config or --corpus")
        config = PipelineConfig(corpus_path=args.corpus_path,
                                corpus_format=args.corpus_format or "argkp_csv")
    try:
        corpus = load_corpus(config.corpus_path, config.corpus_format)
    except KpnetError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    violations = validate(corpus)
    for v in violations:
        print(f"{v.entity_id}\t{v.rule}\t{v.detail}")
    if violations:
        print(f"{len(violations)} violations", file=sys.stderr)
        return 1
    print(f"corpus OK: {len(corpus.topics)} topics, {len(corpus.arguments)} arguments, "
          f"{len(corpus.key_points)} key points, {len(corpus.annotations)} annotations")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    reports = []
    for run in args.runs:
        run_dir = Path(run)
        if not run_dir.exists():
            print(json.dumps({"error": "MissingFile", "message": f"no such run dir: {run}"}),
                  file=sys.stderr)
            return 1
        kpm_report, kpg_reports = load_reports(run_dir)
        if kpm_report:
            reports.append(kpm_report)
        reports.extend(kpg_reports)
    try:
        written = emit_grid_report(reports, args.out)
    except KpnetError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "stage":
            return _cmd_stage(args)
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "report":
            return _cmd_report(args)
    except ConfigError as exc:
        print(json.dumps({"error": "ConfigError", "message": str(exc)}), file=sys.stderr)
        return 2
    except KpnetError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
