"""``llmgrade`` command line: grade, benchmark, agreement, geval, review, report."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import GradingError
from .gateway import HttpTransport, MockTransport, ModelGateway, ResponseCache
from .pipeline import (
    RunConfig,
    StageResult,
    cmd_agreement,
    cmd_benchmark,
    cmd_geval,
    cmd_grade,
    cmd_report,
    cmd_review,
)

logger = logging.getLogger("llmgrade")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llmgrade", description="Ensemble LLM grading of programming assignments.")
    parser.add_argument("--config", type=Path, help="run configuration (YAML)")
    parser.add_argument("--output", type=Path, help="override output_dir from the config")
    parser.add_argument("--cache", type=Path, help="completion cache directory (default <output>/cache)")
    parser.add_argument("--offline", action="store_true", help="serve completions from the cache only")
    parser.add_argument("--mock", type=Path, help="answer requests from a fixtures file or directory")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("grade", help="ensemble-grade every submission and summarize feedback")
    bench = sub.add_parser("benchmark", help="MAE against human scores, comparison tables, stability curves")
    bench.add_argument("--human", type=Path, help="human score CSV (default <dataset_root>/human_scores.csv)")
    agree = sub.add_parser("agreement", help="intra- or inter-model ICC")
    agree.add_argument("--mode", choices=("intra", "inter"), required=True)
    agree.add_argument("--repeats", type=int, help="repeated queries per submission (intra)")
    agree.add_argument("--matrix", type=Path, help="compute both ICCs for a ratings CSV and exit")
    sub.add_parser("geval", help="score feedback quality with the evaluator model")
    sub.add_parser("review", help="list flagged feedback, lowest quality first")
    sub.add_parser("report", help="collect every rendered table into report.md")
    return parser


def make_gateway(config: RunConfig, args: argparse.Namespace) -> ModelGateway:
    cache_dir = args.cache or config.cache_dir or (config.output_dir / "cache")
    cache = ResponseCache(cache_dir)
    if args.offline:
        transport = None
    elif args.mock is not None:
        transport = MockTransport.from_dir(args.mock)
    else:
        transport = HttpTransport()
    return ModelGateway(cache, transport, max_retries=config.ensemble.max_retries)


def _print_result(result: StageResult, gateway: Optional[ModelGateway], out) -> None:
    if result.text:
        out.write(result.text if result.text.endswith("\n") else result.text + "\n")
    for p in result.outputs:
        out.write(f"wrote {p}\n")
    if gateway is not None:
        out.write(f"network requests: {gateway.network_calls}\n")
    if result.warnings:
        out.write(f"\nwarnings ({len(result.warnings)}):\n")
        for w in result.warnings:
            out.write(f"  - {w}\n")


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    gateway = None
    try:
        if args.command == "agreement" and args.matrix is not None:
            _print_result(cmd_agreement(None, None, args.mode, matrix_path=args.matrix), None, out)
            return 0
        if args.config is None:
            raise GradingError("--config is required")
        config = RunConfig.from_yaml(args.config)
        if args.output is not None:
            config = dataclasses.replace(config, output_dir=args.output)
        out.write(f"run {config.run_id}\n")
        if args.command in ("grade", "geval") or (args.command == "agreement" and args.mode == "intra"):
            gateway = make_gateway(config, args)
        if args.command == "grade":
            result = cmd_grade(config, gateway)
        elif args.command == "benchmark":
            result = cmd_benchmark(config, args.human)
        elif args.command == "agreement":
            result = cmd_agreement(config, gateway, args.mode, args.repeats)
        elif args.command == "geval":
            result = cmd_geval(config, gateway)
        elif args.command == "review":
            result = cmd_review(config)
        else:
            result = cmd_report(config)
    except GradingError as exc:
        if gateway is not None:
            out.write(f"network requests: {gateway.network_calls}\n")
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1
    _print_result(result, gateway, out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
