"""Command-line entry point: ``conndiff run|reduce|report|validate-config``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from conndiff import campaign as cp
from conndiff.backends import DivergenceCatalog
from conndiff.comparator import MODES
from conndiff import fileformat
from conndiff import props
from conndiff import reducer
from conndiff import trace as tr
from conndiff.prompts import PromptError


def _load(args) -> cp.CampaignConfig:
    config = cp.load_config(args.config)
    overrides = {}
    if getattr(args, "rounds", None) is not None:
        overrides["rounds"] = args.rounds
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "output_dir", None):
        overrides["output_dir"] = Path(args.output_dir)
    return dataclasses.replace(config, **overrides) if overrides else config


def cmd_run(args) -> int:
    config = _load(args)
    camp = cp.Campaign(config)

    def progress(report: cp.RoundReport) -> None:
        if args.verbose:
            print(f"round {report.round:4d}  {report.prompt_id}  {report.status:<13} "
                  f"reward={report.raw_reward}", file=sys.stderr)

    summary = camp.run(resume=args.resume, on_round=progress)
    print(cp.render_summary(summary), end="")
    return 0


def cmd_reduce(args) -> int:
    config = _load(args) if args.config else None
    src = Path(args.trace)
    trace = tr.parse(src.read_text(encoding="utf-8"))
    if config is not None:
        schema = props.load_schema(config.schema_path)
        catalog = props.curate_subsets(schema, config.k, config.subset_strategy, config.subset_seed)
        divergence, modes = config.divergence, config.comparison_modes
    else:
        catalog = props.curate_subsets(props.default_schema())
        divergence, modes = DivergenceCatalog.all(), MODES
    assignments = catalog.flatten()
    oracle = reducer.discrepancy_oracle(divergence, modes, partner=lambda _a: assignments)
    try:
        minimal = reducer.reduce(trace, oracle, budget=args.budget)
    except reducer.ReductionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.output) if args.output else src.with_name(src.name + ".min")
    fileformat.atomic_write(out, tr.serialize(minimal))
    print(f"{len(trace.ops)} -> {len(minimal.ops)} ops, written to {out}")
    return 0


def cmd_report(args) -> int:
    if args.output_dir:
        out_dir = Path(args.output_dir)
    elif args.config:
        out_dir = Path(cp.load_config(args.config).output_dir)
    else:
        print("error: report needs --config or --output-dir", file=sys.stderr)
        return 2
    ckpt = cp.load_checkpoint(out_dir)
    prompts = None
    if args.config:
        prompts = cp.Campaign(cp.load_config(args.config)).prompts
    print(cp.render_summary(cp.summarize(ckpt, prompts)), end="")
    if args.csv:
        fileformat.atomic_write(args.csv, cp.rounds_csv(ckpt))
        print(f"per-round CSV written to {args.csv}")
    return 0


def cmd_validate_config(args) -> int:
    config = cp.load_config(args.config)
    camp = cp.Campaign(config)
    print(f"ok: {len(camp.prompts)} prompts, {len(camp.catalog)} property subsets "
          f"({len(camp.catalog.flatten())} assignments), rules {','.join(sorted(config.divergence.rules)) or 'none'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conndiff", description="Differential testing of connector backends.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run or resume a campaign")
    run.add_argument("--config", required=True)
    run.add_argument("--rounds", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--output-dir")
    run.add_argument("--resume", action="store_true", help="continue from the checkpoint in output_dir")
    run.set_defaults(func=cmd_run)

    red = sub.add_parser("reduce", help="minimize a discrepancy-exhibiting trace")
    red.add_argument("trace")
    red.add_argument("--config")
    red.add_argument("--output", help="defaults to TRACE.min")
    red.add_argument("--budget", type=int, help="maximum oracle calls")
    red.set_defaults(func=cmd_reduce)

    rep = sub.add_parser("report", help="summarize a campaign checkpoint")
    rep.add_argument("--config")
    rep.add_argument("--output-dir")
    rep.add_argument("--csv", help="write discrepancies-over-rounds CSV here")
    rep.set_defaults(func=cmd_report)

    val = sub.add_parser("validate-config", help="check a campaign config and the files it references")
    val.add_argument("--config", required=True)
    val.set_defaults(func=cmd_validate_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (cp.CampaignError, fileformat.FormatError, tr.ParseError, props.PropertyError, PromptError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
