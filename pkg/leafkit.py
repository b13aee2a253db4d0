#!/usr/bin/env python3
"""leafkit - minimum-variance foliation experiments.

    leafkit <foliate|diagnostics|evolve|figure> --config <path> [--out DIR]
            [--preset NAME] [--allow-degenerate] [--threads N] [--seed N]
            [--no-cache] [--main-observables] [--L 6,8,10]

Exit codes: 0 success, 1 usage/config, 2 numerical, 3 I/O.
"""

from __future__ import annotations

import argparse
import logging
import sys

import config
import figures
import pipeline
from errors import ConfigError, LeafkitError
from experiment_config import parse_config
from ui import error, info, print_panel, success, summary_lines

logger = logging.getLogger("leafkit")


def _lengths(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leafkit", description="Minimum-variance foliation experiments.")
    parser.add_argument("command", choices=pipeline.COMMANDS)
    parser.add_argument("name", nargs="?", help="figure name (figure command only)")
    parser.add_argument("--config", help="experiment file (JSON)")
    parser.add_argument("--out", help="output directory (overrides output.dir)")
    parser.add_argument("--preset", help="start from a figure preset")
    parser.add_argument("--allow-degenerate", action="store_true", help="accept a degenerate H_rho (ensemble flagged non-unique)")
    parser.add_argument("--threads", type=int, default=config.THREADS, help="worker threads (default: LEAFKIT_THREADS)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--no-cache", action="store_true", help="do not read or write the eigendecomposition cache")
    parser.add_argument("--main-observables", action="store_true", help="only z@site and zz@site,site+1")
    parser.add_argument("--L", type=_lengths, default=None, help="override the chain lengths, e.g. 6,8,10")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    out: dict = {}
    if args.out:
        out["output"] = {"dir": args.out}
    if args.allow_degenerate:
        out["foliation"] = {"allow_degenerate": True}
    if args.seed is not None:
        out["seed"] = args.seed
    if args.main_observables:
        out["diagnostics"] = {"observables": "main"}
        out["evolve"] = {"observables": "main"}
    if args.L:
        out["sweep"] = {"L": args.L}
    return out


def run(args: argparse.Namespace) -> int:
    base = None
    preset_name = args.preset
    if args.command == "figure":
        if not args.name:
            raise ConfigError("figure command needs a name: " + ", ".join(figures.PRESETS))
        preset_name = args.name
    elif args.name:
        raise ConfigError(f"unexpected argument {args.name!r}")
    if preset_name:
        base, _ = figures.preset(preset_name)

    cfg = parse_config(args.config, base=base, overrides=_overrides(args))
    options = pipeline.RunOptions(threads=max(1, args.threads), use_cache=not args.no_cache)
    info(f"{args.command}: L={list(cfg.sweep_L)} beta={list(cfg.sweep_beta)} -> {cfg.out_dir}")

    if args.command == "foliate":
        result = pipeline.cmd_foliate(cfg, options)
    elif args.command == "diagnostics":
        result = pipeline.cmd_diagnostics(cfg, options)
    elif args.command == "evolve":
        result = pipeline.cmd_evolve(cfg, options)
    else:
        result = pipeline.cmd_figure(args.name, cfg, options)

    if result.summary:
        print_panel("leaf summary", summary_lines(result.summary))
    success(f"manifest: {result.manifest_path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=getattr(logging, config.LOG_LEVEL, logging.INFO),
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%H:%M:%S",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors; usage maps to 1 here
        return 0 if e.code == 0 else 1
    try:
        return run(args)
    except LeafkitError as e:
        error(f"{e.reason}: {e.message}")
        return e.exit_code
    except MemoryError:
        error("numerical_error: out of memory (reduce L)")
        return 2
    except Exception as e:
        logger.exception("Unexpected failure")
        error(f"internal_error: {type(e).__name__}: {e}")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
