"""``unitqa`` command line: one subcommand per pipeline stage plus ``repro``.

Settings resolve flag > config file > built-in default.  Errors from the
package exit with the code carried by their exception class.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiment as ex
from .errors import InvalidInputError, UnitQAError

SUBCOMMANDS = ("synth", "codebook", "pretrain", "finetune", "infer", "eval", "sweep", "repro")


def _levels(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--levels wants comma-separated floats: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unitqa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run config; missing keys take defaults")
        p.add_argument("--seed", type=int, help="root seed (overrides the config)")
        p.add_argument("--out", default="runs/default", help="output directory")
        p.add_argument("--force", action="store_true",
                       help="run even if upstream outputs were built from another config")
        if name in ("finetune", "infer", "eval"):
            choices = ("tqa", "no-tqa") if name == "finetune" else ex.ARMS
            p.add_argument("--arm", choices=choices, required=name != "eval",
                           help="model arm (eval defaults to every arm with predictions)")
        if name in ("sweep", "repro"):
            p.add_argument("--levels", type=_levels, help="WER levels, e.g. 0,0.1,0.2")
        p.add_argument("--dump-config", action="store_true",
                       help="print the resolved config as JSON and exit")
    return parser


def resolve_config(args) -> ex.RunConfig:
    cfg = ex.RunConfig.load(args.config) if args.config else ex.RunConfig()
    return cfg.with_overrides(seed=args.seed, levels=getattr(args, "levels", None))


def _eval_arms(ws: ex.Workspace, arm: str | None) -> list[str]:
    if arm:
        return [arm]
    arms = [a for a in ex.ARMS if ws.manifest_path(f"infer-{a}").exists()]
    if not arms:
        raise InvalidInputError(f"no predictions under {ws.root}; run infer first")
    return arms


def run(args) -> dict:
    cfg = resolve_config(args)
    ws = ex.Workspace(args.out, cfg, force=args.force)
    cmd = args.command
    if cmd == "synth":
        return ex.stage_synth(ws)
    if cmd == "codebook":
        return ex.stage_codebook(ws)
    if cmd == "pretrain":
        return ex.stage_pretrain(ws)
    if cmd == "finetune":
        return ex.stage_finetune(ws, args.arm)
    if cmd == "infer":
        return ex.stage_infer(ws, args.arm)
    if cmd == "eval":
        return {arm: ex.stage_eval(ws, arm) for arm in _eval_arms(ws, args.arm)}
    if cmd == "sweep":
        return ex.stage_sweep(ws)
    return ex.stage_repro(ws)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.dump_config:
            print(json.dumps(resolve_config(args).to_dict(), sort_keys=True, indent=2))
            return 0
        result = run(args)
    except UnitQAError as exc:
        print(f"unitqa {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    print(json.dumps(result, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
