"""Command line entry point: train, eval, grid, compare.

Exit codes: 0 success, 2 validation/config error, 3 numerics abort.
"""

import argparse
import json
import os
import sys

from .errors import BackdoorLabError, NumericsError
from .harness import (ExperimentConfig, evaluate_checkpoint, grid_from_checkpoint,
                      load_config, run_experiment, _atomic_write, _json_bytes)


def _cmd_train(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    cfg = load_config(args.config, overrides)
    result = run_experiment(cfg)
    values = result["report"]["values"]
    print(f"{cfg.kind} done (seed {cfg.seed})")
    for key in sorted(values):
        print(f"  {key}: {values[key]:.6g}")
    for w in result["report"]["warnings"]:
        print(f"  warning: {w}")
    print(f"  report: {result['paths']['report']}")
    print(f"  checkpoint: {result['paths']['checkpoint']}")
    return 0


def _cmd_eval(args):
    cfg = load_config(args.config)
    report = evaluate_checkpoint(args.checkpoint, cfg)
    text = json.dumps(report, sort_keys=True, indent=2)
    if args.out:
        _atomic_write(args.out, (text + "\n").encode("utf-8"))
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_grid(args):
    cfg = load_config(args.config) if args.config else None
    path = grid_from_checkpoint(args.checkpoint, args.mode, args.out,
                                cfg=cfg, cols=args.cols, seed=args.seed)
    print(f"wrote {path}")
    return 0


def _load_report(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


_UTILITY_KEYS = ("reconstruction_mse", "utility_fid")


def _cmd_compare(args):
    clean = _load_report(args.clean)
    backdoored = _load_report(args.backdoored)
    print(f"clean:      {clean.get('kind')} seed {clean.get('seed')}")
    print(f"backdoored: {backdoored.get('kind')} seed {backdoored.get('seed')}")
    cv, bv = clean.get("values", {}), backdoored.get("values", {})
    shown = False
    for key in _UTILITY_KEYS:
        if key in cv and key in bv:
            delta = bv[key] - cv[key]
            pct = 100.0 * delta / cv[key] if cv[key] else float("inf")
            print(f"  {key}: clean {cv[key]:.6g}  backdoored {bv[key]:.6g}  "
                  f"delta {delta:+.6g} ({pct:+.2f}%)")
            shown = True
    for key in sorted(bv):
        if key.startswith("backdoor_error") or key.endswith("_fraction"):
            print(f"  {key}: {bv[key]:.6g}")
            shown = True
    if not shown:
        print("  no comparable utility values found")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="backdoor-lab",
                                     description="Backdoor attacks against "
                                                 "autoencoders and GANs, desk scale.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run an experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="override the output directory")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="recompute metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="write the report here instead of stdout")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("grid", help="render a sample grid from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mode", choices=("clean", "triggered"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="config (needed for AE grids / triggers)")
    p.add_argument("--cols", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_grid)

    p = sub.add_parser("compare", help="clean vs backdoored report deltas")
    p.add_argument("--clean", required=True)
    p.add_argument("--backdoored", required=True)
    p.set_defaults(fn=_cmd_compare)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except NumericsError as exc:
        print(f"numerics abort: {exc}", file=sys.stderr)
        return 3
    except (BackdoorLabError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
