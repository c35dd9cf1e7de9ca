"""Command-line interface.

Subcommands: forward, adjoint, taylor-test, grad-check, adjoint-test,
optimize, sparsity-map, report. All solver subcommands take --config,
--out, and --seed; report post-processes an existing output directory
into PNG figures.
"""

from __future__ import annotations

import argparse
import json
import sys

from .runner import SUBCOMMANDS, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chcontrol",
        description="Sparse optimal control of a hyperbolically relaxed "
                    "Cahn-Hilliard tumor-growth system")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        if name == "report":
            p.add_argument("--out", required=True,
                           help="run directory whose CSV outputs to render")
        else:
            p.add_argument("--config", required=True, help="run config path")
            p.add_argument("--out", default=None, help="output directory")
            p.add_argument("--seed", type=int, default=None,
                           help="override the config seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.subcommand == "report":
        status, manifest = run("report", None, out_dir=args.out)
    else:
        status, manifest = run(args.subcommand, args.config,
                               out_dir=args.out, seed=args.seed)
    if status == 0 and "metrics" in manifest:
        print(json.dumps(manifest["metrics"], indent=2, sort_keys=True))
    elif status == 0:
        print(json.dumps(manifest, indent=2, sort_keys=True))
    return status


if __name__ == "__main__":
    sys.exit(main())
