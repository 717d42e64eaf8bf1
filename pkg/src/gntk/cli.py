"""Command-line entry point.

    gntk run [config.json] [--preset figure1] [--out DIR] [--seed N]
    gntk check [config.json] [--preset figure1]

Validation failures print a machine-readable error JSON to stderr and exit
nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, load_config
from .runner import check_experiment, run_experiment


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gntk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment and write artifacts")
    run_p.add_argument("config", nargs="?", default=None, help="JSON config file")
    run_p.add_argument("--preset", default=None, help="named preset (e.g. figure1)")
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")

    check_p = sub.add_parser("check", help="validate a config without running")
    check_p.add_argument("config", nargs="?", default=None, help="JSON config file")
    check_p.add_argument("--preset", default=None, help="named preset (e.g. figure1)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    try:
        config = load_config(args.config, preset=args.preset, overrides=overrides or None)
        if args.command == "run":
            summary = run_experiment(config, out_dir=args.out)
            json.dump({"ok": True, "out_dir": args.out or config.out_dir,
                       "checks": summary["checks"]}, sys.stdout)
            sys.stdout.write("\n")
            return 0
        payload = check_experiment(config)
        json.dump(payload, sys.stdout, indent=1)
        sys.stdout.write("\n")
        return 0
    except ConfigError as exc:
        json.dump(exc.to_json(), sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
