"""Command-line entry point: ``branchveil <command> --config run.yaml``."""
from __future__ import annotations

import argparse
import logging
import sys

from .io import COMMANDS, ConfigError, load_config, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="branchveil", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "verify":
            p.add_argument("experiment", nargs="?", help="experiment id (overrides the config)")
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, help="worker processes for replicate ensembles")
        p.add_argument("--quiet", action="store_true", help="only report warnings and errors")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, command=args.command,
                          experiment=getattr(args, "experiment", None),
                          seed=args.seed, out=args.out, threads=args.threads)
    except (OSError, ConfigError) as err:
        logging.getLogger("branchveil").error("%s", err)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
