"""Command line entry point: ``navlab <command> --config FILE [--seed S] [--out DIR]``."""
import argparse
import json
import logging
import sys

from . import experiments as ex


def build_parser():
    ap = argparse.ArgumentParser(prog="navlab", description="Navigability experiments on coherent geometries.")
    ap.add_argument("command", choices=sorted(ex.COMMANDS))
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--seed", type=int, help="run a single seed instead of the config's list")
    ap.add_argument("--out", help="output directory (default: config 'out' or ./results)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _summary(payload):
    if isinstance(payload, list):
        return "\n".join(
            f"B={r['B']:.6g} seed={r['seed']} success={r.get('success_rate', 'nan')} "
            f"edges={r.get('edges', 'nan')} status={r['status']}"
            for r in payload
        )
    return json.dumps(payload, indent=2, sort_keys=True, default=str)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = ex.load_config(args.config, seed=args.seed, out=args.out)
        code, payload = ex.COMMANDS[args.command](cfg, cfg["out"])
    except ex.ConfigError as exc:
        print(f"navlab: error: {exc}", file=sys.stderr)
        return ex.EXIT_USAGE
    print(_summary(payload))
    return code


if __name__ == "__main__":
    sys.exit(main())
