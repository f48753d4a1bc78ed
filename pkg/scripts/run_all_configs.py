"""Run every bundled experiment config into out/<name>/ and report exit codes."""

import argparse
import sys
import time

from dualdrag.cli import BUNDLED, run_config


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("names", nargs="*", default=list(BUNDLED))
    parser.add_argument("--out", default="out")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    failed = 0
    for name in args.names:
        start = time.perf_counter()
        code = run_config(name, workers=args.workers, out=f"{args.out}/{name}")
        print(f"# {name}: exit {code} in {time.perf_counter() - start:.1f} s", file=sys.stderr)
        failed += code != 0
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
