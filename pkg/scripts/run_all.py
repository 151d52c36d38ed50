#!/usr/bin/env python3
"""Run every registered experiment with its preset and print a pass/fail table.

    python3 scripts/run_all.py [--out runs] [--threads 4] [--only tilt pinning]
"""
import argparse
import sys
import time

from gglab import experiments as ex


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--only", nargs="*")
    args = ap.parse_args()
    names = args.only or list(ex.REGISTRY)
    failed = 0
    for name in names:
        t0 = time.perf_counter()
        res = ex.run(name, out=f"{args.out}/{name}", threads=args.threads)
        dt = time.perf_counter() - t0
        print(f"{name:22s} {'PASS' if res.passed else 'FAIL'}  {dt:8.1f}s  budget {ex.REGISTRY[name].budget:.0f}s")
        for c in res.checks:
            if c.gating and not c.passed:
                print("    " + c.line())
        failed += not res.passed
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
