"""Command line entry point.

::

    gglab list
    gglab run <name> [--config PATH] [--seed S] [--out DIR] [--threads K]
    gglab replay <manifest.json> [--threads K]

``GGLAB_OUT`` and ``GGLAB_THREADS`` override the output directory and
thread count when the flags are absent. Exit codes: 0 pass, 1 check
failure, 2 usage error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import traceback

from .config import ConfigError, load

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_ERROR = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gglab", description="finite-volume gradient interface experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("list", help="list experiments with their default configs")
    r = sub.add_parser("run", help="run a named experiment")
    r.add_argument("name")
    r.add_argument("--config", help="INI config (defaults to the experiment preset)")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--threads", type=int)
    rp = sub.add_parser("replay", help="re-run a manifest and compare output checksums")
    rp.add_argument("manifest")
    rp.add_argument("--threads", type=int)
    return p


def _env_int(name):
    v = os.environ.get(name)
    if v is None:
        return None
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {v!r}") from None


def main(argv=None) -> int:
    from . import experiments as ex

    args = _parser().parse_args(argv)
    if args.command == "list":
        for name, desc, cfg in ex.list_experiments():
            print(f"{name:22s} {desc}")
            print(f"{'':22s} d={cfg.d} N={cfg.N} model={cfg.model} potential={cfg.potential} "
                  f"ensemble={cfg.ensemble} seed={cfg.seed}")
        return EXIT_PASS

    try:
        threads = args.threads or _env_int("GGLAB_THREADS")
        if args.command == "replay":
            res = ex.replay(args.manifest, threads=threads)
            if res.ok:
                print("replay: identical checksums")
                return EXIT_PASS
            print(json.dumps({"replay": "mismatch", "files": res.mismatches}))
            return EXIT_FAIL

        if args.name not in ex.REGISTRY:
            print(f"gglab: error: unknown experiment {args.name!r}; see 'gglab list'", file=sys.stderr)
            return EXIT_USAGE
        cfg = load(args.config) if args.config else ex.preset(args.name)
        if cfg.name != args.name:
            raise ConfigError(f"config is for {cfg.name!r}, not {args.name!r}")
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        cfg.validate()
        out = args.out or os.environ.get("GGLAB_OUT")
        if out is None:
            out = os.path.join(cfg.out_dir, args.name)
        res = ex.run(args.name, cfg, out, threads=threads)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"gglab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - report any failure as a runtime error
        traceback.print_exc()
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_ERROR

    print((res.out / "summary.txt").read_text(), end="")
    if res.manifest["budget_exceeded"]:
        print(f"warning: wall clock {res.manifest['wall_clock_s']:.1f}s exceeded the "
              f"{res.manifest['budget_s']:.0f}s budget", file=sys.stderr)
    if not res.passed:
        for f in res.failures():
            print(json.dumps({k: f[k] for k in ("id", "measured", "target", "tolerance")}), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
