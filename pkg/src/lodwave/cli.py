"""Command-line front end.

    lodwave example1 --out runs/ex1
    lodwave example3 --hmin 1 --hmax 5 --ell 2,4 --out runs/ex3
    lodwave custom --config my.cfg --variants mllod_weighted,fem

Exit codes: 0 on success, 2 when some experiment rows failed but a report was
still written, 1 on configuration errors.
"""

from __future__ import annotations

import argparse
import sys

from . import harness
from .harness import ConfigError


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # config errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lodwave", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("example", choices=list(harness.EXAMPLES),
                   help="which experiment preset to run")
    p.add_argument("--config", metavar="PATH",
                   help="read 'key = value' lines first; flags override")
    p.add_argument("--hmin", type=int, metavar="E",
                   help="coarsest level exponent (H = 2^-E)")
    p.add_argument("--hmax", type=int, metavar="E",
                   help="finest level exponent")
    p.add_argument("--ell", metavar="L,L,...",
                   help="localization radii for the weighted bases")
    p.add_argument("--fine", type=int, metavar="E",
                   help="reference level exponent (h = 2^-E)")
    p.add_argument("--eps", type=int, metavar="E",
                   help="coefficient resolution exponent")
    p.add_argument("--seed", type=int, metavar="N", help="random field seed")
    p.add_argument("--variants", metavar="V,V,...",
                   help="subset of " + ",".join(harness.KNOWN_VARIANTS))
    p.add_argument("--alpha-file", metavar="PATH", dest="alpha_file",
                   help="load the wave-speed coefficient from a text file")
    p.add_argument("--beta-file", metavar="PATH", dest="beta_file",
                   help="load the density coefficient from a text file")
    p.add_argument("--out", metavar="DIR", help="report directory")
    p.add_argument("--deterministic", dest="deterministic",
                   action="store_true", default=None,
                   help="bit-identical reports on identical calls (default)")
    p.add_argument("--no-deterministic", dest="deterministic",
                   action="store_false", help=argparse.SUPPRESS)
    p.add_argument("--threads", type=int, metavar="N",
                   help="worker threads for basis construction")
    p.add_argument("--timing", dest="with_timing", action="store_true",
                   default=None, help="also run the online timing comparison")
    p.add_argument("--no-timing", dest="with_timing", action="store_false",
                   help=argparse.SUPPRESS)
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")
    return p


_FLAG_KEYS = ("hmin", "hmax", "ell", "fine", "eps", "seed", "variants",
              "alpha_file", "beta_file", "out", "threads")


def config_from_args(args) -> harness.ExperimentConfig:
    if args.example == "example1":
        cfg = harness.example1_config()
    elif args.example == "example2":
        cfg = harness.example2_config()
    elif args.example == "example3":
        cfg = harness.example3_config()
    else:
        cfg = harness.validate_config(harness.ExperimentConfig(example="custom"))
    if args.config:
        cfg = harness.config_from_items(harness.parse_config_file(args.config),
                                        base=cfg)
    items = {}
    for key in _FLAG_KEYS:
        val = getattr(args, key)
        if val is not None:
            items[key] = str(val)
    if args.deterministic is not None:
        items["deterministic"] = "true" if args.deterministic else "false"
    if args.with_timing is not None:
        items["with_timing"] = "true" if args.with_timing else "false"
    if items:
        cfg = harness.config_from_items(items, base=cfg)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (ConfigError, OSError) as exc:
        print(f"lodwave: error: {exc}", file=sys.stderr)
        return 1
    progress = (lambda msg: None) if args.quiet else (
        lambda msg: print(msg, flush=True))
    report = harness.run_report(cfg, progress=progress)
    out_dir = cfg.out or f"report_{cfg.example}"
    written = harness.emit_report(report, out_dir)
    for path in written:
        progress(f"wrote {path}")
    if report.row_failures:
        for failure in report.row_failures:
            print(f"lodwave: row failed: {failure}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
