"""Command-line entry point.

Exit status: 0 on success, 1 when a run fails, 2 for usage or configuration
errors.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import SUBCOMMANDS, build_settings, load_file
from .errors import ConfigError, OfdmClipError

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

HELP = {
    "ber-sweep": "bit error rate against Eb/N0",
    "rc-sweep": "bit error rate against the number of reliable carriers",
    "cr-sweep": "bit error rate against the clipping ratio",
    "bootstrap": "sparsity/noise bootstrap against the clipping ratio",
    "simo": "individual vs joint recovery over receive antennas",
    "multiuser": "two-user interleaved OFDMA recovery against Eb/N0",
    "chanest": "channel estimation MSE against Eb/N0",
    "chanest-error": "recovery bit error rate against channel estimation error",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML file with run settings")
    common.add_argument("--seed", type=_seed, help="master seed (default 0)")
    common.add_argument("--out", default=None, help="output directory (default: results/<subcommand>)")
    common.add_argument("--target-errors", type=_positive_int, help="stop a point after this many errors")
    common.add_argument("--max-frames", type=_positive_int, help="frame cap per point")
    common.add_argument("--algorithms", help="comma-separated algorithm names")
    common.add_argument("--threads", type=_positive_int, help="worker threads (results do not depend on it)")
    common.add_argument("--quiet", action="store_true", help="suppress progress lines")

    p = _Parser(prog="ofdmclip", description="Simulate receiver-side clipping recovery for OFDM.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name], description=HELP[name])
    sub.add_parser("selftest", help="quick checks against brute-force references")
    return p


def _run_sweep(args) -> int:
    from .sweep import emit, run_sweep

    data, text, path = None, "", "<defaults>"
    if args.config:
        data, text = load_file(args.config)
        path = args.config
    overrides = {
        "seed": args.seed,
        "target_errors": args.target_errors,
        "max_frames": args.max_frames,
        "threads": args.threads,
        "algorithms": args.algorithms,
    }
    settings = build_settings(args.command, data, text, path, overrides)
    out = Path(args.out or f"results/{args.command}")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from None
    echo = (lambda msg: None) if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    result = run_sweep(settings.setup, threads=settings.threads, progress=echo)
    for f in emit(result, out):
        print(f)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "selftest":
            from . import selftest

            return EXIT_OK if selftest.run() else EXIT_RUNTIME
        return _run_sweep(args)
    except ConfigError as exc:
        print(f"ofdmclip: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OfdmClipError, OSError, ArithmeticError, ValueError) as exc:
        print(f"ofdmclip: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        print("ofdmclip: interrupted", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
