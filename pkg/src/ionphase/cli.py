"""``ionphase`` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 fit non-convergence,
4 I/O or parse error.  Other fit failures exit with 1.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import PRESETS, load_config
from .errors import ConfigError, IonPhaseError, NonConvergence, RecordFormatError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_IO = 0, 1, 2, 3, 4


def default_threads() -> int:
    env = os.environ.get("IONPHASE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"IONPHASE_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("IONPHASE_THREADS must be positive")
        return n
    return os.cpu_count() or 1


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ionphase", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"config JSON path or preset name ({', '.join(PRESETS)})")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=_positive,
                        help="worker threads (default: $IONPHASE_THREADS or all cores)")
    common.add_argument("--out", help="output directory (default: config output.dir)")

    sim = sub.add_parser("simulate", parents=[common], help="synthesize a dataset")
    rec = sub.add_parser("reconstruct", parents=[common], help="fit a dataset")
    rec.add_argument("--data", help="dataset directory (default: the simulate output dir)")
    st = sub.add_parser("selftest", parents=[common], help="run oracle and invariant suites")
    st.add_argument("--eta", type=float, help="Lamb-Dicke factor for the LD-limit suite")
    st.add_argument("--dt", type=float, help="full-wave step override (s) for the convergence check")
    for p in (sim, rec):
        p.set_defaults(needs_config=True)
    st.set_defaults(needs_config=False)
    return parser


def _run(args) -> int:
    threads = args.threads or default_threads()
    if args.command == "selftest":
        from .selftest import run_selftest

        ok = run_selftest(eta=args.eta, dt=args.dt, stream=sys.stdout)
        return EXIT_OK if ok else EXIT_FAIL

    from .pipelines import reconstruct, simulate

    if args.config is None and not (args.command == "reconstruct" and args.data):
        raise ConfigError("--config is required")
    cfg = load_config(args.config) if args.config is not None else None
    if args.seed is not None and cfg is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    if args.command == "simulate":
        out = Path(args.out or cfg["output"]["dir"])
        simulate(cfg, out, threads=threads)
        print(f"wrote dataset to {out}")
        return EXIT_OK
    data = Path(args.data or cfg["output"]["dir"])
    out = Path(args.out) if args.out else data
    reconstruct(data, out, cfg, threads=threads)
    print(f"wrote fit results to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergence as exc:
        print(f"fit did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (RecordFormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except IonPhaseError as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
