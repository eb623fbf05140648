"""``eigenbranch`` command line.

Subcommands ``mesh``, ``solve``, ``threshold``, ``certify``, ``diagram``
and ``reproduce``.  Diagnostics go to stderr (verbosity from the
``EIGENBRANCH_LOG`` environment variable); stdout receives a single JSON
status line.  Exit codes: 0 success, 2 geometry error, 3 meshing error,
4 non-convergence, 5 certification failed, 6 not applicable, 64 usage
error, 65 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

EXIT_USAGE = 64

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class _UsageExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2, which collides with the geometry error code
    def error(self, message):
        raise _UsageExit(f"{self.prog}: {message}")


def _hex(text: str) -> int:
    try:
        return int(text, 16)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a hexadecimal seed: {text!r}") from None


def _pair(text: str) -> tuple:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}") from None
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", help="output directory (overrides output.directory)")
    common.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    common.add_argument("--seed", type=_hex, default=None, help="eigensolver seed, hexadecimal")

    p = _Parser(prog="eigenbranch", description="Eigenfunction decay in branched planar domains.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, helptext in (
        ("mesh", "triangulate the configured domain"),
        ("solve", "compute the lowest eigenpairs"),
        ("threshold", "cross-section eigenvalues along the branch"),
        ("certify", "check the decay bounds for one eigenfunction"),
    ):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--config", required=True, help="JSON run configuration")
    d = sub.add_parser("diagram", parents=[common], help="localization diagram for right triangles")
    d.add_argument("--config", help="JSON run configuration (diagram section)")
    d.add_argument("--zeta-range", type=_pair, help="lo,hi")
    d.add_argument("--kappa-range", type=_pair, help="lo,hi")
    r = sub.add_parser("reproduce", parents=[common], help="run the pinned recipe of a figure")
    r.add_argument("figure", help="fig2, fig3, fig5, fig6a or fig6b")
    return p


def _status(command: str, code: int, info: dict) -> str:
    from .pipeline import clean

    return json.dumps(clean(dict(info, command=command, exit_code=code)), sort_keys=True)


def main(argv=None) -> int:
    level = os.environ.get("EIGENBRANCH_LOG", "WARNING").upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except _UsageExit as exc:
        print(exc, file=sys.stderr)
        print(json.dumps({"command": None, "exit_code": EXIT_USAGE, "error": str(exc)}))
        return EXIT_USAGE

    if args.threads is not None:
        if args.threads < 1:
            print("--threads must be positive", file=sys.stderr)
            print(json.dumps({"command": args.command, "exit_code": EXIT_USAGE, "error": "bad --threads"}))
            return EXIT_USAGE
        # effective only before the numerical libraries start their pools
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)

    from . import pipeline as pl

    try:
        if args.command == "reproduce":
            code, info = pl.cmd_reproduce(args.figure, args.out or "reproduce", args.seed)
        else:
            cfg = pl.RunConfig.load(args.config) if args.config else pl.RunConfig()
            if args.out:
                cfg.out_dir = pl.Path(args.out)
            if args.seed is not None:
                cfg.seed = args.seed
            if args.command == "diagram":
                if args.zeta_range:
                    cfg.zeta_range = pl._range(args.zeta_range, "zeta_range")
                if args.kappa_range:
                    cfg.kappa_range = pl._range(args.kappa_range, "kappa_range")
            handler = {
                "mesh": pl.cmd_mesh, "solve": pl.cmd_solve, "threshold": pl.cmd_threshold,
                "certify": pl.cmd_certify, "diagram": pl.cmd_diagram,
            }[args.command]
            code, info = handler(cfg)
    except Exception as exc:  # every failure still ends with a status line
        code = pl.exit_code_for(exc)
        if code == 1:
            logging.getLogger("eigenbranch").exception("unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        info = {"error": str(exc)}
    print(_status(args.command, code, info))
    return code


if __name__ == "__main__":
    sys.exit(main())
