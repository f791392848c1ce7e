"""Command-line front end.

``capmcf run --preset NAME | --config FILE [--out DIR] [--stride N]
[--verbose] [--shrink lagged|standard]`` runs an experiment and writes
``contours.csv``, optional field dumps, ``manifest.json`` and figures.
``capmcf report DIR`` re-renders the figures of a finished run.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.  The
environment variable ``CAPMCF_OUT`` overrides ``--out``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import PRESETS, parse_config
from .grid import ConfigError
from .output import OutputError, emit_frame, write_manifest
from .scheme import load_snapshot, run, save_snapshot

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_CONFIG", "EXIT_RUNTIME"]

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("capmcf")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _override(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="capmcf", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run an experiment")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESETS))
    src.add_argument("--config", help="JSON config file or a run manifest to replay")
    r.add_argument("--out", help="output directory (CAPMCF_OUT takes precedence)")
    r.add_argument("--stride", type=int, help="emit a frame every N steps")
    r.add_argument("--verbose", action="store_true",
                   help="print 'iter residual energy' for every solver iteration")
    r.add_argument("--shrink", choices=("lagged", "standard"))
    r.add_argument("--dump-fields", action="store_true", default=None,
                   help="write w_<k>.txt at every frame")
    r.add_argument("--pgm", action="store_true", default=None,
                   help="also write w_<k>.pgm quick-look images (implies --dump-fields)")
    r.add_argument("--no-plot", dest="plot", action="store_false", default=None,
                   help="skip the matplotlib figures")
    r.add_argument("--set", dest="overrides", action="append", type=_override,
                   default=[], metavar="KEY=VALUE",
                   help="override a config key (value parsed as JSON), repeatable")
    r.add_argument("--snapshot", action="store_true",
                   help="save the final state to OUT/snapshot for later --resume")
    r.add_argument("--resume", metavar="DIR", help="continue from a saved snapshot")

    rep = sub.add_parser("report", help="render figures of a finished run")
    rep.add_argument("out")
    return p


def _cmd_run(args) -> int:
    out = os.environ.get("CAPMCF_OUT") or args.out
    overrides = dict(args.overrides)
    for key in ("stride", "shrink", "dump_fields", "pgm", "plot"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    if args.pgm:
        overrides["dump_fields"] = True
    if out is not None:
        overrides["out"] = out
    try:
        cfg = parse_config(args.config, preset=args.preset, **overrides)
        state = load_snapshot(args.resume) if args.resume else None
    except (ConfigError, OSError, ValueError) as exc:
        print(f"capmcf: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if state is not None and state.grid != cfg.grid:
        print("capmcf: config error: snapshot grid does not match the config",
              file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(cfg.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if state is None:
            for old in out_dir.glob("w_*.*"):
                old.unlink()
            (out_dir / "contours.csv").unlink(missing_ok=True)
    except OSError as exc:
        print(f"capmcf: runtime error: cannot prepare {out_dir}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    log.info("running %s on %dx%d, h=%g, T=%g -> %s", cfg.preset or "polygon",
             cfg.n_x, cfg.n_y, cfg.time_step, cfg.T, out_dir)
    try:
        result = run(cfg, lambda st: emit_frame(st, cfg, out_dir), state=state,
                     keep_frames=False, verbose=args.verbose, stream=sys.stderr)
        write_manifest(out_dir, cfg, result)
        if args.snapshot:
            save_snapshot(out_dir / "snapshot", result.final)
        if cfg.plot:
            from .plotting import render_report

            render_report(out_dir)
    except OutputError as exc:
        print(f"capmcf: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not result.ok:
        print(f"capmcf: runtime error: {result.failure}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{result.final.k} steps, t = {result.final.t:.6g}, status {result.final.status}; "
          f"output in {out_dir}")
    return EXIT_OK


def _cmd_report(args) -> int:
    from .plotting import render_report

    try:
        for p in render_report(args.out):
            print(p)
    except (OSError, ValueError) as exc:
        print(f"capmcf: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_report(args)


if __name__ == "__main__":
    sys.exit(main())
