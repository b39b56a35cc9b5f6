"""Command-line driver: ``mcflow {params,init,run,analyze}``.

Exit status is 0 on success, 1 for usage and configuration errors, 2 when the
computation itself fails.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .diagnostics import DiagnosticsRecorder, classify, fit_blowup
from .errors import ConfigError, MCFError
from .flow import FlowState, StopCriteria, run, settle
from .initial_data import (
    FarPerturbation,
    NearPerturbation,
    apply_far,
    apply_near,
    build_patches,
    derive_params,
)
from .output import read_series, write_series, write_snapshot

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mcflow", description="Mean curvature flow of entire graphs on two overlapping patches.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", default="default", help="config file, or 'default'")
        sp.add_argument("--out", default=None, help="output directory (overrides output_dir)")
        sp.add_argument("--snapshot-every", type=int, default=None, metavar="N",
                        help="write a snapshot every N steps (overrides snapshot_stride)")

    common(sub.add_parser("params", help="print the derived flow parameters"))
    common(sub.add_parser("init", help="write the initial snapshot"))
    common(sub.add_parser("run", help="evolve and write snapshots and the series"))
    an = sub.add_parser("analyze", help="fit a blowup law to a series file")
    common(an)
    an.add_argument("series", nargs="?", default=None, help="series.csv (default: <out>/series.csv)")
    an.add_argument("--channel", choices=("tip", "neck"), default=None,
                    help="tip or neck (default: neck for far runs, tip otherwise)")
    an.add_argument("--T-hint", type=float, default=None, dest="T_hint")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def initial_state(cfg: RunConfig) -> FlowState:
    """Build, perturb and settle the two-patch state described by ``cfg``."""
    params = derive_params(cfg.gamma, cfg.c, cfg.tau0, cfg.R1)
    surf = build_patches(params, cfg.Nx, cfg.Ny, cfg.Nz, cfg.Ntheta, z_max=cfg.z_max)
    cart, cyl = surf.cart, surf.cyl
    if cfg.perturbation == "near":
        cart = apply_near(cart, NearPerturbation(cfg.a0, cfg.a1, cfg.r_m))
    elif cfg.perturbation == "far":
        cyl = apply_far(cyl, FarPerturbation(cfg.a0, cfg.z_a, cfg.z_b, cfg.n))
    return settle(FlowState(cart, cyl))


def stop_criteria(cfg: RunConfig) -> StopCriteria:
    floor = cfg.r_min_floor
    if floor is None:
        floor = 1e-3 * derive_params(cfg.gamma, cfg.c, cfg.tau0, cfg.R1).r0
    return StopCriteria(floor, cfg.curvature_ceiling, cfg.t_max, cfg.max_steps)


def neck_window(cfg: RunConfig):
    return (cfg.z_a, cfg.z_b) if cfg.perturbation == "far" else None


def _cmd_params(cfg: RunConfig, out) -> int:
    p = derive_params(cfg.gamma, cfg.c, cfg.tau0, cfg.R1)
    for key in ("gamma", "c", "tau0", "R1", "beta", "r1", "r0", "T"):
        print(f"{key} = {getattr(p, key):.16e}", file=out)
    return 0


def _cmd_init(cfg: RunConfig, out) -> int:
    state = initial_state(cfg)
    for path in write_snapshot(state, cfg.output_dir, 0):
        print(f"wrote {path}", file=out)
    return 0


def _cmd_run(cfg: RunConfig, out) -> int:
    state = initial_state(cfg)
    recorder = DiagnosticsRecorder(M=cfg.modes, neck_window=neck_window(cfg))
    snap_index = [1]

    def record(s: FlowState) -> None:
        if recorder.series.t and s.t <= recorder.series.t[-1]:
            return
        recorder(s)

    def hook(s: FlowState) -> None:
        if s.step_count % cfg.series_stride == 0:
            record(s)
        if cfg.snapshot_stride and s.step_count and s.step_count % cfg.snapshot_stride == 0:
            write_snapshot(s, cfg.output_dir, snap_index[0])
            snap_index[0] += 1

    write_snapshot(state, cfg.output_dir, 0)
    result = run(state, stop_criteria(cfg), [hook], safety=cfg.safety, progress_every=10.0)
    record(result.state)
    s = result.state
    if cfg.snapshot_stride and s.step_count % cfg.snapshot_stride:
        write_snapshot(s, cfg.output_dir, snap_index[0])
    path = write_series(recorder.series, cfg.output_dir)
    print(f"reason = {result.reason}", file=out)
    if result.message:
        print(f"message = {result.message}", file=out)
    print(f"t = {s.t:.16e}", file=out)
    print(f"steps = {s.step_count}", file=out)
    print(f"regrids = {s.overlap.n_regrids}", file=out)
    print(f"wall_time = {result.wall_time:.3f}", file=out)
    print(f"series = {path}", file=out)
    if result.reason in ("numerical_blowup", "overlap_failure"):
        print(f"mcflow: run failed: {result.reason}: {result.message}", file=sys.stderr)
        return 2
    return 0


def _cmd_analyze(cfg: RunConfig, args, out) -> int:
    path = Path(args.series) if args.series else Path(cfg.output_dir) / "series.csv"
    series = read_series(path)
    channel = args.channel or ("neck" if cfg.perturbation == "far" else "tip")
    T_hint = args.T_hint
    if T_hint is None and channel == "tip":
        T_hint = derive_params(cfg.gamma, cfg.c, cfg.tau0, cfg.R1).T
    fit = fit_blowup(series, channel, T_hint)
    print(f"channel = {fit.channel}", file=out)
    print(f"exponent = {fit.exponent:.16e}", file=out)
    print(f"T_est = {fit.T_est:.16e}", file=out)
    print(f"residual = {fit.residual:.16e}", file=out)
    print(f"window_start = {fit.window[0]:.16e}", file=out)
    print(f"window_end = {fit.window[1]:.16e}", file=out)
    print(f"n_rows = {fit.n_rows}", file=out)
    print(f"class = {classify(series, fit)}", file=out)
    return 0


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "mcflow: a subcommand is required")
        cfg = load_config(args.config)
        if args.out is not None:
            cfg.output_dir = args.out
        if args.snapshot_every is not None:
            if args.snapshot_every < 0:
                raise UsageError("--snapshot-every must be non-negative")
            cfg.snapshot_stride = args.snapshot_every
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"mcflow: config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"mcflow: cannot read config: {exc}", file=sys.stderr)
        return 1

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "params":
            return _cmd_params(cfg, out)
        if args.command == "init":
            return _cmd_init(cfg, out)
        if args.command == "run":
            return _cmd_run(cfg, out)
        return _cmd_analyze(cfg, args, out)
    except (MCFError, ValueError, OSError) as exc:
        print(f"mcflow: {args.command} failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
