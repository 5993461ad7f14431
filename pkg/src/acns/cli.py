"""Command line entry point: ``acns run|sweep|analyze``.

Exit codes: 0 success, 1 configuration or precondition error, 2 blow-up or a
sweep with fewer than three complete rows.
"""

import argparse
from dataclasses import replace
from pathlib import Path
import sys

import numpy as np

from .ac_solver import Trajectory, initialize, resolve_time_grid, run
from .diagnostics import DIAGNOSTIC_COLUMNS, FRACTIONAL_COLUMNS, snapshot_table
from .elliptic import dirichlet_eigenbasis
from .errors import ACNSError, Blowup, ConfigError, CorruptSnapshot
from .fields import ScalarField, StaggeredField
from .geometry import build_domain
from .io import (
    csv_text,
    format_config,
    load_config,
    read_snapshot,
    snapshot_name,
    write_snapshot,
)

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2
RESOLVED_CONFIG = "config.ini"
LEDGER_CSV = "ledger.csv"
DIAGNOSTICS_CSV = "diagnostics.csv"
SNAPSHOT_DIR = "snapshots"


def _err(msg):
    print(f"acns: error: {msg}", file=sys.stderr)


def _apply_overrides(rc, args):
    if args.seed is not None:
        rc.sim = rc.sim.with_(initial=replace(rc.sim.initial, seed=args.seed))
    if args.workers is not None:
        rc.workers = args.workers
    return rc


def _out_dir(rc, args, cfg_path, suffix):
    if args.out:
        return Path(args.out)
    if rc.directory:
        return Path(rc.directory)
    return Path(cfg_path).with_suffix("").with_name(Path(cfg_path).stem + suffix)


def ledger_rows(ledger):
    return [
        (t, e, d, r)
        for t, e, d, r in zip(ledger.times, ledger.energy, ledger.dissipation, ledger.residual)
    ]


def diagnostics_csv(traj, rank):
    basis = dirichlet_eigenbasis(traj.geometry, rank)
    notes = [f"basis_rank={basis.rank} rank-dependent columns: {' '.join(FRACTIONAL_COLUMNS)}"]
    return csv_text("diagnostics", DIAGNOSTIC_COLUMNS, snapshot_table(traj, basis), notes)


def cmd_run(args):
    try:
        rc = _apply_overrides(load_config(args.config), args)
        geom = build_domain(rc.sim)
        state = initialize(rc.sim, geom)
        u_inf = max(float(np.max(np.abs(c))) for c in state.u.components)
        dt, n = resolve_time_grid(rc.sim, u_inf)
    except ACNSError as exc:
        _err(exc)
        return EXIT_CONFIG
    out = _out_dir(rc, args, args.config, ".run")
    if args.dry_run:
        print(f"config ok: {args.config}")
        print(f"grid {' x '.join(map(str, geom.cell_counts))}, {geom.n_fluid} fluid cells")
        print(f"dt {dt!r}, {n} steps, snapshot every {rc.sim.snapshot_every}")
        print(f"would write to {out}")
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    (out / RESOLVED_CONFIG).write_text(format_config(rc, dt))
    code = EXIT_OK
    try:
        traj, ledger = run(rc.sim.with_(dt=dt), geom, state)
    except Blowup as exc:
        _err(f"blow-up: {exc}")
        traj, ledger, code = exc.trajectory, exc.ledger, EXIT_BLOWUP
    if rc.snapshots or code == EXIT_BLOWUP:
        snaps = out / SNAPSHOT_DIR
        snaps.mkdir(exist_ok=True)
        items = list(enumerate(zip(traj.times, traj.velocities, traj.pressures)))
        if not rc.snapshots:
            items = items[-1:]  # last good state only
        for i, (t, u, p) in items:
            write_snapshot(snaps / snapshot_name(i), t, u, p, rc.sim.epsilon)
    (out / LEDGER_CSV).write_text(
        csv_text("ledger", ("t", "energy", "dissipation", "residual"), ledger_rows(ledger))
    )
    if code == EXIT_OK:
        (out / DIAGNOSTICS_CSV).write_text(diagnostics_csv(traj, rc.basis_rank))
        print(f"run complete: {len(traj.times)} snapshots in {out}; "
              f"energy residual {ledger.relative_residual():.3e} of E(0)")
    return code


def load_run(directory):
    """Rebuild ``(RunConfig, Trajectory)`` from a run directory."""
    directory = Path(directory)
    rc = load_config(directory / RESOLVED_CONFIG)
    geom = build_domain(rc.sim)
    files = sorted((directory / SNAPSHOT_DIR).glob("snap_*.acns"))
    if not files:
        raise CorruptSnapshot(str(directory / SNAPSHOT_DIR), "no snapshot files")
    times, vel, pres = [], [], []
    for i, f in enumerate(files):
        if f.name != snapshot_name(i):
            raise CorruptSnapshot(str(f), f"expected {snapshot_name(i)} in sequence")
        s = read_snapshot(f)
        if s.cell_counts != geom.cell_counts or s.velocity is None or s.pressure is None:
            raise CorruptSnapshot(str(f), "does not match the run's grid or lacks a field")
        try:
            vel.append(StaggeredField(s.velocity, geom))
            pres.append(ScalarField(s.pressure, geom))
        except ValueError as exc:
            raise CorruptSnapshot(str(f), str(exc)) from exc
        times.append(s.t)
    cadence = rc.sim.snapshot_every
    traj = Trajectory(geom, rc.sim.epsilon, rc.sim.mu, rc.sim.dt, cadence,
                      np.array(times), vel, pres)
    return rc, traj


def cmd_analyze(args):
    directory = Path(args.config)
    try:
        rc, traj = load_run(directory)
    except ACNSError as exc:
        _err(exc)
        return EXIT_CONFIG
    rank = args.basis_rank or rc.basis_rank
    if args.dry_run:
        print(f"{len(traj.times)} snapshots readable in {directory}; basis rank {rank}")
        return EXIT_OK
    target = Path(args.out) if args.out else directory / "analysis" / DIAGNOSTICS_CSV
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(diagnostics_csv(traj, rank))
    if rank != rc.basis_rank:
        print(f"note: basis rank {rank} differs from the run's {rc.basis_rank}; "
              f"columns {', '.join(FRACTIONAL_COLUMNS)} will differ")
    print(f"wrote {target}")
    return EXIT_OK


def cmd_sweep(args):
    from .sweep import default_workers, report_table, run_sweep, summary_text

    try:
        rc = _apply_overrides(load_config(args.config), args)
        eps = list(rc.epsilons)
        if len(eps) < 4:
            raise ConfigError(f"a sweep needs at least 4 epsilon values, got {len(eps)}",
                              None, args.config)
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("sweep.epsilons must be strictly decreasing", None, args.config)
        geom = build_domain(rc.sim)
    except ACNSError as exc:
        _err(exc)
        return EXIT_CONFIG
    workers = rc.workers or default_workers()
    out = _out_dir(rc, args, args.config, ".sweep")
    if args.dry_run:
        print(f"config ok: {args.config}")
        print(f"epsilons {' '.join(f'{e:g}' for e in eps)} on "
              f"{' x '.join(map(str, geom.cell_counts))}, {workers} worker(s)")
        print(f"strichartz basis rank {rc.sweep_basis_rank}; would write to {out}")
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    (out / RESOLVED_CONFIG).write_text(format_config(rc))
    basis = dirichlet_eigenbasis(geom, rc.sweep_basis_rank) if rc.sweep_basis_rank else None
    try:
        report = run_sweep(
            rc.sim, eps, workers=workers, basis=basis, multiples=rc.modulus_multiples,
            name=Path(args.config).stem,
            snapshot_dir=(out / "runs") if rc.sweep_snapshots else None,
        )
    except ACNSError as exc:
        _err(exc)
        return EXIT_CONFIG
    cols, rows = report_table(report)
    (out / "sweep.csv").write_text(csv_text("sweep", cols, rows))
    summary = summary_text(report)
    (out / "summary.txt").write_text(summary)
    print(summary, end="")
    return EXIT_OK if len(report.complete_rows()) >= 3 else EXIT_BLOWUP


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dry-run", action="store_true", default=argparse.SUPPRESS,
                        help="validate inputs and print the plan without writing files")
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS, metavar="N",
                        help="worker processes for sweeps")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, metavar="S",
                        help="override initial_data.seed")
    parser = argparse.ArgumentParser(prog="acns", parents=[common],
                                     description="Artificial-compressibility experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, target in (
        ("run", cmd_run, "config"),
        ("sweep", cmd_sweep, "config"),
        ("analyze", cmd_analyze, "run directory"),
    ):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("config", metavar=target.replace(" ", "_"))
        p.add_argument("--out", help="output path (directory, or CSV file for analyze)")
        if name == "analyze":
            p.add_argument("--basis-rank", type=int, default=None,
                           help="eigenbasis rank for the fractional norms")
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    for key, default in (("dry_run", False), ("workers", None), ("seed", None)):
        if not hasattr(args, key):
            setattr(args, key, default)
    if args.workers is not None and args.workers < 1:
        _err("--workers must be >= 1")
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
