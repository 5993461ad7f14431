"""Epsilon sweeps: shared time grid, per-run measurements, rate fits and the limit comparison."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import math
import os
from pathlib import Path

import numpy as np
from scipy import stats

from .ac_solver import initialize, resolve_time_grid, run
from .diagnostics import (
    apriori_bounds,
    leray_series,
    loc_window,
    q_decay,
    solenoidal_time_modulus,
    windowed_l2,
)
from .errors import ACNSError, DegeneratePoints, GridMismatch, PreconditionError
from .fields import lp_norm, time_norm
from .geometry import build_domain
from .ns_reference import run_reference

MODULUS_MULTIPLES = (2, 4, 8, 16)
STANDARD_EPSILONS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)


@dataclass
class RateFit:
    slope: float
    intercept: float
    lo: float
    hi: float
    n: int
    excluded: int = 0

    def contains(self, value):
        return self.lo <= value <= self.hi


def fit_rate(points, confidence=0.95):
    """Least squares of ``log value`` on ``log eps`` with a t-based slope interval.

    Non-positive values are dropped and counted in ``excluded``.
    """
    pts = [(float(e), float(v)) for e, v in points]
    good = [(e, v) for e, v in pts if v > 0 and e > 0 and math.isfinite(v)]
    if len(good) < 3:
        raise DegeneratePoints(f"need 3 positive values, got {len(good)}")
    x = np.log([e for e, _ in good])
    y = np.log([v for _, v in good])
    res = stats.linregress(x, y)
    half = stats.t.ppf(0.5 + confidence / 2, len(good) - 2) * res.stderr
    return RateFit(
        float(res.slope), float(res.intercept), res.slope - half, res.slope + half,
        len(good), len(pts) - len(good),
    )


def compare_to_limit(trajectory, reference, radius=1.0):
    """``||P u_eps - u_ref||`` in ``L^2([0,T]; L^2(window))``, window = faces near the obstacle."""
    g, r = trajectory.geometry, reference.geometry
    if not g.same_grid(r):
        raise GridMismatch("trajectories live on different grids")
    if len(trajectory.times) != len(reference.times) or not np.allclose(
        trajectory.times, reference.times, rtol=0, atol=1e-12
    ):
        raise GridMismatch("trajectories have different snapshot times")
    masks = loc_window(g, radius)
    if trajectory.epsilon is None:
        sol = trajectory.velocities
    else:
        sol, _ = leray_series(trajectory)
    diffs = [windowed_l2(a - b, masks) for a, b in zip(sol, reference.velocities)]
    return time_norm(diffs, trajectory.snapshot_dt, 2)


@dataclass
class SweepRow:
    epsilon: float
    status: str = "ok"
    energy_residual: float = math.nan
    bounds: object = None
    q_decay_4: float = math.nan
    q_decay_5: float = math.nan
    strichartz_lhs: float = math.nan
    strichartz_rhs: float = math.nan
    strichartz_ratio: float = math.nan
    limit_error: float = math.nan
    eps_p_LinfL2: float = math.nan
    sqrt_eps_p_LinfL2: float = math.nan
    grad_u_L2L2: float = math.nan
    time_modulus: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == "ok"


@dataclass
class ConvergenceReport:
    scenario: str
    cell_counts: tuple
    dt: float
    t_end: float
    cadence: int
    e0: float
    ref_norm: float
    rows: list
    fits: dict
    flags: dict

    def complete_rows(self):
        return [r for r in self.rows if r.ok]


def _measure(cfg, epsilon, reference, basis, multiples, snapshot_dir=None):
    """One sweep row; errors are captured into ``status``."""
    row = SweepRow(epsilon)
    try:
        traj, ledger = run(cfg.with_(epsilon=epsilon))
        if snapshot_dir is not None:
            from .io import snapshot_name, write_snapshot

            out = Path(snapshot_dir) / f"eps_{epsilon:.6g}"
            out.mkdir(parents=True, exist_ok=True)
            for i, (t, u, p) in enumerate(zip(traj.times, traj.velocities, traj.pressures)):
                write_snapshot(out / snapshot_name(i), t, u, p, epsilon)
        row.energy_residual = ledger.relative_residual()
        row.bounds = apriori_bounds(traj)
        row.sqrt_eps_p_LinfL2 = row.bounds.sqrt_eps_p_LinfL2
        row.grad_u_L2L2 = row.bounds.grad_u_L2L2
        row.eps_p_LinfL2 = epsilon * max(lp_norm(p, 2) for p in traj.pressures)
        row.q_decay_4 = q_decay(traj, 4)
        row.q_decay_5 = q_decay(traj, 5)
        if basis is not None:
            from .acoustics import strichartz_functional

            s = strichartz_functional(traj, epsilon, basis)
            row.strichartz_lhs, row.strichartz_rhs, row.strichartz_ratio = s.lhs, s.rhs, s.ratio
        if reference is not None:
            row.limit_error = compare_to_limit(traj, reference)
        for m in multiples:
            h = m * traj.snapshot_dt
            if h < traj.times[-1]:
                row.time_modulus[m] = solenoidal_time_modulus(traj, h)
    except ACNSError as exc:
        row.status = f"failed: {type(exc).__name__}: {exc}"
    return row


def _worker(args):
    return _measure(*args)


def default_workers():
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1


def run_sweep(scenario, epsilons=STANDARD_EPSILONS, workers=1, basis=None,
              multiples=MODULUS_MULTIPLES, name="standard", snapshot_dir=None):
    """Run ``scenario`` (a ``SimConfig``) at each epsilon on one shared time grid.

    ``dt`` is set by the smallest epsilon.  The incompressible reference runs
    once on the same grid and data.  Per-epsilon runs execute in ``workers``
    processes; report assembly happens afterwards in the caller.
    """
    eps = [float(e) for e in epsilons]
    if len(eps) < 4:
        raise PreconditionError(f"a sweep needs at least 4 epsilon values, got {len(eps)}")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise PreconditionError("epsilon values must be strictly decreasing")
    geom = build_domain(scenario)
    state = initialize(scenario, geom)
    u_inf = max(float(np.max(np.abs(c))) for c in state.u.components)
    dt, _ = resolve_time_grid(scenario, u_inf, epsilon=min(eps))
    cfg = scenario.with_(dt=dt)
    reference = run_reference(cfg, geom, state.copy(), dt=dt)
    ref_norm = time_norm(
        [windowed_l2(u, loc_window(geom)) for u in reference.velocities],
        reference.snapshot_dt, 2,
    )
    jobs = [(cfg, e, reference, basis, tuple(multiples), snapshot_dir) for e in eps]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_worker, jobs))
    else:
        rows = [_measure(*j) for j in jobs]
    e0 = 0.5 * lp_norm(state.u, 2) ** 2
    fits, flags = _assess(rows, e0, ref_norm)
    return ConvergenceReport(
        name, geom.cell_counts, dt, cfg.t_end, int(cfg.snapshot_every), e0, ref_norm,
        rows, fits, flags,
    )


FIT_TARGETS = ("q_decay_4", "q_decay_5", "eps_p_LinfL2", "limit_error")


def _decreasing(values):
    return all(b < a for a, b in zip(values, values[1:]))


def _assess(rows, e0, ref_norm):
    """Rate fits plus pass/fail flags; degenerate data is flagged, not raised."""
    done = [r for r in rows if r.ok]
    fits = {}
    for key in FIT_TARGETS:
        try:
            fits[key] = fit_rate([(r.epsilon, getattr(r, key)) for r in done])
        except DegeneratePoints:
            fits[key] = None
    flags = {"degenerate": all(v is None for v in fits.values())}
    if len(done) < 3:
        flags["enough_rows"] = False
        return fits, flags
    flags["enough_rows"] = True
    flags["energy_residual"] = all(r.energy_residual <= 0.02 for r in done)
    bound = 2.0 * math.sqrt(2.0 * e0) if e0 > 0 else 0.0
    flags["pressure_bounded"] = max(r.sqrt_eps_p_LinfL2 for r in done) <= bound + 1e-12
    fit = fits["eps_p_LinfL2"]
    flags["eps_p_decay"] = _decreasing([r.eps_p_LinfL2 for r in done]) and fit is not None and fit.slope >= 0.4
    fit = fits["q_decay_4"]
    flags["q_decay"] = _decreasing([r.q_decay_4 for r in done]) and fit is not None and fit.slope >= 1 / 72
    flags["limit"] = _decreasing([r.limit_error for r in done]) and done[-1].limit_error <= 0.1 * ref_norm
    ratios = [r.strichartz_ratio for r in done]
    flags["strichartz_finite"] = all(math.isfinite(x) for x in ratios)
    return fits, flags


def modulus_spread(row):
    """max/min of ``time_modulus(h) / h^{1/5}`` over the recorded offsets (in snapshot units)."""
    vals = [v / m**0.2 for m, v in row.time_modulus.items() if v > 0]
    return max(vals) / min(vals) if vals else math.nan


# ---------------------------------------------------------------------------
# report output
# ---------------------------------------------------------------------------

BOUND_COLUMNS = (
    "sqrt_eps_p_LinfL2", "grad_u_L2L2", "u_LinfL2", "u_L2L6", "adv_L2L1", "adv_L1L32",
    "divu_u_L2L1", "divu_u_L1L32", "eps_dtp_L2Hm1",
)
ROW_COLUMNS = (
    "epsilon", "status", "energy_residual", *BOUND_COLUMNS, "eps_p_LinfL2", "q_decay_4",
    "q_decay_5", "strichartz_lhs", "strichartz_rhs", "strichartz_ratio", "limit_error",
)


def report_table(report):
    """``(columns, rows)`` for the sweep CSV; modulus columns follow the offsets used."""
    mults = sorted({m for r in report.rows for m in r.time_modulus})
    cols = list(ROW_COLUMNS) + [f"modulus_h{m}" for m in mults]
    rows = []
    for r in report.rows:
        b = r.bounds.as_dict() if r.bounds is not None else {}
        vals = [r.epsilon, r.status, r.energy_residual]
        vals += [b.get(k, math.nan) for k in BOUND_COLUMNS]
        vals += [r.eps_p_LinfL2, r.q_decay_4, r.q_decay_5, r.strichartz_lhs,
                 r.strichartz_rhs, r.strichartz_ratio, r.limit_error]
        vals += [r.time_modulus.get(m, math.nan) for m in mults]
        rows.append(vals)
    return cols, rows


def summary_text(report):
    lines = [
        f"scenario: {report.scenario}",
        f"grid: {' x '.join(str(c) for c in report.cell_counts)}  dt: {report.dt!r}  "
        f"T: {report.t_end!r}  snapshot every {report.cadence} steps",
        f"E(0): {report.e0!r}  ||u_ref|| on the window: {report.ref_norm!r}",
        f"rows complete: {len(report.complete_rows())}/{len(report.rows)}",
        "",
        "fitted log-log slopes against epsilon (95% interval):",
    ]
    for key, fit in report.fits.items():
        if fit is None:
            lines.append(f"  {key}: degenerate (fewer than 3 positive values)")
        else:
            lines.append(f"  {key}: {fit.slope:.4f}  [{fit.lo:.4f}, {fit.hi:.4f}]  n={fit.n}")
    fit = report.fits.get("q_decay_4")
    if fit is not None:
        lines.append(f"  q_decay_4 slope vs the analytic bound exponent 1/72 = {1 / 72:.4f}: "
                     f"{'at least' if fit.slope >= 1 / 72 else 'below'}")
    lines += ["", "checks:"]
    lines += [f"  {k}: {'pass' if v else 'fail'}" for k, v in report.flags.items() if k != "degenerate"]
    if report.flags.get("degenerate"):
        lines.append("  all fits degenerate (zero data?)")
    done = report.complete_rows()
    if done:
        spread = [modulus_spread(r) for r in done]
        lines.append("  modulus/h^(1/5) spread per epsilon: "
                     + ", ".join(f"{r.epsilon:g}:{s:.3g}" for r, s in zip(done, spread)))
        lines.append("  ||grad u||_L2L2 per epsilon (uniform bound is the testable shadow of "
                     "weak L2H1 convergence): "
                     + ", ".join(f"{r.epsilon:g}:{r.grad_u_L2L2:.4g}" for r in done))
        lines.append("  eps dp/dt in L2H-1 per epsilon (a bound only; compactness is not "
                     "testable from finite runs): "
                     + ", ".join(f"{r.epsilon:g}:{r.bounds.eps_dtp_L2Hm1:.4g}" for r in done))
    for r in report.rows:
        if not r.ok:
            lines.append(f"  eps={r.epsilon:g} {r.status}")
    return "\n".join(lines) + "\n"
