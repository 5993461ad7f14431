"""Energy ledger, a priori bounds, gradient-part decay and time-translation modulus."""

from dataclasses import dataclass, field, asdict

import numpy as np

from .elliptic import solve_poisson_dirichlet
from .errors import OffsetTooLarge, PreconditionError
from .fields import (
    ScalarField,
    StaggeredField,
    convective_raw,
    div_raw,
    grad_energy_raw,
    lp_norm,
    negative_sobolev_lp_norm,
    time_norm,
)
from .hodge import leray_decompose

LOC_RADIUS = 1.0


@dataclass
class EnergyLedger:
    times: np.ndarray
    energy: np.ndarray  # 1/2 |u|^2 + eps/2 |p|^2
    dissipation: np.ndarray  # mu * int_0^t |grad u|^2, trapezoid
    residual: np.ndarray  # E(t) + dissipation(t) - E(0)

    @property
    def e0(self):
        return float(self.energy[0])

    def relative_residual(self):
        """``|residual(T)| / E(0)``."""
        return abs(float(self.residual[-1])) / self.e0 if self.e0 > 0 else 0.0


def energy_ledger(trajectory, epsilon=None):
    eps = trajectory.epsilon if epsilon is None else epsilon
    g = trajectory.geometry
    vol = g.cell_volume
    energy = []
    grad2 = []
    for u, p in zip(trajectory.velocities, trajectory.pressures):
        kin = 0.5 * sum(float(np.sum(c * c)) for c in u.components) * vol
        pot = 0.0 if eps is None else 0.5 * eps * float(np.sum(p.values**2)) * vol
        energy.append(kin + pot)
        grad2.append(trajectory.mu * grad_energy_raw(u.components, g))
    energy = np.array(energy)
    grad2 = np.array(grad2)
    h = trajectory.snapshot_dt
    diss = np.zeros_like(energy)
    if energy.size > 1:
        diss[1:] = np.cumsum(0.5 * h * (grad2[1:] + grad2[:-1]))
    return EnergyLedger(trajectory.times.copy(), energy, diss, energy + diss - energy[0])


# ---------------------------------------------------------------------------
# a priori bounds
# ---------------------------------------------------------------------------

def _div_on_faces(div, geom):
    out = []
    for k in range(geom.ndim):
        if geom.periodic:
            avg = 0.5 * (div + np.roll(div, 1, axis=k))
        else:
            pad = [(0, 0)] * geom.ndim
            pad[k] = (1, 1)
            d = np.pad(div, pad)
            lo = [slice(None)] * geom.ndim
            hi = [slice(None)] * geom.ndim
            lo[k] = slice(None, -1)
            hi[k] = slice(1, None)
            avg = 0.5 * (d[tuple(lo)] + d[tuple(hi)])
        out.append(avg * geom.active_faces(k))
    return out


def nonlinear_parts(u):
    """Return ``((u.grad)u, (div u) u)`` as staggered fields."""
    g = u.geometry
    du = _div_on_faces(div_raw(u.components, g), g)
    divu_u = [d * c for d, c in zip(du, u.components)]
    conv = convective_raw(u.components, g)
    adv = [c - 0.5 * x for c, x in zip(conv, divu_u)]
    return StaggeredField(adv, g), StaggeredField(divu_u, g)


def h_minus_one_norm(f):
    """``||f||_{H^-1_D} = <f, (-Delta_D)^{-1} f>^{1/2}`` via one Dirichlet solve."""
    if not np.any(f.values):
        return 0.0
    phi = solve_poisson_dirichlet(f)
    g = f.geometry
    return float(np.sqrt(max(-np.sum(f.values * phi.values) * g.cell_volume, 0.0)))


@dataclass
class BoundsReport:
    epsilon: float
    cell_counts: tuple
    dt: float
    sqrt_eps_p_LinfL2: float
    grad_u_L2L2: float
    u_LinfL2: float
    u_L2L6: float  # metadata only in 2-D
    adv_L2L1: float
    adv_L1L32: float
    divu_u_L2L1: float
    divu_u_L1L32: float
    eps_dtp_L2Hm1: float
    metadata_only: tuple = field(default_factory=tuple)

    def as_dict(self):
        return asdict(self)


def apriori_bounds(trajectory, epsilon=None):
    eps = trajectory.epsilon if epsilon is None else epsilon
    g = trajectory.geometry
    h = trajectory.snapshot_dt
    sp, gu, u2, u6, a1, a32, d1, d32, hm1 = ([] for _ in range(9))
    for u, p in zip(trajectory.velocities, trajectory.pressures):
        sp.append(np.sqrt(eps) * lp_norm(p, 2) if eps is not None else 0.0)
        gu.append(grad_energy_raw(u.components, g))
        u2.append(lp_norm(u, 2))
        u6.append(lp_norm(u, 6))
        adv, du = nonlinear_parts(u)
        a1.append(lp_norm(adv, 1))
        a32.append(lp_norm(adv, 1.5))
        d1.append(lp_norm(du, 1))
        d32.append(lp_norm(du, 1.5))
        hm1.append(h_minus_one_norm(ScalarField(div_raw(u.components, g), g)))
    return BoundsReport(
        epsilon=eps,
        cell_counts=g.cell_counts,
        dt=trajectory.dt,
        sqrt_eps_p_LinfL2=float(max(sp)),
        grad_u_L2L2=float(np.sqrt(time_norm(gu, h, 1))),
        u_LinfL2=float(max(u2)),
        u_L2L6=time_norm(u6, h, 2),
        adv_L2L1=time_norm(a1, h, 2),
        adv_L1L32=time_norm(a32, h, 1),
        divu_u_L2L1=time_norm(d1, h, 2),
        divu_u_L1L32=time_norm(d32, h, 1),
        eps_dtp_L2Hm1=time_norm(hm1, h, 2),
        metadata_only=("u_L2L6",) if g.ndim == 2 else (),
    )


# ---------------------------------------------------------------------------
# Leray parts along a trajectory
# ---------------------------------------------------------------------------

def leray_series(trajectory):
    """Per-snapshot ``(Pu, Qu)``; cached on the trajectory object."""
    cached = getattr(trajectory, "_leray", None)
    if cached is None:
        pairs = [leray_decompose(u) for u in trajectory.velocities]
        cached = ([pr.solenoidal for pr in pairs], [pr.gradient_part for pr in pairs])
        trajectory._leray = cached
    return cached


def q_decay(trajectory, p_exp=4):
    """``||Qu||_{L^2_t L^p_x}``."""
    if not (4 <= p_exp < 6):
        raise PreconditionError(f"p must lie in [4, 6), got {p_exp}")
    _, q = leray_series(trajectory)
    return time_norm([lp_norm(f, p_exp) for f in q], trajectory.snapshot_dt, 2)


def time_modulus(series, snapshot_dt, h):
    """``||f(.+h) - f(.)||_{L^2([0, T-h] x Omega)}`` for a uniformly sampled series."""
    series = list(series)
    horizon = snapshot_dt * (len(series) - 1)
    if h < 0:
        raise PreconditionError("h must be nonnegative")
    if h >= horizon:
        raise OffsetTooLarge(f"offset {h} >= horizon {horizon}")
    m = h / snapshot_dt
    shift = int(round(m))
    if abs(m - shift) > 1e-9 * max(1.0, m):
        raise PreconditionError("h must be a multiple of the snapshot spacing")
    if shift == 0:
        return 0.0
    diffs = [lp_norm(b - a, 2) for a, b in zip(series[:-shift], series[shift:])]
    return time_norm(diffs, snapshot_dt, 2)


def solenoidal_time_modulus(trajectory, h):
    p, _ = leray_series(trajectory)
    return time_modulus(p, trajectory.snapshot_dt, h)


def loc_window(geom, radius=LOC_RADIUS):
    """Per-axis face masks of active faces within ``radius`` of the obstacle surface."""
    masks = []
    for k in range(geom.ndim):
        act = geom.active_faces(k)
        if geom.obstacle is None:
            masks.append(act.copy())
            continue
        dist = geom.obstacle_distance(geom.face_centers(k))
        masks.append(act & (dist <= radius))
    return masks


def windowed_l2(u, masks):
    vol = u.geometry.cell_volume
    return float(np.sqrt(sum(np.sum(c[m] ** 2) for c, m in zip(u.components, masks)) * vol))


# ---------------------------------------------------------------------------
# per-snapshot table (the diagnostics CSV)
# ---------------------------------------------------------------------------

DIAGNOSTIC_COLUMNS = (
    "t",
    "energy",
    "dissipation",
    "residual",
    "kinetic",
    "sqrt_eps_p_L2",
    "div_u_L2",
    "Qu_L4",
    "p_Wm22",
    "basis_rank",
)
FRACTIONAL_COLUMNS = ("p_Wm22",)


def snapshot_table(trajectory, basis):
    """Rows of :data:`DIAGNOSTIC_COLUMNS`, one per snapshot."""
    ledger = energy_ledger(trajectory)
    _, q = leray_series(trajectory)
    eps = trajectory.epsilon
    g = trajectory.geometry
    rows = []
    for i, (u, p) in enumerate(zip(trajectory.velocities, trajectory.pressures)):
        rows.append(
            (
                float(trajectory.times[i]),
                float(ledger.energy[i]),
                float(ledger.dissipation[i]),
                float(ledger.residual[i]),
                0.5 * lp_norm(u, 2) ** 2,
                (np.sqrt(eps) if eps is not None else 0.0) * lp_norm(p, 2),
                lp_norm(ScalarField(div_raw(u.components, g), g), 2),
                lp_norm(q[i], 4),
                negative_sobolev_lp_norm(p, 2, 2, basis),
                basis.rank,
            )
        )
    return rows
