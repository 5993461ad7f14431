"""Explicit time integration of the artificial-compressibility system.

    u_t + grad p = mu Lap u - (u.grad)u - (div u) u / 2
    eps p_t + div u = 0

Momentum and interior pressure use forward Euler.  Fluid cells touching the
obstacle get Chorin's leapfrog pressure update instead.  Velocity is zero on
every box and obstacle face at all times.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .errors import BadInitialData, Blowup, CFLViolation, PreconditionError
from .fields import (
    ScalarField,
    StaggeredField,
    convective_raw,
    div_raw,
    grad_raw,
    vector_laplacian_raw,
)
from .geometry import Disk, GeometrySpec, build_domain
from .hodge import leray_decompose

CFL_SAFETY = 0.4
BLOWUP_FACTOR = 1e3
INITIAL_KINDS = ("zero", "taylor_green_like", "random_solenoidal", "file")


@dataclass(frozen=True)
class InitialDataSpec:
    kind: str = "random_solenoidal"
    seed: int = 42
    amplitude: float = 1.0
    max_mode: int = 3
    path: str = None


@dataclass(frozen=True)
class SimConfig:
    epsilon: float = 1e-2
    mu: float = 1.0
    dt: float = None  # None: largest stable step dividing t_end
    t_end: float = 0.5
    geometry: GeometrySpec = field(
        default_factory=lambda: GeometrySpec((4.0, 4.0), (64, 64), Disk((1.0, 2.0), 0.3))
    )
    initial: InitialDataSpec = field(default_factory=InitialDataSpec)
    snapshot_every: int = 4
    solver_tol: float = 1e-8
    chorin_cells: str = "obstacle"  # 'obstacle', 'all' or 'none'
    velocity_bound: float = None  # max |u| used by the CFL check; None: from u0

    def with_(self, **kw):
        return replace(self, **kw)


def stable_dt(spacing, mu, epsilon, u_inf, safety=CFL_SAFETY):
    """``safety * min(dx^2/(2 d mu), dx sqrt(eps), dx/|u|_inf)``."""
    dx = min(spacing)
    d = len(spacing)
    bounds = [dx * dx / (2 * d * mu)]
    if epsilon is not None:
        bounds.append(dx * math.sqrt(epsilon))
    if u_inf > 0:
        bounds.append(dx / u_inf)
    return safety * min(bounds)


def resolve_time_grid(config, u_inf, epsilon=None):
    """Return ``(dt, n_steps)`` with ``n_steps`` a multiple of the snapshot cadence."""
    eps = config.epsilon if epsilon is None else epsilon
    geom = config.geometry
    spacing = [e / n for e, n in zip(geom.box_extents, geom.cell_counts)]
    bound = config.velocity_bound if config.velocity_bound is not None else u_inf
    limit = stable_dt(spacing, config.mu, eps, bound)
    cadence = max(int(config.snapshot_every), 1)
    if config.t_end == 0:
        return (config.dt or limit), 0
    if config.dt is None:
        n = math.ceil(config.t_end / limit / cadence - 1e-12) * cadence
        return config.t_end / n, n
    dt = float(config.dt)
    if dt > limit * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:.4g} exceeds the stability bound {limit:.4g}")
    n = round(config.t_end / dt)
    if abs(n * dt - config.t_end) > 1e-9 * config.t_end:
        raise PreconditionError("t_end is not an integer multiple of dt")
    if n % cadence:
        raise PreconditionError(f"{n} steps is not a multiple of snapshot_every={cadence}")
    return dt, n


@dataclass
class SimState:
    t: float
    u: StaggeredField
    p: ScalarField
    step: int = 0
    p_prev: np.ndarray = None

    def copy(self):
        return SimState(
            self.t,
            self.u.copy(),
            self.p.copy(),
            self.step,
            None if self.p_prev is None else self.p_prev.copy(),
        )


@dataclass
class Trajectory:
    geometry: object
    epsilon: float  # None for the incompressible reference
    mu: float
    dt: float
    cadence: int
    times: np.ndarray
    velocities: list
    pressures: list

    @property
    def snapshot_dt(self):
        return self.dt * self.cadence

    def __len__(self):
        return len(self.times)


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10 - 15 * t + 6 * t * t)


def _node_coords(geom):
    axes = []
    for n, h in zip(geom.cell_counts, geom.spacing):
        m = n if geom.periodic else n + 1
        axes.append(np.arange(m) * h)
    return np.meshgrid(*axes, indexing="ij")


def _cutoff(geom, points, band=0.5):
    """Smooth factor vanishing near the box walls and the obstacle."""
    pad = 2 * max(geom.spacing)
    chi = np.ones(points[0].shape)
    if not geom.periodic:
        wall = np.minimum.reduce(
            [np.minimum(x, e - x) for x, e in zip(points, geom.box_extents)]
        )
        chi *= _smoothstep((wall - pad) / band)
    if geom.obstacle is not None:
        chi *= _smoothstep((geom.obstacle.signed_distance(points) - pad) / band)
    return chi


def _curl_2d(psi, geom):
    dx, dy = geom.spacing
    if geom.periodic:
        ux = (np.roll(psi, -1, axis=1) - psi) / dy
        uy = -(np.roll(psi, -1, axis=0) - psi) / dx
    else:
        ux = np.diff(psi, axis=1) / dy
        uy = -np.diff(psi, axis=0) / dx
    comps = [ux * geom.active_faces(0), uy * geom.active_faces(1)]
    return StaggeredField(comps, geom)


def _solid_nodes(geom):
    """Nodes touching a SOLID cell or lying on a box wall."""
    solid = ~geom.fluid
    if geom.periodic:
        mask = solid.copy()
        for a in range(geom.ndim):
            mask |= np.roll(mask, 1, axis=a)
        return mask
    mask = np.zeros([n + 1 for n in geom.cell_counts], dtype=bool)
    for corner in np.ndindex(*([2] * geom.ndim)):
        idx = tuple(slice(c, c + n) for c, n in zip(corner, geom.cell_counts))
        mask[idx] |= solid
    for a in range(geom.ndim):
        idx = [slice(None)] * geom.ndim
        idx[a] = 0
        mask[tuple(idx)] = True
        idx[a] = -1
        mask[tuple(idx)] = True
    return mask


def _random_potential(points, extents, rng, max_mode):
    d = len(points)
    out = np.zeros(points[0].shape)
    for m in np.ndindex(*([2 * max_mode + 1] * d)):
        m = np.array(m) - max_mode
        r = np.linalg.norm(m)
        if r == 0 or r > max_mode:
            continue
        k = 2 * np.pi * m / np.asarray(extents)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.standard_normal() / r**2
        out += amp * np.cos(sum(k[a] * points[a] for a in range(d)) + phase)
    return out


def initial_velocity(geom, spec):
    if spec.kind == "zero":
        return StaggeredField.zeros(geom)
    if spec.kind not in INITIAL_KINDS:
        raise BadInitialData(f"unknown initial data kind {spec.kind!r}")
    if spec.kind == "file":
        raise BadInitialData("file initial data is loaded by initialize()")
    rng = np.random.default_rng(spec.seed)
    if geom.ndim == 2:
        nodes = _node_coords(geom)
        if spec.kind == "taylor_green_like":
            kx, ky = (2 * np.pi / e for e in geom.box_extents)
            psi = np.sin(kx * nodes[0]) * np.sin(ky * nodes[1]) / math.sqrt(kx * ky)
        else:
            psi = _random_potential(nodes, geom.box_extents, rng, spec.max_mode)
        if not geom.periodic or geom.obstacle is not None:
            psi = psi * _cutoff(geom, nodes)
            psi[_solid_nodes(geom)] = 0.0
        u = _curl_2d(psi, geom)
    else:
        # 3-D: project a smooth random field; no stream function needed
        comps = []
        for k in range(3):
            pts = geom.face_centers(k)
            c = _random_potential(pts, geom.box_extents, rng, spec.max_mode)
            comps.append(c * _cutoff(geom, pts) * geom.active_faces(k))
        u = leray_decompose(StaggeredField(comps, geom)).solenoidal
    peak = max(np.max(np.abs(c)) for c in u.components)
    if peak > 0:
        u = u * (spec.amplitude / peak)
    return u


def initialize(config, geometry=None):
    """Build the state at ``t = 0`` for a configuration."""
    geom = geometry if geometry is not None else build_domain(config)
    spec = config.initial
    p = ScalarField.zeros(geom)
    if spec.kind == "file":
        from .io import read_snapshot

        if not spec.path:
            raise BadInitialData("file initial data needs a path")
        snap = read_snapshot(spec.path)
        if snap.cell_counts != geom.cell_counts or snap.velocity is None:
            raise BadInitialData(f"{spec.path}: shape does not match the configured grid")
        try:
            u = StaggeredField(snap.velocity, geom)
            if snap.pressure is not None:
                p = ScalarField(snap.pressure * geom.fluid, geom)
        except ValueError as exc:
            raise BadInitialData(f"{spec.path}: {exc}") from exc
    else:
        u = initial_velocity(geom, spec)
        if spec.kind == "random_solenoidal":
            pair = leray_decompose(u, tol=config.solver_tol)
            u = pair.solenoidal
    if not all(np.all(np.isfinite(c)) for c in u.components) or not np.all(np.isfinite(p.values)):
        raise BadInitialData("initial data contains NaN or Inf")
    u = StaggeredField([c * geom.active_faces(k) for k, c in enumerate(u.components)], geom)
    return SimState(0.0, u, p, 0, p.values.copy())


# ---------------------------------------------------------------------------
# Chorin boundary pressure
# ---------------------------------------------------------------------------

def chorin_formula(p_prev, eps, dt, dx1, dx2, u2_inner, u2_wall, u1_plus, u1_minus):
    """Chorin's two-level update of the pressure on a wall ``x2 = const``.

    ``eps p^{n+1} - eps p^{n-1} = -2 dt/dx2 (u2(i,2) - u2(i,1)) - dt/dx1 (u1(i+1,1) - u1(i-1,1))``
    on a collocated grid where ``u2(i,1)`` sits on the wall.
    """
    rhs = -2.0 * dt / dx2 * (u2_inner - u2_wall) - dt / dx1 * (u1_plus - u1_minus)
    return p_prev + rhs / eps


def chorin_cells(geom, which):
    if which == "none":
        return np.zeros(geom.cell_counts, dtype=bool)
    return geom.boundary_adjacent(which)


def chorin_boundary_pressure(state, config, geometry=None, div=None):
    """Leapfrog pressure at boundary-adjacent cells, other cells unchanged.

    On the MAC grid the two faces bracketing a cell play the role of Chorin's
    one-sided normal pair and of his centered tangential pair (which are
    ``2 dx`` apart on his collocated grid, ``dx`` apart here), so both terms
    collapse to ``-2 dt div u`` with the cell's own MAC divergence.
    """
    geom = geometry or state.u.geometry
    if div is None:
        div = div_raw(state.u.components, geom)
    mask = chorin_cells(geom, config.chorin_cells)
    prev = state.p.values if state.p_prev is None else state.p_prev
    out = state.p.values.copy()
    out[mask] = prev[mask] - (2.0 * config_dt(config, state) / config.epsilon) * div[mask]
    return ScalarField(out, geom)


def config_dt(config, state=None):
    if config.dt is None:
        raise PreconditionError("config.dt is unresolved; call resolve_time_grid first")
    return config.dt


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def momentum_rhs(comps, p, geom, mu):
    lap = vector_laplacian_raw(comps, geom)
    conv = convective_raw(comps, geom)
    gp = grad_raw(p, geom)
    return [mu * l - c - g for l, c, g in zip(lap, conv, gp)]


def kinetic_energy(comps, geom):
    return 0.5 * sum(float(np.sum(c * c)) for c in comps) * geom.cell_volume


def step(state, config, geometry=None, chorin_mask=None, energy_cap=None):
    """Advance one explicit step; ``config.dt`` must be resolved."""
    geom = geometry or state.u.geometry
    dt = config_dt(config)
    eps = config.epsilon
    comps = state.u.components
    u_inf = max(float(np.max(np.abs(c))) for c in comps)
    if u_inf > 0 and dt > CFL_SAFETY * min(geom.spacing) / u_inf * (1 + 1e-12):
        if not math.isfinite(u_inf):
            raise Blowup("non-finite velocity", state.step)
        raise CFLViolation(f"advective CFL violated at step {state.step} (|u|_inf={u_inf:.3g})")
    div = div_raw(comps, geom)
    rhs = momentum_rhs(comps, state.p.values, geom, config.mu)
    new_u = [c + dt * r for c, r in zip(comps, rhs)]
    p_new = state.p.values - (dt / eps) * div
    if chorin_mask is None:
        chorin_mask = chorin_cells(geom, config.chorin_cells)
    if chorin_mask.any():
        prev = state.p.values if state.p_prev is None else state.p_prev
        p_new[chorin_mask] = prev[chorin_mask] - (2.0 * dt / eps) * div[chorin_mask]
    p_new *= geom.fluid
    for k, c in enumerate(new_u):
        c *= geom.active_faces(k)
    if not (all(np.all(np.isfinite(c)) for c in new_u) and np.all(np.isfinite(p_new))):
        raise Blowup("non-finite fields", state.step + 1)
    if energy_cap is not None and kinetic_energy(new_u, geom) > energy_cap:
        raise Blowup("kinetic energy exceeded the blow-up cap", state.step + 1)
    return SimState(
        state.t + dt,
        StaggeredField(new_u, geom),
        ScalarField(p_new, geom),
        state.step + 1,
        state.p.values,
    )


def _energy(state, geom, eps):
    return kinetic_energy(state.u.components, geom) + 0.5 * eps * float(
        np.sum(state.p.values**2) * geom.cell_volume
    )


def run(config, geometry=None, state=None, with_ledger=True):
    """Integrate to ``t_end``; returns ``(trajectory, ledger)``.

    Snapshots are taken every ``snapshot_every`` steps including both ends.
    The ledger's dissipation is integrated with the trapezoid rule over every
    step, not only over snapshots, so its residual measures the time
    discretization alone.  On blow-up the raised :class:`Blowup` carries the
    partial trajectory and ledger as ``trajectory`` and ``ledger``.
    """
    from .diagnostics import EnergyLedger
    from .fields import grad_energy_raw

    geom = geometry if geometry is not None else build_domain(config)
    if state is None:
        state = initialize(config, geom)
    u_inf = max(float(np.max(np.abs(c))) for c in state.u.components)
    dt, n_steps = resolve_time_grid(config, u_inf)
    cfg = config.with_(dt=dt)
    cadence = max(int(cfg.snapshot_every), 1)
    e0 = _energy(state, geom, cfg.epsilon)
    cap = BLOWUP_FACTOR * e0 if e0 > 0 else None
    mask = chorin_cells(geom, cfg.chorin_cells)
    times = [state.t]
    vel = [state.u]
    pres = [state.p]
    energy = [e0]
    diss = [0.0]
    acc = 0.0
    g_prev = cfg.mu * grad_energy_raw(state.u.components, geom) if with_ledger else 0.0

    def trajectory():
        return Trajectory(geom, cfg.epsilon, cfg.mu, dt, cadence, np.array(times), vel, pres)

    def ledger():
        if not with_ledger:
            return None
        e, d = np.array(energy), np.array(diss)
        return EnergyLedger(np.array(times), e, d, e + d - e[0])

    for n in range(1, n_steps + 1):
        try:
            try:
                state = step(state, cfg, geom, mask, cap)
            except CFLViolation as exc:
                # dt was valid for u0; the solution outgrew the bound it was chosen for
                raise Blowup(str(exc), n) from exc
        except Blowup as exc:
            exc.trajectory = trajectory()
            exc.ledger = ledger()
            raise
        if with_ledger:
            g_new = cfg.mu * grad_energy_raw(state.u.components, geom)
            acc += 0.5 * dt * (g_prev + g_new)
            g_prev = g_new
        if n % cadence == 0:
            times.append(n * dt)
            vel.append(state.u)
            pres.append(state.p)
            if with_ledger:
                energy.append(_energy(state, geom, cfg.epsilon))
                diss.append(acc)
    return trajectory(), ledger()
