"""Incompressible reference solver: forward-Euler predictor followed by a Leray projection.

It shares every spatial operator with :mod:`acns.ac_solver`, so comparisons
against artificial-compressibility runs measure the compressibility error
rather than a discretization mismatch.
"""

import numpy as np

from .ac_solver import (
    BLOWUP_FACTOR,
    SimState,
    Trajectory,
    initialize,
    kinetic_energy,
    resolve_time_grid,
)
from .elliptic import solve_poisson_neumann
from .errors import Blowup, PreconditionError
from .fields import (
    ScalarField,
    StaggeredField,
    convective_raw,
    div_raw,
    lp_norm,
    vector_laplacian_raw,
)
from .geometry import build_domain
from .hodge import TOL_PROJ, leray_decompose


def ns_step(state, config, geometry=None, energy_cap=None, check_entry=False):
    """One projection step; ``state.p`` becomes the projection multiplier."""
    geom = geometry or state.u.geometry
    dt = config.dt
    comps = state.u.components
    if check_entry:
        scale = max(lp_norm(state.u, 2), 1e-300)
        div = lp_norm(ScalarField(div_raw(comps, geom), geom), 2)
        if div > TOL_PROJ * scale / min(geom.spacing):
            raise PreconditionError("entry velocity is not discretely solenoidal")
    lap = vector_laplacian_raw(comps, geom)
    conv = convective_raw(comps, geom)
    star = StaggeredField(
        [c + dt * (config.mu * l - n) for c, l, n in zip(comps, lap, conv)], geom
    )
    pair = leray_decompose(star, tol=config.solver_tol)
    u_new = pair.solenoidal
    if not all(np.all(np.isfinite(c)) for c in u_new.components):
        raise Blowup("non-finite velocity", state.step + 1)
    if energy_cap is not None and kinetic_energy(u_new.components, geom) > energy_cap:
        raise Blowup("kinetic energy exceeded the blow-up cap", state.step + 1)
    p = pair.potential * (1.0 / dt)
    return SimState(state.t + dt, u_new, p, state.step + 1, state.p.values)


def run_reference(config, geometry=None, state=None, dt=None):
    """Integrate the incompressible system on the AC time grid (or ``dt``)."""
    geom = geometry if geometry is not None else build_domain(config)
    if state is None:
        state = initialize(config, geom)
    if dt is None:
        u_inf = max(float(np.max(np.abs(c))) for c in state.u.components)
        dt, n_steps = resolve_time_grid(config, u_inf)
    else:
        n_steps = int(round(config.t_end / dt))
    cfg = config.with_(dt=dt)
    cadence = max(int(cfg.snapshot_every), 1)
    e0 = kinetic_energy(state.u.components, geom)
    cap = BLOWUP_FACTOR * e0 if e0 > 0 else None
    times, vel, pres = [state.t], [state.u], [state.p]
    for n in range(1, n_steps + 1):
        state = ns_step(state, cfg, geom, cap)
        if n % cadence == 0:
            times.append(n * dt)
            vel.append(state.u)
            pres.append(state.p)
    return Trajectory(geom, None, cfg.mu, dt, cadence, np.array(times), vel, pres)


def limit_pressure(u, tol=1e-8):
    """Zero-mean ``p`` with ``Delta p = div((u.grad)u)`` and Neumann conditions."""
    geom = u.geometry
    conv = StaggeredField(convective_raw(u.components, geom), geom)
    rhs = ScalarField(div_raw(conv.components, geom), geom)
    return solve_poisson_neumann(rhs, tol=tol, remove_mean=True)
