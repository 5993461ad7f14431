"""Acoustic view of a run: fast time, pressure wave residual and the two-wave splitting.

Fractional powers of the Dirichlet Laplacian act through a truncated
eigenbasis, so the two wave problems decouple into independent oscillators
``a_j'' + lambda_j a_j = F_j`` integrated with leapfrog.  Component arrays are
synthesized from Dirichlet eigenvectors and therefore vanish on the obstacle
and box boundary.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .diagnostics import h_minus_one_norm
from .errors import CFLViolation, InsufficientSnapshots, NonuniformCadence
from .fields import (
    ScalarField,
    StaggeredField,
    convective_raw,
    div_raw,
    lp_norm,
    negative_sobolev_lp_norm,
    neumann_laplacian_raw,
    time_norm,
    vector_laplacian_raw,
)

WAVE_CFL = 0.5


@dataclass
class AcousticFields:
    epsilon: float
    tau: np.ndarray
    velocities: list  # u~ snapshots
    pressures: list  # p~ snapshots
    mu: float = 1.0
    # completed by split_pressure (spectral coefficient arrays, shape (n_tau, K))
    q1: np.ndarray = None
    q2: np.ndarray = None
    f1: np.ndarray = None
    f2: np.ndarray = None
    p_hat: np.ndarray = None
    basis: object = None
    defect: np.ndarray = None
    extras: dict = field(default_factory=dict)

    @property
    def dtau(self):
        return float(self.tau[1] - self.tau[0]) if self.tau.size > 1 else 0.0

    @property
    def geometry(self):
        return self.pressures[0].geometry

    def component_field(self, which, n):
        """``q1``, ``q2``, ``p1`` or ``p2`` at snapshot ``n`` as a cell field."""
        lam = self.basis.eigenvalues
        if which == "q1":
            c = self.q1[n]
        elif which == "q2":
            c = self.q2[n]
        elif which == "p1":
            c = -lam * self.q1[n]
        elif which == "p2":
            c = np.sqrt(lam) * self.q2[n]
        else:
            raise KeyError(which)
        return ScalarField(self.basis.synthesize(c), self.geometry)


def _check_uniform(times):
    if len(times) > 2:
        d = np.diff(times)
        if np.max(np.abs(d - d[0])) > 1e-9 * max(abs(d[0]), 1e-300):
            raise NonuniformCadence("snapshot times are not uniformly spaced")


def rescale(trajectory, epsilon=None):
    """Relabel time as ``tau = t / sqrt(eps)``; fields are unchanged pointwise."""
    eps = trajectory.epsilon if epsilon is None else epsilon
    times = np.asarray(trajectory.times, dtype=float)
    _check_uniform(times)
    return AcousticFields(
        epsilon=eps,
        tau=times / math.sqrt(eps),
        velocities=list(trajectory.velocities),
        pressures=list(trajectory.pressures),
        mu=getattr(trajectory, "mu", 1.0),
    )


def unrescale(fields):
    """Inverse of :func:`rescale`: ``(times, velocities, pressures)``."""
    return fields.tau * math.sqrt(fields.epsilon), fields.velocities, fields.pressures


def _div(u):
    g = u.geometry
    return div_raw(u.components, g)


def _div_conv(u):
    g = u.geometry
    return div_raw(convective_raw(u.components, g), g)


def wave_residual(fields, basis, laplacian="neumann"):
    """``W^{-2,2}`` norm of the discrete residual of the rescaled pressure wave equation.

    Residual at interior ``tau_n``:
    ``d2p/dtau2 - Lap p + div(mu Lap u) - div((u.grad)u + (div u)u/2)``.
    ``laplacian='neumann'`` applies ``div grad`` to ``p`` and ``div`` of the
    vector Laplacian to ``u``, i.e. exactly the operators of the stepper.
    ``laplacian='dirichlet'`` works in the Dirichlet modes (``Lap -> -lambda``
    for ``p`` and ``Lap div u``), matching the splitting's wave operator.
    """
    n = len(fields.pressures)
    if n < 3:
        raise InsufficientSnapshots("need at least 3 snapshots")
    h = fields.dtau
    mu = fields.mu
    lam = basis.eigenvalues
    out = np.zeros(n - 2)
    p = [f.values for f in fields.pressures]
    for i in range(1, n - 1):
        u = fields.velocities[i]
        g = u.geometry
        d2 = (p[i + 1] - 2 * p[i] + p[i - 1]) / h**2
        if laplacian == "neumann":
            visc = div_raw(vector_laplacian_raw(u.components, g), g)
            r = d2 - neumann_laplacian_raw(p[i], g) + mu * visc - _div_conv(u)
            c = basis.coefficients(r)
        elif laplacian == "dirichlet":
            c = (
                basis.coefficients(d2)
                + lam * basis.coefficients(p[i])
                - mu * lam * basis.coefficients(_div(u))
                - basis.coefficients(_div_conv(u))
            )
        else:
            raise ValueError(f"unknown laplacian {laplacian!r}")
        out[i - 1] = math.sqrt(float(np.sum(c * c / lam**2)))
    return out


def _leapfrog(lam, a0, v0, forcing, dtau, substeps):
    """Integrate ``a'' + lam a = F`` for every mode; ``forcing`` is sampled per snapshot."""
    n = forcing.shape[0]
    out = np.zeros((n, lam.size))
    out[0] = a0
    if n == 1:
        return out
    h = dtau / substeps
    prev = a0
    cur = a0 + h * v0 + 0.5 * h * h * (forcing[0] - lam * a0)
    for i in range(n - 1):
        f0, f1 = forcing[i], forcing[i + 1]
        for s in range(1, substeps + 1):
            if s == substeps:
                out[i + 1] = cur
                if i == n - 2:
                    break
            frac = s / substeps
            f = (1 - frac) * f0 + frac * f1
            nxt = 2 * cur - prev + h * h * (f - lam * cur)
            prev, cur = cur, nxt
    return out


def split_pressure(fields, basis, substeps=None, dpdtau0=None, boundary_term=False):
    """Split ``p~`` into a viscous and a convective Dirichlet wave (completed in place).

    ``q1 = Delta^{-1} p1`` solves ``q1'' - Delta q1 = -mu div u~`` from rest;
    ``q2 = (-Delta)^{-1/2} p2`` solves ``q2'' - Delta q2 = (-Delta)^{-1/2} div(C(u~))``
    and carries the initial pressure and ``dp~/dtau(0) = -div u0 / sqrt(eps)``.

    The stepper's pressure obeys ``div grad``, not the Dirichlet Laplacian, so
    the split misses a boundary term and ``defect`` does not shrink with the
    time step.  ``boundary_term=True`` moves the Galerkin projection of that
    term (and of the viscous commutator) into ``F1``; the defect is then pure
    time discretization.
    """
    n = len(fields.pressures)
    if n < 2:
        raise InsufficientSnapshots("need at least 2 snapshots")
    lam = basis.eigenvalues
    geom = fields.geometry
    dtau = fields.dtau
    dx = min(geom.spacing)
    needed = max(1, math.ceil(dtau / (WAVE_CFL * dx) - 1e-12))
    needed = max(needed, math.ceil(dtau * math.sqrt(lam[-1]) / 1.0 - 1e-12))
    if substeps is None:
        substeps = needed
    elif dtau / substeps > WAVE_CFL * dx * (1 + 1e-12):
        raise CFLViolation(f"wave step {dtau / substeps:.4g} > {WAVE_CFL} dx")

    if boundary_term:
        f1 = []
        for u, p in zip(fields.velocities, fields.pressures):
            g = u.geometry
            r = neumann_laplacian_raw(p.values, g) - fields.mu * div_raw(
                vector_laplacian_raw(u.components, g), g
            )
            f1.append(-(basis.coefficients(r) + lam * basis.coefficients(p.values)) / lam)
        f1 = np.array(f1)
    else:
        f1 = np.array([-fields.mu * basis.coefficients(_div(u)) for u in fields.velocities])
    f2 = np.array(
        [basis.coefficients(_div_conv(u)) / np.sqrt(lam) for u in fields.velocities]
    )
    p_hat = np.array([basis.coefficients(p.values) for p in fields.pressures])
    if dpdtau0 is None:
        dpdtau0 = -_div(fields.velocities[0]) / math.sqrt(fields.epsilon)
    dp0 = basis.coefficients(dpdtau0)

    zero = np.zeros_like(lam)
    fields.q1 = _leapfrog(lam, zero, zero, f1, dtau, substeps)
    fields.q2 = _leapfrog(lam, p_hat[0] / np.sqrt(lam), dp0 / np.sqrt(lam), f2, dtau, substeps)
    fields.f1, fields.f2, fields.p_hat, fields.basis = f1, f2, p_hat, basis
    recon = -lam * fields.q1 + np.sqrt(lam) * fields.q2
    fields.defect = np.sqrt(np.sum((p_hat - recon) ** 2 / lam**2, axis=1))
    fields.extras["substeps"] = substeps
    return fields


def boundary_values(values, geom):
    """Values of a cell field on SOLID cells and its ghost-reflected trace on walls.

    Dirichlet components are zero on SOLID cells and odd across every fluid
    boundary face, so the returned array is identically zero for them.
    """
    out = [values[~geom.fluid].ravel()]
    for a in range(geom.ndim):
        for off in (1, -1):
            if geom.periodic:
                other = np.roll(geom.fluid, -off, axis=a)
            else:
                other = np.zeros_like(geom.fluid)
                lo = [slice(None)] * geom.ndim
                hi = [slice(None)] * geom.ndim
                lo[a] = slice(None, -1)
                hi[a] = slice(1, None)
                if off == 1:
                    other[tuple(lo)] = geom.fluid[tuple(hi)]
                else:
                    other[tuple(hi)] = geom.fluid[tuple(lo)]
            edge = geom.fluid & ~other
            # face value = mean of the cell and its reflected ghost (-value)
            out.append(0.5 * (values[edge] - values[edge]))
    return np.concatenate(out)


@dataclass
class StrichartzRow:
    epsilon: float
    lhs: float
    rhs: float
    ratio: float  # nan when both sides vanish
    terms: dict


def strichartz_functional(trajectory, epsilon, basis):
    """Both sides of the acoustic Strichartz-type estimate for one run.

    LHS = eps^{3/8} ||p||_{L4 W^{-2,4}} + eps^{7/8} ||dp/dt||_{L4 W^{-3,4}}
    RHS = sqrt(eps) ||p0||_2 + ||div u0||_{H^-1_D} + ||C(u)||_{L1 L3/2} + sqrt(T) ||div u||_{L2 L2}
    with ``dp/dt = -div u / eps`` taken from the continuity equation.
    """
    g = trajectory.geometry
    h = trajectory.snapshot_dt
    horizon = float(trajectory.times[-1] - trajectory.times[0])
    pw, dpw, cw, dw = [], [], [], []
    for u, p in zip(trajectory.velocities, trajectory.pressures):
        div = ScalarField(div_raw(u.components, g), g)
        pw.append(negative_sobolev_lp_norm(p, 2, 4))
        dpw.append(negative_sobolev_lp_norm(div * (-1.0 / epsilon), 3, 4, basis, hybrid=True))
        cw.append(lp_norm(StaggeredField(convective_raw(u.components, g), g), 1.5))
        dw.append(lp_norm(div, 2))
    terms = {
        "p_L4Wm24": time_norm(pw, h, 4),
        "dtp_L4Wm34": time_norm(dpw, h, 4),
        "p0_L2": lp_norm(trajectory.pressures[0], 2),
        "divu0_Hm1": h_minus_one_norm(
            ScalarField(div_raw(trajectory.velocities[0].components, g), g)
        ),
        "conv_L1L32": time_norm(cw, h, 1),
        "divu_L2L2": time_norm(dw, h, 2),
    }
    lhs = epsilon ** 0.375 * terms["p_L4Wm24"] + epsilon ** 0.875 * terms["dtp_L4Wm34"]
    rhs = (
        math.sqrt(epsilon) * terms["p0_L2"]
        + terms["divu0_Hm1"]
        + terms["conv_L1L32"]
        + math.sqrt(horizon) * terms["divu_L2L2"]
    )
    ratio = lhs / rhs if rhs > 0 else float("nan")
    return StrichartzRow(epsilon, lhs, rhs, ratio, terms)
