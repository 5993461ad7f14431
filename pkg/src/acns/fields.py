"""MAC-grid field containers, discrete operators, mollification and norms.

Layout: pressure-like scalars live at cell centers (array shape ``cell_counts``);
velocity component ``k`` lives on the faces normal to axis ``k``.  With walls,
component ``k`` has ``n_k + 1`` faces along axis ``k`` (the first and last are
box faces and always zero); with periodic boxes it has ``n_k`` faces and face
``i`` is the left face of cell ``i``.

Gradient and divergence are exact negative adjoints of each other in the
cell-volume weighted inner products, which is what makes the Leray projector
orthogonal and the energy identity exact in space.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import (
    AlphaOutOfRange,
    BadExponent,
    BasisMismatch,
    EmptySeries,
    GeometryMismatch,
    InsufficientRank,
)


class ScalarField:
    """Cell-centered scalar; zero on SOLID cells."""

    __slots__ = ("values", "geometry")

    def __init__(self, values, geometry):
        values = np.asarray(values, dtype=float)
        if values.shape != geometry.cell_counts:
            raise GeometryMismatch(f"shape {values.shape} != cells {geometry.cell_counts}")
        self.values = values
        self.geometry = geometry

    @classmethod
    def zeros(cls, geometry):
        return cls(np.zeros(geometry.cell_counts), geometry)

    def copy(self):
        return ScalarField(self.values.copy(), self.geometry)

    def _other(self, other):
        if isinstance(other, ScalarField):
            check_same_geometry(self, other)
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.values + self._other(other), self.geometry)

    def __sub__(self, other):
        return ScalarField(self.values - self._other(other), self.geometry)

    def __mul__(self, c):
        return ScalarField(self.values * c, self.geometry)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(-self.values, self.geometry)

    def __repr__(self):
        return f"ScalarField(shape={self.values.shape})"


class StaggeredField:
    """Face-centered vector field; zero on every inactive face (no-slip)."""

    __slots__ = ("components", "geometry")

    def __init__(self, components, geometry):
        comps = tuple(np.asarray(c, dtype=float) for c in components)
        if len(comps) != geometry.ndim:
            raise GeometryMismatch(f"expected {geometry.ndim} components, got {len(comps)}")
        for k, c in enumerate(comps):
            if c.shape != geometry.face_shape(k):
                raise GeometryMismatch(
                    f"component {k} has shape {c.shape}, expected {geometry.face_shape(k)}"
                )
        self.components = comps
        self.geometry = geometry

    @classmethod
    def zeros(cls, geometry):
        return cls([np.zeros(geometry.face_shape(k)) for k in range(geometry.ndim)], geometry)

    def copy(self):
        return StaggeredField([c.copy() for c in self.components], self.geometry)

    def _other(self, other):
        check_same_geometry(self, other)
        return other.components

    def __add__(self, other):
        return StaggeredField(
            [a + b for a, b in zip(self.components, self._other(other))], self.geometry
        )

    def __sub__(self, other):
        return StaggeredField(
            [a - b for a, b in zip(self.components, self._other(other))], self.geometry
        )

    def __mul__(self, c):
        return StaggeredField([a * c for a in self.components], self.geometry)

    __rmul__ = __mul__

    def __neg__(self):
        return StaggeredField([-a for a in self.components], self.geometry)

    def flat(self):
        return np.concatenate([c.ravel() for c in self.components])

    def __repr__(self):
        return f"StaggeredField(shapes={[c.shape for c in self.components]})"


def check_same_geometry(*fields):
    g0 = fields[0].geometry
    for f in fields[1:]:
        if f.geometry is not g0 and not g0.same_grid(f.geometry):
            raise GeometryMismatch("fields live on different geometries")
    return g0


# ---------------------------------------------------------------------------
# raw array kernels (no wrapping, used by the time steppers)
# ---------------------------------------------------------------------------

def _slice(ndim, axis, s):
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


def neighbor(a, axis, offset, periodic):
    """``b[m] = a[m + offset]`` for offset +-1, zero outside the array."""
    if periodic:
        return np.roll(a, -offset, axis=axis)
    b = np.zeros_like(a)
    nd = a.ndim
    if offset == 1:
        b[_slice(nd, axis, slice(None, -1))] = a[_slice(nd, axis, slice(1, None))]
    else:
        b[_slice(nd, axis, slice(1, None))] = a[_slice(nd, axis, slice(None, -1))]
    return b


def div_raw(comps, geom):
    out = np.zeros(geom.cell_counts)
    for k, (u, h) in enumerate(zip(comps, geom.spacing)):
        if geom.periodic:
            out += (np.roll(u, -1, axis=k) - u) / h
        else:
            out += np.diff(u, axis=k) / h
    out *= geom.fluid
    return out


def grad_raw(p, geom):
    comps = []
    for k, h in enumerate(geom.spacing):
        if geom.periodic:
            g = (p - np.roll(p, 1, axis=k)) / h
        else:
            g = np.zeros(geom.face_shape(k))
            g[_slice(p.ndim, k, slice(1, -1))] = np.diff(p, axis=k) / h
        g *= geom.active_faces(k)
        comps.append(g)
    return comps


def vector_laplacian_raw(comps, geom):
    """Componentwise 5/7-point Laplacian; inactive and out-of-box faces act as zero."""
    out = []
    for k, u in enumerate(comps):
        lap = np.zeros_like(u)
        for j, h in enumerate(geom.spacing):
            lap += (neighbor(u, j, 1, geom.periodic) + neighbor(u, j, -1, geom.periodic) - 2 * u) / h**2
        lap *= geom.active_faces(k)
        out.append(lap)
    return out


def _edge_differences(a, axis, periodic):
    if periodic:
        return np.roll(a, -1, axis=axis) - a
    pad = [(0, 0)] * a.ndim
    pad[axis] = (1, 1)
    return np.diff(np.pad(a, pad), axis=axis)


def grad_energy_raw(comps, geom):
    """``||grad u||^2`` summed over components; equals ``-<u, vector_laplacian(u)>``."""
    total = 0.0
    for u in comps:
        for j, h in enumerate(geom.spacing):
            d = _edge_differences(u, j, geom.periodic)
            total += np.sum(d * d) / h**2
    return total * geom.cell_volume


def _avg_pad(a, axis, periodic):
    if periodic:
        return 0.5 * (a + np.roll(a, 1, axis=axis))
    pad = [(0, 0)] * a.ndim
    pad[axis] = (1, 1)
    p = np.pad(a, pad)
    nd = a.ndim
    return 0.5 * (p[_slice(nd, axis, slice(1, None))] + p[_slice(nd, axis, slice(None, -1))])


def convective_raw(comps, geom):
    """Skew-symmetric discretization of ``(u.grad)u + (div u) u / 2``.

    For each component ``phi = u_k`` this is
    ``sum_j (U_j+ phi_{m+e_j} - U_j- phi_{m-e_j}) / (2 h_j)`` with ``U_j`` the
    transport velocity interpolated to the dual edges, i.e. the average of the
    advective and conservative forms.  ``<phi, C phi> = 0`` holds exactly.
    """
    periodic = geom.periodic
    out = []
    for k, phi in enumerate(comps):
        acc = np.zeros_like(phi)
        for j, h in enumerate(geom.spacing):
            uc = _avg_pad(comps[j], k, periodic)
            if periodic:
                u_minus, u_plus = uc, np.roll(uc, -1, axis=j)
            else:
                u_minus = uc[_slice(uc.ndim, j, slice(None, -1))]
                u_plus = uc[_slice(uc.ndim, j, slice(1, None))]
            acc += (u_plus * neighbor(phi, j, 1, periodic) - u_minus * neighbor(phi, j, -1, periodic)) / (2 * h)
        acc *= geom.active_faces(k)
        out.append(acc)
    return out


def neumann_laplacian_raw(p, geom):
    return div_raw(grad_raw(p, geom), geom)


# ---------------------------------------------------------------------------
# public operators
# ---------------------------------------------------------------------------

def divergence(u):
    """MAC divergence at cell centers, zero on SOLID cells."""
    return ScalarField(div_raw(u.components, u.geometry), u.geometry)


def gradient(p):
    """Face gradient of a cell scalar, zero on inactive faces."""
    return StaggeredField(grad_raw(p.values, p.geometry), p.geometry)


def laplacian(p):
    """``div(grad p)``: the Laplacian with homogeneous Neumann conditions."""
    return ScalarField(neumann_laplacian_raw(p.values, p.geometry), p.geometry)


def vector_laplacian(u):
    return StaggeredField(vector_laplacian_raw(u.components, u.geometry), u.geometry)


def convective(u):
    """``(u.grad)u + (div u) u / 2`` on faces."""
    return StaggeredField(convective_raw(u.components, u.geometry), u.geometry)


def gradient_norm_sq(u):
    return grad_energy_raw(u.components, u.geometry)


def inner(a, b):
    """Cell-volume weighted L2 inner product of two scalar or two staggered fields."""
    g = check_same_geometry(a, b)
    if isinstance(a, ScalarField):
        return float(np.sum(a.values * b.values * g.fluid) * g.cell_volume)
    return float(sum(np.sum(x * y) for x, y in zip(a.components, b.components)) * g.cell_volume)


def _norm_arrays(f):
    if isinstance(f, ScalarField):
        return [f.values[f.geometry.fluid]]
    if isinstance(f, StaggeredField):
        return [c[f.geometry.active_faces(k)] for k, c in enumerate(f.components)]
    raise TypeError(f"cannot take a norm of {type(f).__name__}")


def lp_norm(f, p):
    """Discrete ``L^p`` norm over fluid cells (scalars) or active faces (vectors).

    Vector fields combine their components in ``l^p``:
    ``(sum_k sum_faces |u_k|^p dV)^(1/p)``; for ``p = 2`` this is the energy norm.
    """
    if p is None or not (p >= 1):
        raise BadExponent(f"exponent must be >= 1, got {p}")
    arrays = _norm_arrays(f)
    if np.isinf(p):
        return float(max((np.max(np.abs(a)) if a.size else 0.0) for a in arrays))
    vol = f.geometry.cell_volume
    if p == 2:
        return float(np.sqrt(sum(np.dot(a, a) for a in arrays) * vol))
    if p == 1:
        return float(sum(np.sum(np.abs(a)) for a in arrays) * vol)
    return float((sum(np.sum(np.abs(a) ** p) for a in arrays) * vol) ** (1.0 / p))


def time_norm(values, dt, q):
    """``L^q`` norm in time of sampled nonnegative values (trapezoid rule)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise EmptySeries("empty time series")
    if q is None or not (q >= 1):
        raise BadExponent(f"time exponent must be >= 1, got {q}")
    if np.isinf(q):
        return float(np.max(np.abs(values)))
    if values.size == 1:
        return 0.0
    w = np.full(values.size, float(dt))
    w[0] = w[-1] = 0.5 * dt
    return float(np.sum(w * np.abs(values) ** q) ** (1.0 / q))


def space_time_norm(series, q, spatial, dt):
    """Composite ``L^q_t X`` norm of a uniformly sampled series.

    ``spatial`` is either an exponent (``lp_norm``) or a callable mapping a
    snapshot to its spatial norm.
    """
    series = list(series)
    if not series:
        raise EmptySeries("empty snapshot series")
    if callable(spatial):
        values = [spatial(f) for f in series]
    else:
        values = [lp_norm(f, spatial) for f in series]
    return time_norm(values, dt, q)


# ---------------------------------------------------------------------------
# spectral (Dirichlet) Sobolev norms
# ---------------------------------------------------------------------------

def _check_basis(f, basis):
    if f.geometry is not basis.geometry and not basis.geometry.same_grid(f.geometry):
        raise BasisMismatch("basis was built on a different geometry")


def sobolev_norm(f, gamma, basis, capture_threshold=0.5, return_capture=False):
    """``||f||_{H^gamma_D}^2 = sum_j |<f, v_j>|^2 lambda_j^gamma`` over retained modes.

    The capture indicator is the fraction of ``||f||_{L2}^2`` carried by the
    retained modes.  Positive orders need the tail to be negligible, so they
    raise :class:`InsufficientRank` when capture falls below the threshold.
    """
    _check_basis(f, basis)
    if abs(gamma) > 3:
        raise BadExponent(f"|gamma| must be <= 3, got {gamma}")
    c = basis.coefficients(f.values)
    energy = lp_norm(f, 2) ** 2
    captured = float(np.dot(c, c))
    capture = 1.0 if energy == 0 else min(captured / energy, 1.0)
    if gamma > 0 and capture < capture_threshold:
        raise InsufficientRank(
            f"basis captures {capture:.3f} of ||f||^2, below {capture_threshold}"
        )
    value = float(np.sqrt(np.sum(c * c * basis.eigenvalues**gamma)))
    if return_capture:
        return value, capture
    return value


def negative_sobolev_lp_norm(f, k, r, basis=None, hybrid=False):
    """``||f||_{W^{-k,r}}`` realized as ``||(-Delta_D)^{-k/2} f||_{L^r}``.

    With a basis the fractional inverse is spectral (rank-``K`` truncation).
    Without one, even ``k`` is evaluated exactly with ``k/2`` Dirichlet solves.
    ``hybrid=True`` takes the integer part of ``k/2`` with exact solves and
    only the remaining half power spectrally, which loses far less to the
    truncation.
    """
    if k not in (0, 1, 2, 3):
        raise BadExponent(f"k must be in 0..3, got {k}")
    if r is None or not (r >= 1):
        raise BadExponent(f"r must be >= 1, got {r}")
    if k == 0:
        return lp_norm(f, r)
    if basis is not None and hybrid and k >= 2:
        from .elliptic import solve_poisson_dirichlet

        g = f
        for _ in range(k // 2):
            g = -solve_poisson_dirichlet(g)
        if k % 2 == 0:
            return lp_norm(g, r)
        _check_basis(f, basis)
        c = basis.coefficients(g.values) * basis.eigenvalues ** -0.5
        return lp_norm(ScalarField(basis.synthesize(c), f.geometry), r)
    if basis is not None:
        _check_basis(f, basis)
        c = basis.coefficients(f.values) * basis.eigenvalues ** (-k / 2.0)
        return lp_norm(ScalarField(basis.synthesize(c), f.geometry), r)
    if k % 2:
        raise BasisMismatch("odd orders need a spectral basis")
    from .elliptic import solve_poisson_dirichlet

    g = f
    for _ in range(k // 2):
        g = -solve_poisson_dirichlet(g)
    return lp_norm(g, r)


# ---------------------------------------------------------------------------
# mollifier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Mollifier:
    """Friedrichs mollifier ``j_alpha`` sampled on a grid spacing.

    ``kernel`` is the standard ``exp(-1/(1-r^2))`` bump of radius ``alpha``,
    normalized so that ``kernel.sum() * dV == 1``.
    """

    alpha: float
    spacing: tuple
    kernel: np.ndarray

    @classmethod
    def build(cls, alpha, spacing):
        if not (0.0 < alpha < 1.0):
            raise AlphaOutOfRange(f"alpha must lie in (0, 1), got {alpha}")
        spacing = tuple(float(h) for h in spacing)
        half = [int(np.floor(alpha / h)) for h in spacing]
        axes = [np.arange(-m, m + 1) * h for m, h in zip(half, spacing)]
        grids = np.meshgrid(*axes, indexing="ij")
        r2 = sum(g * g for g in grids) / alpha**2
        kern = np.zeros(r2.shape)
        inside = r2 < 1.0
        kern[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
        dv = float(np.prod(spacing))
        kern /= kern.sum() * dv
        return cls(float(alpha), spacing, kern)

    @property
    def support_radius(self):
        axes = [np.arange(n) - n // 2 for n in self.kernel.shape]
        grids = np.meshgrid(*[a * h for a, h in zip(axes, self.spacing)], indexing="ij")
        r = np.sqrt(sum(g * g for g in grids))
        return float(r[self.kernel > 0].max())


def _convolve(a, kernel, periodic):
    if periodic:
        from scipy import ndimage

        return ndimage.convolve(a, kernel, mode="wrap")
    return fftconvolve(a, kernel, mode="same")


def _mollify_array(a, mask, m, periodic):
    w = m.kernel * float(np.prod(m.spacing))
    num = _convolve(a * mask, w, periodic)
    den = _convolve(mask.astype(float), w, periodic)
    out = np.zeros_like(a)
    out[mask] = num[mask] / den[mask]
    return out


def mollify(f, m):
    """``f * j_alpha`` restricted to the fluid, kernel renormalized near walls.

    Renormalizing by the convolved fluid indicator keeps the kernel's unit mass
    at every fluid point, so constants are preserved up to the obstacle.
    """
    if not isinstance(m, Mollifier):
        raise TypeError("m must be a Mollifier")
    if not (0.0 < m.alpha < 1.0):
        raise AlphaOutOfRange(f"alpha must lie in (0, 1), got {m.alpha}")
    g = f.geometry
    if isinstance(f, ScalarField):
        return ScalarField(_mollify_array(f.values, g.fluid, m, g.periodic), g)
    comps = [
        _mollify_array(c, g.active_faces(k), m, g.periodic) for k, c in enumerate(f.components)
    ]
    return StaggeredField(comps, g)
