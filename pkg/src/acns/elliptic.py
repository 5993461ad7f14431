"""Poisson solvers on the masked grid and the Dirichlet-Laplacian eigenbasis.

Both Laplacians act on fluid cells only.  The Neumann operator is exactly
``div(grad .)`` from :mod:`acns.fields` (zero flux through every inactive
face).  The Dirichlet operator places the boundary on the cell faces with a
reflected ghost value, which gives second-order accuracy on box walls and the
closed-form eigenvalues ``sum_a (4/h_a^2) sin^2(k_a pi / (2 n_a))`` on a box.
"""

from dataclasses import dataclass
import os
from pathlib import Path
import struct

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu

from .errors import IncompatibleRHS, NoConvergence, RankTooLarge
from .fields import ScalarField

DEFAULT_TOL = 1e-8


def _cell_index(geom):
    def build():
        idx = np.full(geom.cell_counts, -1, dtype=np.int64)
        idx[geom.fluid] = np.arange(geom.n_fluid)
        return idx

    return geom._cached("cell_index", build)


def laplacian_matrix(geom, dirichlet=False):
    """Sparse Laplacian on fluid cells (row order = C order of the fluid mask)."""
    key = ("laplacian_matrix", bool(dirichlet))

    def build():
        idx = _cell_index(geom)
        fluid = geom.fluid
        n = geom.n_fluid
        rows, cols, vals = [], [], []
        diag = np.zeros(n)
        for a, h in enumerate(geom.spacing):
            w = 1.0 / h**2
            if geom.periodic:
                nb_idx = np.roll(idx, -1, axis=a)
                nb_fluid = np.roll(fluid, -1, axis=a)
                pair = fluid & nb_fluid
                i0 = idx[pair]
                i1 = nb_idx[pair]
            else:
                lo = [slice(None)] * geom.ndim
                hi = [slice(None)] * geom.ndim
                lo[a] = slice(None, -1)
                hi[a] = slice(1, None)
                pair = fluid[tuple(lo)] & fluid[tuple(hi)]
                i0 = idx[tuple(lo)][pair]
                i1 = idx[tuple(hi)][pair]
            rows += [i0, i1]
            cols += [i1, i0]
            vals += [np.full(i0.size, w), np.full(i0.size, w)]
            np.subtract.at(diag, i0, w)
            np.subtract.at(diag, i1, w)
            if dirichlet:
                # every face of a fluid cell that is not shared with another
                # fluid cell carries a zero-valued ghost: -2/h^2 on the diagonal
                for off in (1, -1):
                    if geom.periodic:
                        other = np.roll(fluid, -off, axis=a)
                    else:
                        other = np.zeros_like(fluid)
                        if off == 1:
                            other[tuple(lo)] = fluid[tuple(hi)]
                        else:
                            other[tuple(hi)] = fluid[tuple(lo)]
                    ghost = fluid & ~other
                    np.subtract.at(diag, idx[ghost], 2.0 * w)
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        vals.append(diag)
        m = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )
        m.sum_duplicates()
        return m

    return geom._cached(key, build)


def _neumann_factor(geom):
    def build():
        a = laplacian_matrix(geom, dirichlet=False)
        n = a.shape[0]
        ones = sp.csr_matrix(np.ones((n, 1)))
        bordered = sp.bmat([[a, ones], [ones.T, None]], format="csc")
        return splu(bordered)

    return geom._cached("neumann_lu", build)


def _dirichlet_factor(geom):
    return geom._cached(
        "dirichlet_lu", lambda: splu(sp.csc_matrix(laplacian_matrix(geom, dirichlet=True)))
    )


def _pcg(apply_a, b, diag, tol, maxiter, project=None):
    """Jacobi-preconditioned CG for the SPD operator ``-A`` (A negative semidefinite)."""
    x = np.zeros_like(b)
    r = b.copy()
    if project is not None:
        r = project(r)
    bnorm = np.linalg.norm(r)
    if bnorm == 0.0:
        return x, 0
    minv = 1.0 / diag
    z = minv * r
    if project is not None:
        z = project(z)
    d = z.copy()
    rz = np.dot(r, z)
    for it in range(1, maxiter + 1):
        ad = apply_a(d)
        alpha = rz / np.dot(d, ad)
        x += alpha * d
        r -= alpha * ad
        if project is not None:
            x = project(x)
            r = project(r)
        if np.linalg.norm(r) <= tol * bnorm:
            return x, it
        z = minv * r
        if project is not None:
            z = project(z)
        rz_new = np.dot(r, z)
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise NoConvergence(maxiter, np.linalg.norm(r) / bnorm)


def _zero_mean(v):
    return v - v.mean()


def solve_poisson_neumann(rhs, tol=DEFAULT_TOL, remove_mean=False, method="direct"):
    """Solve ``Delta L = rhs`` with zero normal flux and ``sum L = 0``.

    ``method='direct'`` uses a cached sparse LU of the mean-bordered system;
    ``method='cg'`` runs Jacobi-preconditioned CG in the zero-mean subspace.
    Set ``remove_mean`` to subtract the mean of an (almost) compatible rhs
    instead of rejecting it.
    """
    geom = rhs.geometry
    b = rhs.values[geom.fluid].astype(float)
    norm_b = np.linalg.norm(b)
    total = b.sum()
    if remove_mean:
        b = b - b.mean()
    elif abs(total) > 1e-10 * max(norm_b, 1e-300) * np.sqrt(b.size):
        raise IncompatibleRHS(f"rhs integrates to {total * geom.cell_volume:.3e}, expected 0")
    else:
        b = b - b.mean()
    if not b.any():
        return ScalarField.zeros(geom)
    a = laplacian_matrix(geom, dirichlet=False)
    if method == "direct":
        sol = _neumann_factor(geom).solve(np.append(b, 0.0))[:-1]
    elif method == "cg":
        neg, _ = _pcg(
            lambda v: -(a @ v), -b, -a.diagonal(), 0.1 * tol, 10 * b.size, project=_zero_mean
        )
        sol = neg
    else:
        raise ValueError(f"unknown method {method!r}")
    res = np.linalg.norm(a @ sol - b)
    if res > tol * np.linalg.norm(b):
        raise NoConvergence(1, res / np.linalg.norm(b))
    out = np.zeros(geom.cell_counts)
    out[geom.fluid] = sol - sol.mean()
    return ScalarField(out, geom)


def solve_poisson_dirichlet(rhs, tol=DEFAULT_TOL, method="direct"):
    """Solve ``Delta phi = rhs`` with ``phi = 0`` on the obstacle and box boundary."""
    geom = rhs.geometry
    b = rhs.values[geom.fluid].astype(float)
    if not b.any():
        return ScalarField.zeros(geom)
    a = laplacian_matrix(geom, dirichlet=True)
    if method == "direct":
        sol = _dirichlet_factor(geom).solve(b)
    elif method == "cg":
        sol, _ = _pcg(lambda v: -(a @ v), -b, -a.diagonal(), 0.1 * tol, 10 * b.size)
    else:
        raise ValueError(f"unknown method {method!r}")
    res = np.linalg.norm(a @ sol - b)
    if res > tol * np.linalg.norm(b):
        raise NoConvergence(1, res / np.linalg.norm(b))
    out = np.zeros(geom.cell_counts)
    out[geom.fluid] = sol
    return ScalarField(out, geom)


def box_dirichlet_eigenvalues(cell_counts, spacing, count):
    """Closed-form eigenvalues of the discrete Dirichlet Laplacian on an empty box."""
    per_axis = [
        (4.0 / h**2) * np.sin(np.arange(1, n + 1) * np.pi / (2 * n)) ** 2
        for n, h in zip(cell_counts, spacing)
    ]
    grids = np.meshgrid(*per_axis, indexing="ij")
    return np.sort(sum(grids).ravel())[:count]


# ---------------------------------------------------------------------------
# eigenbasis
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """``K`` lowest Dirichlet eigenpairs; vectors are L2-orthonormal (volume weighted)."""

    geometry: object
    eigenvalues: np.ndarray
    vectors: np.ndarray  # (K, n_fluid)

    @property
    def rank(self):
        return self.eigenvalues.size

    def coefficients(self, values):
        g = self.geometry
        return self.vectors @ values[g.fluid] * g.cell_volume

    def synthesize(self, coeffs):
        g = self.geometry
        out = np.zeros(g.cell_counts)
        out[g.fluid] = coeffs @ self.vectors
        return out

    def mode(self, j):
        c = np.zeros(self.rank)
        c[j] = 1.0
        return ScalarField(self.synthesize(c), self.geometry)

    def apply_power(self, values, s):
        """``(-Delta_D)^s`` restricted to the retained modes."""
        return self.synthesize(self.coefficients(values) * self.eigenvalues**s)


_CACHE_MAGIC = b"ACEB"
_CACHE_VERSION = 1


def _cache_path(geom, k):
    root = os.environ.get("ACNS_CACHE_DIR")
    if not root:
        return None
    return Path(root) / f"basis_{geom.digest()}_K{k}.bin"


def save_basis(basis, path):
    g = basis.geometry
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<III", _CACHE_VERSION, basis.rank, g.n_fluid))
        fh.write(g.digest().encode("ascii"))
        fh.write(basis.eigenvalues.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(basis.vectors, dtype="<f8").tobytes())


def load_basis(geom, path):
    """Return the cached basis, or None when the file is absent or does not match."""
    path = Path(path)
    if not path.exists():
        return None
    data = path.read_bytes()
    if len(data) < 32 or data[:4] != _CACHE_MAGIC:
        return None
    version, k, n = struct.unpack("<III", data[4:16])
    digest = data[16:32].decode("ascii", errors="replace")
    if version != _CACHE_VERSION or n != geom.n_fluid or digest != geom.digest():
        return None
    body = np.frombuffer(data[32:], dtype="<f8")
    if body.size != k + k * n:
        return None
    return SpectralBasis(geom, body[:k].copy(), body[k:].reshape(k, n).copy())


def dirichlet_eigenbasis(geometry, K, use_cache=True):
    """Lowest ``K`` eigenpairs of ``-Delta_D`` via shift-invert Lanczos (ARPACK)."""
    n = geometry.n_fluid
    if K < 1 or K > 0.25 * n:
        raise RankTooLarge(f"rank {K} exceeds a quarter of the {n} fluid cells")
    key = ("basis", K)
    if key in geometry._cache:
        return geometry._cache[key]
    path = _cache_path(geometry, K) if use_cache else None
    if path is not None:
        basis = load_basis(geometry, path)
        if basis is not None:
            geometry._cache[key] = basis
            return basis

    a = -laplacian_matrix(geometry, dirichlet=True)
    try:
        vals, vecs = eigsh(a.tocsc(), k=K, sigma=0.0, which="LM", v0=np.ones(n), tol=1e-12)
    except Exception as exc:  # ARPACK failures
        raise NoConvergence(0, float("nan"), f"eigensolver failed: {exc}") from exc
    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order].T.copy()
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True) * np.sqrt(geometry.cell_volume)
    pivot = np.argmax(np.abs(vecs), axis=1)
    signs = np.sign(vecs[np.arange(K), pivot])
    vecs *= signs[:, None]

    resid = np.linalg.norm((a @ vecs.T) - vecs.T * vals, axis=0) * np.sqrt(geometry.cell_volume)
    if np.any(vals <= 0) or np.any(resid > 1e-6 * vals):
        raise NoConvergence(0, float(resid.max()), "eigenpairs failed the residual check")
    basis = SpectralBasis(geometry, vals, vecs)
    geometry._cache[key] = basis
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_basis(basis, path)
    return basis
