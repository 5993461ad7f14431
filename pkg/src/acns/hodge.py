"""Discrete Leray-Hodge decomposition ``u = Pu + Qu`` with ``Q = grad Delta_N^{-1} div``."""

from dataclasses import dataclass

from .elliptic import DEFAULT_TOL, solve_poisson_neumann
from .fields import ScalarField, StaggeredField, divergence, gradient, lp_norm

TOL_PROJ = 10 * DEFAULT_TOL


@dataclass
class LerayPair:
    solenoidal: StaggeredField
    gradient_part: StaggeredField
    potential: ScalarField

    def check(self, u, tol=TOL_PROJ):
        """Return the worst relative violation of the pair invariants."""
        scale = max(lp_norm(u, 2), 1e-300)
        recon = lp_norm(self.solenoidal + self.gradient_part - u, 2) / scale
        div = lp_norm(divergence(self.solenoidal), 2) / scale
        return max(recon, div) <= tol, max(recon, div)


def leray_decompose(u, tol=DEFAULT_TOL, method="direct"):
    """Split ``u`` into its solenoidal part and the gradient of a zero-mean potential.

    Normal components on the obstacle and box faces are zero in both parts by
    construction (inactive faces are never written).
    """
    lam = solve_poisson_neumann(divergence(u), tol=tol, remove_mean=True, method=method)
    q = gradient(lam)
    return LerayPair(solenoidal=u - q, gradient_part=q, potential=lam)


def project(u, **kw):
    return leray_decompose(u, **kw).solenoidal


def gradient_component(u, **kw):
    return leray_decompose(u, **kw).gradient_part
