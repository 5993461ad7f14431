import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import empty_box, periodic_box, random_scalar, random_velocity, small_disk
from acns.errors import (
    AlphaOutOfRange,
    BadExponent,
    BasisMismatch,
    EmptySeries,
    GeometryMismatch,
    InsufficientRank,
)
from acns.fields import (
    Mollifier,
    ScalarField,
    StaggeredField,
    convective,
    divergence,
    gradient,
    gradient_norm_sq,
    inner,
    laplacian,
    lp_norm,
    mollify,
    negative_sobolev_lp_norm,
    sobolev_norm,
    space_time_norm,
    time_norm,
    vector_laplacian,
)

GEOMS = {"disk": small_disk(), "box": empty_box(), "periodic": periodic_box()}


@pytest.fixture(params=sorted(GEOMS))
def geom(request):
    return GEOMS[request.param]


def test_divergence_of_constant_is_zero(periodic_geom):
    g = periodic_geom
    u = StaggeredField([np.full(g.face_shape(k), 1.5) for k in range(2)], g)
    assert np.max(np.abs(divergence(u).values)) < 1e-12


@pytest.mark.parametrize("sign, expected", [(-1.0, 0.0), (1.0, 2.0)])
def test_divergence_of_linear_fields(box_geom, sign, expected):
    g = box_geom
    x0, _ = g.face_centers(0)
    _, y1 = g.face_centers(1)
    u = StaggeredField([x0, sign * y1], g)
    div = divergence(u).values
    assert np.allclose(div[1:-1, 1:-1], expected, atol=1e-12)


def test_gradient_of_linear(box_geom):
    x, _ = box_geom.cell_centers()
    gx = gradient(ScalarField(x, box_geom)).components[0]
    act = box_geom.active_faces(0)
    assert np.allclose(gx[act], 1.0, atol=1e-12)
    assert np.all(gx[~act] == 0)


def test_gradient_of_constant(small_geom):
    g = gradient(ScalarField(np.full(small_geom.cell_counts, 3.0) * small_geom.fluid, small_geom))
    assert all(np.max(np.abs(c)) < 1e-12 for c in g.components)


def test_geometry_mismatch():
    a = ScalarField.zeros(small_disk())
    b = ScalarField.zeros(empty_box())
    with pytest.raises(GeometryMismatch):
        inner(a, b)
    with pytest.raises(GeometryMismatch):
        ScalarField(np.zeros((3, 3)), small_disk())


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_summation_by_parts(seed):
    rng = np.random.default_rng(seed)
    for g in GEOMS.values():
        p, u = random_scalar(g, rng), random_velocity(g, rng)
        lhs = inner(gradient(p), u)
        rhs = -inner(p, divergence(u))
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


def test_summation_by_parts_3d(geom_3d):
    rng = np.random.default_rng(3)
    p, u = random_scalar(geom_3d, rng), random_velocity(geom_3d, rng)
    assert inner(gradient(p), u) == pytest.approx(-inner(p, divergence(u)), rel=1e-10)


def test_laplacian_is_div_grad(geom):
    p = random_scalar(geom, np.random.default_rng(1))
    assert np.allclose(laplacian(p).values, divergence(gradient(p)).values, atol=1e-10)


def test_vector_laplacian_energy_identity(geom):
    u = random_velocity(geom, np.random.default_rng(2))
    assert inner(u, vector_laplacian(u)) == pytest.approx(-gradient_norm_sq(u), rel=1e-12)


def test_convective_term_does_no_work(geom):
    # skew-symmetric form: <(u.grad)u + (div u)u/2, u> = 0 for any u
    u = random_velocity(geom, np.random.default_rng(4))
    work = inner(convective(u), u)
    assert abs(work) < 1e-11 * lp_norm(u, 2) ** 3


def test_lp_norm_indicator(small_geom):
    v = np.zeros(small_geom.cell_counts)
    cells = [(3, 4), (10, 2), (20, 20)]
    for c in cells:
        v[c] = 1.0
    f = ScalarField(v, small_geom)
    assert lp_norm(f, 1) == pytest.approx(len(cells) * small_geom.cell_volume, rel=1e-14)
    assert lp_norm(f, np.inf) == 1.0


def test_lp_norm_matches_naive_sum(small_geom):
    rng = np.random.default_rng(5)
    u = random_velocity(small_geom, rng)
    total = 0.0
    for k, c in enumerate(u.components):
        for idx in zip(*np.nonzero(small_geom.active_faces(k))):
            total += c[idx] ** 2
    assert lp_norm(u, 2) == pytest.approx(math.sqrt(total * small_geom.cell_volume), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    p=st.sampled_from([1, 1.5, 2, 3, 4, 6, np.inf]),
    c=st.one_of(st.just(0.0), st.floats(1e-6, 5), st.floats(-5, -1e-6)),
)
def test_norm_axioms(seed, p, c):
    g = GEOMS["disk"]
    rng = np.random.default_rng(seed)
    f, h = random_scalar(g, rng), random_scalar(g, rng)
    assert lp_norm(f * c, p) == pytest.approx(abs(c) * lp_norm(f, p), rel=1e-12, abs=1e-300)
    assert lp_norm(f + h, p) <= lp_norm(f, p) + lp_norm(h, p) + 1e-12


@pytest.mark.parametrize("p", [0.5, 0, -1, None])
def test_bad_exponent(small_geom, p):
    with pytest.raises(BadExponent):
        lp_norm(ScalarField.zeros(small_geom), p)


def test_time_norm_constant_and_single():
    assert time_norm([2.0] * 11, 0.1, 2) == pytest.approx(2.0 * math.sqrt(1.0), rel=1e-14)
    assert time_norm([3.0], 0.1, np.inf) == 3.0
    with pytest.raises(EmptySeries):
        time_norm([], 0.1, 2)


@pytest.mark.parametrize("n", [11, 21, 41])
def test_time_norm_ramp(n):
    # ||t||_{L2(0,1)} = 1/sqrt(3); trapezoid error is O(dt^2)
    t = np.linspace(0, 1, n)
    dt = t[1] - t[0]
    assert abs(time_norm(t, dt, 2) - 1 / math.sqrt(3)) < 0.2 * dt**2


def test_space_time_norm_constant_series(small_geom):
    f = random_scalar(small_geom, np.random.default_rng(6))
    val = space_time_norm([f] * 9, 2, 4, 0.25)
    assert val == pytest.approx(math.sqrt(2.0) * lp_norm(f, 4), rel=1e-13)
    assert space_time_norm([f], np.inf, 2, 0.25) == pytest.approx(lp_norm(f, 2))
    with pytest.raises(EmptySeries):
        space_time_norm([], 2, 2, 0.1)


@pytest.mark.parametrize("gamma", [-2.0, -1.0, 0.0, 1.0, 2.0])
@pytest.mark.parametrize("j", [0, 3, 17])
def test_sobolev_norm_of_eigenfunction(small_basis, gamma, j):
    v = small_basis.mode(j)
    expected = small_basis.eigenvalues[j] ** (gamma / 2)
    assert sobolev_norm(v, gamma, small_basis) == pytest.approx(expected, rel=1e-9)


def test_sobolev_two_modes(small_basis):
    lam = small_basis.eigenvalues
    f = small_basis.mode(0) + small_basis.mode(1)
    expected = math.sqrt(lam[0] ** -2 + lam[1] ** -2)
    assert sobolev_norm(f, -2, small_basis) == pytest.approx(expected, rel=1e-10)


def test_sobolev_gamma_zero_is_l2(small_basis):
    rng = np.random.default_rng(8)
    c = rng.standard_normal(small_basis.rank)
    f = ScalarField(small_basis.synthesize(c), small_basis.geometry)
    assert sobolev_norm(f, 0, small_basis) == pytest.approx(lp_norm(f, 2), rel=1e-10)


def test_sobolev_rank_guard(small_basis):
    rough = random_scalar(small_basis.geometry, np.random.default_rng(9))
    with pytest.raises(InsufficientRank):
        sobolev_norm(rough, 1.0, small_basis)
    val, capture = sobolev_norm(rough, -1.0, small_basis, return_capture=True)
    assert 0 < capture < 0.5 and val > 0


def test_sobolev_basis_mismatch(small_basis, box_geom):
    with pytest.raises(BasisMismatch):
        sobolev_norm(ScalarField.zeros(box_geom), -1, small_basis)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_sobolev_ordering_bounded_by_first_eigenvalue(seed):
    from acns.elliptic import dirichlet_eigenbasis

    basis = dirichlet_eigenbasis(GEOMS["disk"], 40, use_cache=False)
    rng = np.random.default_rng(seed)
    f = ScalarField(basis.synthesize(rng.standard_normal(basis.rank)), basis.geometry)
    # ||f||_{H^r} <= lambda_1^{(r-s)/2} ||f||_{H^s} for r < s
    for r, s in [(-2, -1), (-1, 0), (0, 1), (-2, 1)]:
        bound = basis.eigenvalues[0] ** ((r - s) / 2)
        assert sobolev_norm(f, r, basis) <= bound * sobolev_norm(f, s, basis) * (1 + 1e-12)


def test_negative_sobolev_single_mode(small_basis):
    v = small_basis.mode(2)
    lam = small_basis.eigenvalues[2]
    assert negative_sobolev_lp_norm(v, 2, 2, small_basis) == pytest.approx(1 / lam, rel=1e-10)
    assert negative_sobolev_lp_norm(v * 0.0, 2, 2, small_basis) == 0.0


def test_negative_sobolev_paths_agree(small_basis):
    rng = np.random.default_rng(10)
    c = rng.standard_normal(small_basis.rank) / (1 + np.arange(small_basis.rank))
    f = ScalarField(small_basis.synthesize(c), small_basis.geometry)
    spectral = negative_sobolev_lp_norm(f, 2, 2, small_basis)
    assert spectral == pytest.approx(sobolev_norm(f, -2, small_basis), rel=1e-10)
    # exact Dirichlet solves agree on data inside the retained span
    assert negative_sobolev_lp_norm(f, 2, 4) == pytest.approx(
        negative_sobolev_lp_norm(f, 2, 4, small_basis), rel=1e-7
    )
    assert negative_sobolev_lp_norm(f, 3, 4, small_basis, hybrid=True) == pytest.approx(
        negative_sobolev_lp_norm(f, 3, 4, small_basis), rel=1e-7
    )


def test_negative_sobolev_errors(small_geom):
    f = ScalarField.zeros(small_geom)
    with pytest.raises(BadExponent):
        negative_sobolev_lp_norm(f, 4, 2)
    with pytest.raises(BasisMismatch):
        negative_sobolev_lp_norm(f, 3, 2)


@pytest.mark.parametrize("alpha", [0.05, 0.1, 0.3])
def test_mollifier_kernel(alpha):
    m = Mollifier.build(alpha, (1 / 64, 1 / 64))
    assert np.all(m.kernel >= 0)
    assert m.kernel.sum() * (1 / 64) ** 2 == pytest.approx(1.0, abs=1e-12)
    assert m.support_radius <= alpha


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
def test_mollifier_alpha_range(alpha):
    with pytest.raises(AlphaOutOfRange):
        Mollifier.build(alpha, (0.1, 0.1))


def test_mollify_preserves_constants(geom):
    m = Mollifier.build(0.2, geom.spacing)
    f = ScalarField(np.full(geom.cell_counts, 2.5) * geom.fluid, geom)
    out = mollify(f, m)
    assert np.allclose(out.values[geom.fluid], 2.5, atol=1e-12)
    assert np.all(out.values[~geom.fluid] == 0)


def test_mollify_is_linear(small_geom):
    rng = np.random.default_rng(11)
    m = Mollifier.build(0.15, small_geom.spacing)
    f, h = random_scalar(small_geom, rng), random_scalar(small_geom, rng)
    lhs = mollify(f * 2.0 + h, m).values
    rhs = 2.0 * mollify(f, m).values + mollify(h, m).values
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_mollify_commutes_with_periodic_shift(periodic_geom):
    rng = np.random.default_rng(12)
    m = Mollifier.build(0.2, periodic_geom.spacing)
    f = random_scalar(periodic_geom, rng)
    shifted = ScalarField(np.roll(f.values, (3, -5), axis=(0, 1)), periodic_geom)
    assert np.allclose(
        mollify(shifted, m).values, np.roll(mollify(f, m).values, (3, -5), axis=(0, 1)),
        atol=1e-12,
    )
