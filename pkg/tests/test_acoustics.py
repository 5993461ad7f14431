import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acns.ac_solver import SimConfig, Trajectory, run
from acns.acoustics import (
    AcousticFields,
    _leapfrog,
    boundary_values,
    rescale,
    split_pressure,
    strichartz_functional,
    unrescale,
    wave_residual,
)
from acns.errors import CFLViolation, InsufficientSnapshots, NonuniformCadence
from acns.fields import ScalarField, StaggeredField
from acns.geometry import Disk, GeometrySpec


def fake_trajectory(geom, times, eps=0.01):
    """All-zero run sampled at ``times``."""
    n = len(times)
    vel = [StaggeredField.zeros(geom)] * n
    pres = [ScalarField.zeros(geom)] * n
    return Trajectory(geom, eps, 1.0, times[1] - times[0], 1, np.asarray(times), vel, pres)


def single_mode_fields(basis, tau):
    """Pressure ``cos(tau) v_1`` with zero velocity."""
    g = basis.geometry
    v1 = basis.mode(0).values
    return AcousticFields(
        epsilon=0.01,
        tau=np.asarray(tau),
        velocities=[StaggeredField.zeros(g)] * len(tau),
        pressures=[ScalarField(math.cos(t) * v1, g) for t in tau],
    )


@settings(max_examples=20, deadline=None)
@given(eps=st.floats(1e-4, 1.0), h=st.floats(1e-3, 0.1), n=st.integers(2, 8))
def test_rescale_round_trip(small_geom, eps, h, n):
    times = np.arange(n) * h
    fields = rescale(fake_trajectory(small_geom, times), eps)
    assert np.allclose(fields.tau, times / math.sqrt(eps))
    back, _, _ = unrescale(fields)
    assert np.allclose(back, times, rtol=1e-12, atol=1e-15)


def test_rescale_example(small_geom):
    fields = rescale(fake_trajectory(small_geom, [0.0, 0.01, 0.02]), 1e-4)
    assert np.allclose(fields.tau, [0.0, 1.0, 2.0])


def test_rescale_rejects_nonuniform_times(small_geom):
    with pytest.raises(NonuniformCadence):
        rescale(fake_trajectory(small_geom, [0.0, 0.1, 0.3]))


def test_zero_run_has_zero_residual_and_split(small_geom, small_basis):
    fields = rescale(fake_trajectory(small_geom, [0.0, 0.1, 0.2, 0.3]))
    assert not wave_residual(fields, small_basis).any()
    split_pressure(fields, small_basis)
    assert not fields.q1.any() and not fields.q2.any() and not fields.defect.any()


def test_residual_needs_three_snapshots(small_geom, small_basis):
    with pytest.raises(InsufficientSnapshots):
        wave_residual(rescale(fake_trajectory(small_geom, [0.0, 0.1])), small_basis)


def test_dirichlet_residual_closed_form(small_basis):
    h = 0.05
    tau = np.arange(6) * h
    fields = single_mode_fields(small_basis, tau)
    res = wave_residual(fields, small_basis, laplacian="dirichlet")
    lam = small_basis.eigenvalues[0]
    exact = np.abs(lam + (2 * math.cos(h) - 2) / h**2) * np.abs(np.cos(tau[1:-1])) / lam
    assert np.allclose(res, exact, rtol=1e-8)


def test_single_mode_second_wave(small_basis):
    lam = small_basis.eigenvalues[0]
    tau = np.linspace(0.0, 2.0, 41)
    g = small_basis.geometry
    v1 = small_basis.mode(0)
    fields = AcousticFields(
        epsilon=0.01,
        tau=tau,
        velocities=[StaggeredField.zeros(g)] * tau.size,
        pressures=[v1] * tau.size,
    )
    split_pressure(fields, small_basis)
    expect = np.cos(math.sqrt(lam) * tau) / math.sqrt(lam)
    assert np.max(np.abs(fields.q2[:, 0] - expect)) <= 0.01 / math.sqrt(lam)
    assert np.max(np.abs(fields.q2[:, 1:])) < 1e-8
    assert not fields.q1.any()


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_free_oscillators_follow_closed_form(seed):
    rng = np.random.default_rng(seed)
    lam = rng.uniform(0.5, 50.0, 6)
    a0, v0 = rng.standard_normal(6), rng.standard_normal(6)
    n, dtau = 30, 0.05
    out = _leapfrog(lam, a0, v0, np.zeros((n, 6)), dtau, 20)
    tau = np.arange(n)[:, None] * dtau
    w = np.sqrt(lam)
    exact = a0 * np.cos(w * tau) + v0 / w * np.sin(w * tau)
    scale = np.abs(a0) + np.abs(v0) / w
    assert np.all(np.abs(out - exact) <= 2e-3 * scale)


def test_explicit_substeps_above_cfl(small_geom, small_basis):
    fields = rescale(fake_trajectory(small_geom, [0.0, 0.1, 0.2]))
    with pytest.raises(CFLViolation):
        split_pressure(fields, small_basis, substeps=1)


def small_run(dt=None, t_end=0.02):
    cfg = SimConfig(
        epsilon=1e-2,
        mu=0.5,
        t_end=t_end,
        dt=dt,
        geometry=GeometrySpec((2.0, 2.0), (32, 32), Disk((1.0, 1.0), 0.3)),
    )
    traj, _ = run(cfg)
    return traj


def test_boundary_term_defect_halves_with_dt(small_basis):
    coarse = small_run()
    defects = []
    for dt in (coarse.dt, coarse.dt / 2):
        fields = rescale(small_run(dt=dt))
        split_pressure(fields, small_basis, boundary_term=True)
        defects.append(float(np.max(fields.defect)))
    assert defects[0] / defects[1] == pytest.approx(2.0, rel=0.25)


def test_components_vanish_on_the_boundary(small_basis):
    fields = rescale(small_run())
    split_pressure(fields, small_basis)
    g = small_basis.geometry
    for which in ("p1", "p2"):
        for n in (0, len(fields.tau) - 1):
            values = fields.component_field(which, n).values
            assert not boundary_values(values, g).any()


def test_strichartz_on_zero_run(small_geom, small_basis):
    row = strichartz_functional(fake_trajectory(small_geom, [0.0, 0.1, 0.2]), 0.01, small_basis)
    assert row.lhs == 0 and row.rhs == 0 and math.isnan(row.ratio)


def test_strichartz_ratio_on_short_run(small_basis):
    traj = small_run()
    row = strichartz_functional(traj, traj.epsilon, small_basis)
    assert np.isfinite(row.ratio) and 0 < row.ratio < 1
    assert set(row.terms) == {
        "p_L4Wm24",
        "dtp_L4Wm34",
        "p0_L2",
        "divu0_Hm1",
        "conv_L1L32",
        "divu_L2L2",
    }
