import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbgk.distributions import (
    DistributionField,
    MomentumGrid,
    VelocityMoments,
    discrete_moments,
    entropy_density,
    eval_equilibrium,
    h_functional,
    p_to_v_moments,
    read_snapshot,
    required_p_max,
    snapshot_bytes,
    v_to_p_moments,
    velocity_density,
    write_snapshot,
)
from qbgk.equilibrium import SpeciesMoments
from qbgk.errors import DomainError
from qbgk.quantum_integrals import moment0
from qbgk.verify import convergence_rate


def test_grid_validation():
    with pytest.raises(ValueError):
        MomentumGrid(0.0, 8)
    with pytest.raises(ValueError):
        MomentumGrid(1.0, 7)
    with pytest.raises(ValueError):
        MomentumGrid(1.0, 2)


def test_grid_symmetry():
    g = MomentumGrid(3.0, 10)
    assert np.array_equal(g.nodes, -g.nodes[::-1])
    assert g.dp == pytest.approx(0.6)
    assert g.shape == (10, 10, 10)
    assert g.to_dict() == {"p_max": 3.0, "n": 10}


def test_eval_equilibrium_point_values():
    g = MomentumGrid(1.0, 4)
    # shift b so that the origin-centred Gaussian peaks on the node (dp/2, dp/2, dp/2)
    b = np.full(3, g.dp / 2)
    f = eval_equilibrium(1.0, b, 0.0, 1.0, 1, g)
    assert f.values[2, 2, 2] == 0.5
    bo = eval_equilibrium(1.0, b, 1.0, 1.0, -1, g)
    assert bo.values[2, 2, 2] == pytest.approx(1 / (math.e - 1))


def test_eval_equilibrium_domain():
    g = MomentumGrid(4.0, 8)
    with pytest.raises(DomainError):
        eval_equilibrium(0.0, (0, 0, 0), 0.0, 1.0, 1, g)
    with pytest.raises(DomainError):
        eval_equilibrium(1.0, (0, 0, 0), 0.0, 1.0, -1, g)
    with pytest.raises(DomainError):
        eval_equilibrium(1.0, (0, 0, 0), math.nan, 1.0, 1, g)


def test_shift_equivariance():
    g = MomentumGrid(4.0, 16)
    m = 2.0
    k = 3  # whole-cell shift along p_x
    u = np.array([k * g.dp / m, 0.0, 0.0])
    shifted = eval_equilibrium(0.7, u, -0.5, m, 1, g).values
    centred = eval_equilibrium(0.7, (0, 0, 0), -0.5, m, 1, g).values
    assert np.allclose(shifted[k:], centred[:-k], rtol=1e-14, atol=0)


@settings(max_examples=50, deadline=None)
@given(
    a=st.floats(min_value=1e-3, max_value=1e3),
    c=st.floats(min_value=-700.0, max_value=700.0),
    bx=st.floats(min_value=-5.0, max_value=5.0),
)
def test_fermion_cap(a, c, bx):
    g = MomentumGrid(3.0, 8)
    v = eval_equilibrium(a, (bx, 0, 0), c, 1.0, 1, g).values
    assert np.all(v >= 0) and np.all(v < 1)


def test_constant_field_moments():
    g = MomentumGrid(2.0, 8)
    fld = DistributionField(np.ones(g.shape), 1, 1.0)
    mm = discrete_moments(fld, g)
    assert mm.N == pytest.approx((2 * g.p_max) ** 3, rel=1e-14)
    assert np.array_equal(mm.P, np.zeros(3))


def test_discrete_density_matches_continuum():
    g = MomentumGrid(8.0, 64)
    fld = eval_equilibrium(1.0, (0, 0, 0), 0.0, 1.0, 1, g)
    assert discrete_moments(fld, g).N == pytest.approx(moment0(1, 0.0), abs=1e-6)


def test_discrete_velocity():
    b = np.array([0.3, 0.0, 0.0])
    g = MomentumGrid(required_p_max(1.0, b, 0.0, 1.0), 48)
    mm = discrete_moments(eval_equilibrium(1.0, b, 0.0, 1.0, 1, g), g)
    assert np.allclose(mm.P / mm.N, b, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(
    a=st.floats(min_value=0.1, max_value=10.0),
    c=st.floats(min_value=-20.0, max_value=20.0),
    n=st.sampled_from([4, 6, 10, 16]),
)
def test_parity_exact(a, c, n):
    g = MomentumGrid(required_p_max(a, (0, 0, 0), c, 1.0), n)
    mm = discrete_moments(eval_equilibrium(a, (0, 0, 0), c, 1.0, 1, g), g)
    assert np.array_equal(mm.P, np.zeros(3))


@pytest.mark.parametrize(
    "a, b, c, m, tau",
    [(1.0, (0, 0, 0), 0.0, 1.0, 1), (0.3, (1, -2, 0.5), 2.0, 3.0, -1), (2.0, (0, 0, 0), -30.0, 1.0, 1)],
)
def test_tail_adequacy(a, b, c, m, tau):
    g = MomentumGrid(required_p_max(a, b, c, m), 16)
    v = eval_equilibrium(a, b, c, m, tau, g).values
    edge = np.concatenate([v[0].ravel(), v[-1].ravel(), v[:, 0].ravel(), v[:, -1].ravel(),
                           v[:, :, 0].ravel(), v[:, :, -1].ravel()])
    assert edge.max() < 1e-12


def test_auto_grid_covers_all_species():
    g = MomentumGrid.auto([(1.0, (0, 0, 0), 0.0, 1.0), (0.5, (0.2, 0, 0), -4.0, 4.0)], 12)
    assert g.p_max == pytest.approx(required_p_max(0.5, (0.2, 0, 0), -4.0, 4.0))


def test_midpoint_convergence_at_least_second_order():
    # on analytic integrands the midpoint rule converges faster than any power
    rate, errs = convergence_rate(ns=(24, 32, 40))
    assert errs[0] > errs[1] > errs[2]
    assert rate >= 2.0


def test_h_functional_closed_form():
    g = MomentumGrid(1.5, 6)
    half = DistributionField(np.full(g.shape, 0.5), 1, 1.0)
    H = h_functional(half, half, g)
    assert H == pytest.approx(-2 * (2 * g.p_max) ** 3 * math.log(2), rel=1e-14)
    zero = DistributionField(np.zeros(g.shape), 1, 1.0)
    assert h_functional(zero, DistributionField(np.zeros(g.shape), -1, 1.0), g) == 0.0


def test_entropy_density_extremes():
    assert entropy_density(np.array([0.0, 1.0]), 1).tolist() == pytest.approx([0.0, 0.0], abs=1e-14)
    with pytest.raises(DomainError):
        entropy_density(np.array([1.1]), 1)
    with pytest.raises(DomainError):
        entropy_density(np.array([-0.1]), -1)
    # boson entropy is finite for large occupancies
    assert np.isfinite(entropy_density(np.array([1e6]), -1)).all()


def test_field_check():
    g = MomentumGrid(1.0, 4)
    with pytest.raises(DomainError):
        DistributionField(np.full(g.shape, 1.5), 1, 1.0).check()
    with pytest.raises(DomainError):
        DistributionField(np.full(g.shape, -0.5), -1, 1.0).check()
    DistributionField(np.full(g.shape, 1.5), -1, 1.0).check()


def test_p_to_v_example():
    v = p_to_v_moments(SpeciesMoments(2.0, (2.0, 0.0, 0.0), 3.0), 2.0)
    assert v.N == 2.0 and v.E == 3.0
    assert np.allclose(v.u, (0.5, 0, 0))
    unit = p_to_v_moments(SpeciesMoments(2.0, (2.0, 1.0, 0.0), 3.0), 1.0)
    assert np.allclose(unit.u * unit.N, (2.0, 1.0, 0.0))


@given(
    N=st.floats(min_value=1e-3, max_value=1e3),
    px=st.floats(min_value=-10, max_value=10),
    E=st.floats(min_value=1e-3, max_value=1e3),
    m=st.floats(min_value=0.1, max_value=10),
)
def test_p_v_round_trip(N, px, E, m):
    mm = SpeciesMoments(N, (px, -px, 0.5 * px), E)
    back = v_to_p_moments(p_to_v_moments(mm, m), m)
    assert back.N == N and back.E == E
    assert np.allclose(back.P, mm.P, rtol=1e-14, atol=1e-300)


def test_velocity_density_integrals_agree():
    # density and mean velocity from fbar(v) dv equal those from f(p) dp
    m = 2.0
    g = MomentumGrid(required_p_max(1.0, (0.1, 0, 0), 0.0, m), 24)
    fld = eval_equilibrium(1.0, (0.1, 0, 0), 0.0, m, 1, g)
    v_nodes, fbar = velocity_density(fld, g)
    dv = g.dp / m
    N_v = fbar.sum() * dv ** 3
    vx = v_nodes[:, None, None]
    u_v = (fbar * vx).sum() * dv ** 3 / N_v
    mm = discrete_moments(fld, g)
    assert N_v == pytest.approx(mm.N, rel=1e-13)
    assert u_v == pytest.approx(p_to_v_moments(mm, m).u[0], rel=1e-12)
    assert isinstance(p_to_v_moments(mm, m), VelocityMoments)


def test_snapshot_round_trip(tmp_path):
    g = MomentumGrid(2.5, 6)
    rng = np.random.default_rng(7)
    fld = DistributionField(rng.random(g.shape), -1, 3.0)
    path = tmp_path / "f.snap"
    write_snapshot(path, fld, g)
    back, g2 = read_snapshot(path)
    assert g2 == g
    assert back.tau == fld.tau and back.m == 3.0
    assert np.array_equal(back.values, fld.values)


def test_snapshot_layout_is_x_fastest():
    g = MomentumGrid(1.0, 4)
    vals = np.zeros(g.shape)
    vals[1, 0, 0] = 7.0
    raw = snapshot_bytes(DistributionField(vals, 1, 1.0), g)
    body = np.frombuffer(raw[-8 * 64:], dtype="<f8")
    assert body[1] == 7.0
    assert raw[:8] == b"QBGKSNAP"


def test_snapshot_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.snap"
    bad.write_bytes(b"NOTASNAP" + bytes(40))
    with pytest.raises(ValueError):
        read_snapshot(bad)
    short = tmp_path / "short.snap"
    short.write_bytes(b"QB")
    with pytest.raises(ValueError):
        read_snapshot(short)
