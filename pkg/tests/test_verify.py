import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from medflow.errors import NotApplicableError, TopologyChangeError
from medflow.kernels import Annulus, Ball
from medflow.verify import (CurveFront, Interval, QuadraticTestField, circle_front,
                            circle_polyline, consistency_trend, dkw_envelope_test,
                            error_metrics, front_tracking_step, hausdorff, ks_statistic,
                            levelset_F, measure_consistency, track_front)


def test_levelset_F_examples():
    assert levelset_F([0, 1], np.diag([2 * 0.7, 0])) == pytest.approx(1.4)
    assert levelset_F([0, 0], np.diag([2, 0])) == Interval(0.0, 2.0)
    assert levelset_F([0, 0], np.zeros((2, 2))) == Interval(0.0, 0.0)


@given(st.integers(0, 10 ** 6), st.sampled_from([2, 3, 4]))
def test_levelset_F_rotation_invariant(seed, d):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=d)
    A = rng.normal(size=(d, d))
    H = A + A.T
    Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    assert levelset_F(Q @ g, Q @ H @ Q.T) == pytest.approx(levelset_F(g, H), abs=1e-10)


@given(st.integers(0, 10 ** 6))
def test_levelset_F_zero_gradient_eigen(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3))
    H = A + A.T
    lam = np.linalg.eigvals(H).real
    lo, hi = levelset_F(np.zeros(3), H)
    assert lo == pytest.approx(np.trace(H) - lam.max(), abs=1e-10)
    assert hi == pytest.approx(np.trace(H) - lam.min(), abs=1e-10)


def test_quadratic_field_normal_form():
    f = QuadraticTestField(a=[[0.5, 0.1], [0.1, -0.2]], b=[0.3, 0.4], b_d=0.7)
    assert f.d == 3
    assert f.F == pytest.approx(0.6)
    np.testing.assert_allclose(f.gradient(np.zeros(3)), [0, 0, 1])
    assert levelset_F(f.gradient(np.zeros(3)), f.hessian()) == pytest.approx(f.F)
    x = np.random.default_rng(0).normal(size=(5, 3))
    # second-order Taylor expansion is exact for a quadratic
    H = f.hessian()
    taylor = x[:, 2] + 0.5 * np.einsum("ni,ij,nj->n", x, H, x)
    np.testing.assert_allclose(f(x), taylor)


RADII = (0.1, 0.05, 0.025)


@pytest.mark.parametrize("spec, pred", [(Ball(1.0), 1 / 3), (Annulus(1.0, 0.5), 0.5833333333333334)])
def test_consistency_curved(spec, pred):
    rows = measure_consistency(QuadraticTestField(a=[[1.0]], b=[0.0]), spec, RADII,
                               mc_nodes=2 ** 18)
    assert all(row.predicted == pytest.approx(pred, rel=1e-12) for row in rows)
    C, ok = consistency_trend(rows)
    assert ok
    assert abs(rows[-1].error) <= 0.05 * pred + rows[-1].envelope


def test_consistency_flat():
    rows = measure_consistency(QuadraticTestField(a=[[0.0]], b=[0.0]), Ball(1.0), RADII,
                               mc_nodes=2 ** 18)
    for row in rows:
        assert row.predicted == 0.0
        assert abs(row.measured) <= row.envelope + 1e-12


def test_ball_caveat_at_zero_gradient():
    """At a zero-gradient point of |x|**2 the ball median does not approach
    c_A F = 1/3; it stays at the stencil median of |x|**2, which is 1/2."""
    phi = lambda x: np.sum(x ** 2, axis=1)
    rows = measure_consistency(phi, Ball(1.0), RADII, mc_nodes=2 ** 18, center=np.zeros(2),
                               F=2.0)
    for row in rows:
        assert row.measured == pytest.approx(0.5, abs=row.envelope + 1e-9)
        assert abs(row.error) > 0.15


def test_annulus_inside_interval_at_zero_gradient():
    phi = lambda x: x[:, 0] ** 2
    rows = measure_consistency(phi, Annulus(1.0, 0.5), RADII, mc_nodes=2 ** 18,
                               center=np.zeros(2), F=0.0)
    c_A = 0.2916666666666667
    for row in rows:
        assert 0.0 <= row.measured <= 2 * c_A


def test_front_circle_shrinks():
    R0, dt, T = 0.3, 1e-5, 0.005
    snaps = track_front(circle_front(R0, spacing=0.012), dt, T, times=[T / 2, T],
                        check_every=50)
    for t, f in snaps:
        R = math.sqrt(f.area / math.pi)
        assert R == pytest.approx(math.sqrt(R0 ** 2 - 2 * t), rel=1e-3)


def test_front_one_step_radius():
    R, dt = 0.3, 1e-5
    f = front_tracking_step(circle_front(R, spacing=0.012), dt)
    rad = np.linalg.norm(f.vertices - 0.5, axis=1)
    assert np.mean(rad) == pytest.approx(R - dt / R, abs=5 * dt ** 2 / R ** 3 + 1e-7)


def test_front_straight_line_on_torus():
    x = np.arange(0, 1, 0.02)
    f = CurveFront(np.column_stack([x, np.full_like(x, 0.4)]), 0.02, period=[1.0, 0.0])
    g = front_tracking_step(f, 1e-5)
    np.testing.assert_allclose(g.vertices[:, 1], 0.4, atol=1e-12)
    assert g.length == pytest.approx(1.0, rel=1e-12)


def test_front_ellipse_rounds_out():
    th = np.linspace(0, 2 * np.pi, 2000, endpoint=False)
    f = CurveFront(np.column_stack([0.5 + 0.3 * np.cos(th), 0.5 + 0.15 * np.sin(th)]), 0.01)
    f = front_tracking_step(f, 1e-12)
    ratio = f.isoperimetric_ratio()
    dt = 0.05 * f.edges().min() ** 2
    for _ in range(50):
        f = front_tracking_step(f, dt, check=False)
        new = f.isoperimetric_ratio()
        assert new < ratio
        ratio = new


def _shapes():
    th = np.linspace(0, 2 * np.pi, 2000, endpoint=False)
    c, s = np.cos(th), np.sin(th)
    yield np.column_stack([0.25 * c, 0.25 * s])
    yield np.column_stack([0.3 * c, 0.15 * s])
    yield np.column_stack([0.2 * c, 0.3 * s])
    sq = lambda v: np.sign(v) * np.abs(v) ** 0.5
    yield 0.25 * np.column_stack([sq(c), sq(s)])
    yield np.column_stack([0.3 * c + 0.03 * np.cos(2 * th), 0.2 * s])


@pytest.mark.parametrize("k", range(5))
def test_front_area_law(k):
    v = list(_shapes())[k]
    # one negligible step resamples the dense input to the working spacing
    f = front_tracking_step(CurveFront(v + 0.5, 0.01), 1e-12)
    a0 = f.area
    steps = 400
    dt = 0.05 * f.edges().min() ** 2
    for _ in range(steps):
        f = front_tracking_step(f, dt, check=False)
    assert (f.area - a0) / (steps * dt) == pytest.approx(-2 * np.pi, rel=1e-3)


def test_front_timestep_guard():
    with pytest.raises(ValueError):
        front_tracking_step(circle_front(0.3, spacing=0.01), 1e-4)


def test_front_self_intersection_detected():
    t = np.linspace(0, 1, 21, endpoint=False)[:, None]
    a, b, c, d = map(np.array, ([0.2, 0.2], [0.8, 0.8], [0.8, 0.2], [0.2, 0.8]))
    bowtie = np.vstack([a + t * (b - a), b + t * (c - b), c + t * (d - c), d + t * (a - d)])
    f = CurveFront(bowtie, 0.03)
    with pytest.raises(TopologyChangeError):
        front_tracking_step(f, 1e-6)


def test_ks_statistic_exact():
    assert ks_statistic(np.array([0.5]), lambda x: x) == 0.5
    assert ks_statistic(np.array([0.25, 0.75]), lambda x: x) == 0.25


def test_dkw_examples():
    res = dkw_envelope_test(lambda g, n: g.random(n), 1000, 0.05, trials=1000)
    assert res.bound == pytest.approx(2 * math.exp(-5))
    assert res.passed
    assert dkw_envelope_test(lambda g, n: g.random(n), 100, 1.0, trials=100).violations == 0
    skip = dkw_envelope_test(lambda g, n: g.random(n), 10, 0.01, trials=100)
    assert skip.skipped and skip.passed is None
    with pytest.raises(ValueError):
        dkw_envelope_test(lambda g, n: g.random(n), 10, 0.5, trials=10)


def test_error_metrics_examples():
    a = np.linspace(0, 1, 50)
    assert error_metrics(a, a, [circle_polyline(0.3)], [circle_polyline(0.3)]) == (0, 0, 0)
    m = error_metrics(a + 0.3, a)
    assert m.sup == pytest.approx(0.3) and m.hausdorff is None
    m = error_metrics(a, a, [circle_polyline(0.3)], [circle_polyline(0.32)], tol=0.02)
    assert m.hausdorff == pytest.approx(0.02, abs=0.005 ** 2)


def test_hausdorff_empty():
    with pytest.raises(NotApplicableError):
        hausdorff([], [circle_polyline(0.3)], 0.01)
