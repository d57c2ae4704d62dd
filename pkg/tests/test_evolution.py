import math

import numba
import numpy as np
import pytest
from hypothesis import given, strategies as st

from medflow.domain import Box, Torus, UniformIID, sample
from medflow.errors import ConfigError, NotApplicableError
from medflow.evolution import (MBO, SSL, EvolutionConfig, Evolver, LevelSet, LevelSetField,
                               SSLWeightConfig, YoungAngle, contact_angle, run, step,
                               threshold)
from medflow.kernels import Annulus, Ball, RadialWeight


@pytest.fixture(scope="module")
def setup():
    cloud = sample(Torus(2), UniformIID(4000, seed=0), 0.08)
    cfg = EvolutionConfig(Annulus(0.08, 0.5), T=0.01)
    return cloud, cfg, Evolver(cloud, cfg)


def smooth_field(cloud, seed):
    rng = np.random.default_rng(seed)
    x = cloud.positions
    a, b, c = rng.normal(size=3)
    return a * np.sin(2 * np.pi * x[:, 0]) + b * np.cos(2 * np.pi * x[:, 1]) + c * np.sin(
        2 * np.pi * (x[:, 0] + x[:, 1]))


def test_constant_unchanged(setup):
    cloud, _, ev = setup
    out = ev.step(LevelSetField(cloud, np.full(cloud.n, 0.7)))
    assert np.all(out.values == 0.7)


def test_time_bookkeeping(setup):
    cloud, cfg, ev = setup
    f = LevelSetField(cloud, smooth_field(cloud, 0))
    for _ in range(3):
        f = ev.step(f)
    assert f.step_count == 3
    assert f.physical_time == pytest.approx(3 * ev.moments.c_A * 0.08 ** 2, rel=1e-14)


@given(st.integers(0, 10 ** 6), st.integers(-8, 8))
def test_translation_exact(setup, seed, c):
    cloud, _, ev = setup
    u = smooth_field(cloud, seed)
    a = ev.step(LevelSetField(cloud, u)).values + c
    b = ev.step(LevelSetField(cloud, u + c)).values
    np.testing.assert_array_equal(a, b)


@given(st.integers(0, 10 ** 6), st.sampled_from([0.5, 2.0, 4.0]))
def test_scaling_exact(setup, seed, a):
    cloud, _, ev = setup
    u = smooth_field(cloud, seed)
    np.testing.assert_array_equal(ev.step(LevelSetField(cloud, a * u)).values,
                                  a * ev.step(LevelSetField(cloud, u)).values)


@given(st.integers(0, 10 ** 6))
def test_comparison_and_range(setup, seed):
    cloud, _, ev = setup
    rng = np.random.default_rng(seed)
    u = smooth_field(cloud, seed)
    v = u + rng.random(cloud.n)
    su, sv = ev.step(LevelSetField(cloud, u)).values, ev.step(LevelSetField(cloud, v)).values
    assert np.all(su <= sv)
    assert su.min() >= u.min() and su.max() <= u.max()


def test_sup_norm_contraction(setup):
    cloud, _, ev = setup
    rng = np.random.default_rng(1)
    for k in range(100):
        u, v = rng.random(cloud.n), rng.random(cloud.n)
        su, sv = ev.step(LevelSetField(cloud, u)).values, ev.step(LevelSetField(cloud, v)).values
        assert np.max(np.abs(su - sv)) <= np.max(np.abs(u - v))


@pytest.mark.parametrize("q", [-0.5, 0.0, 0.3, 1.1])
def test_threshold_commutes(setup, q):
    cloud, _, ev = setup
    f = LevelSetField(cloud, smooth_field(cloud, 3))
    lhs = threshold(ev.step(f), q).values
    rhs = Evolver(cloud, ev.cfg).step(threshold(f, q)).values
    np.testing.assert_array_equal(lhs, rhs)


def test_threshold_examples(setup):
    cloud, _, _ = setup
    assert np.all(threshold(LevelSetField(cloud, np.full(cloud.n, 0.2)), 0.2).values == 1)
    v = np.arange(cloud.n, dtype=float)
    med = np.sort(v)[math.ceil(cloud.n / 2) - 1]
    t = threshold(LevelSetField(cloud, v), med).values
    assert np.count_nonzero(t == 0) == math.ceil(cloud.n / 2) - 1


def test_short_run_returns_initial(setup):
    cloud, _, ev = setup
    cfg = EvolutionConfig(Annulus(0.08, 0.5), T=0.5 * ev.time_unit)
    snaps = run(LevelSetField(cloud, smooth_field(cloud, 0)), cfg)
    assert len(snaps) == 1 and snaps[0].step_count == 0


def test_run_snapshot_steps(setup):
    cloud, _, ev = setup
    unit = ev.time_unit
    cfg = EvolutionConfig(Annulus(0.08, 0.5), T=5.5 * unit)
    snaps = run(LevelSetField(cloud, smooth_field(cloud, 0)), cfg, times=[1.5 * unit, 3 * unit, 5.5 * unit])
    assert [s.step_count for s in snaps] == [0, 1, 3, 5]
    f = LevelSetField(cloud, smooth_field(cloud, 0))
    for _ in range(5):
        f = step(f, cfg)
    np.testing.assert_array_equal(f.values, snaps[-1].values)


def test_active_set_matches_full_update():
    cloud = sample(Torus(2), UniformIID(3000, seed=2), 0.1)
    cfg = EvolutionConfig(Ball(0.1), T=1.0, mode=MBO())
    u0 = (np.linalg.norm(cloud.positions - 0.5, axis=1) < 0.3).astype(float)
    ev = Evolver(cloud, cfg)
    a = LevelSetField(cloud, u0)
    b = LevelSetField(cloud, u0)
    for _ in range(6):
        a = ev.step(a)
        b = Evolver(cloud, cfg).step(LevelSetField(cloud, b.values))
        np.testing.assert_array_equal(a.values, b.values)


def test_mbo_thresholds_first():
    cloud = sample(Torus(2), UniformIID(2000, seed=3), 0.1)
    cfg = EvolutionConfig(Ball(0.1), T=1.0, mode=MBO(q=0.4))
    u = smooth_field(cloud, 4)
    out = Evolver(cloud, cfg).step(LevelSetField(cloud, u)).values
    assert set(np.unique(out)) <= {0.0, 1.0}
    ref = Evolver(cloud, EvolutionConfig(Ball(0.1), T=1.0)).step(
        LevelSetField(cloud, (u >= 0.4).astype(float))).values
    np.testing.assert_array_equal(out, ref)


def test_empty_neighborhood_held():
    from medflow.domain import PointCloud
    cloud = PointCloud(np.array([[0.1, 0.1], [0.6, 0.6]]), Torus(2), 0.1)
    cfg = EvolutionConfig(Annulus(0.05, 0.5), T=1.0)
    out = Evolver(cloud, cfg).step(LevelSetField(cloud, np.array([1.0, 2.0])))
    np.testing.assert_array_equal(out.values, [1.0, 2.0])
    assert out.empty_count == 2


def test_config_validation():
    with pytest.raises(ConfigError):
        EvolutionConfig(Ball(0.1), T=1.0, h=0.02)
    with pytest.raises(ConfigError):
        YoungAngle(math.pi)
    cloud = sample(Torus(2), UniformIID(100, seed=0), 0.1)
    with pytest.raises(ConfigError, match="Box"):
        Evolver(cloud, EvolutionConfig(Ball(0.1), T=1.0, mode=YoungAngle(1.0)))


def test_young_s():
    assert YoungAngle(math.pi / 2).s == pytest.approx(0.5)
    assert YoungAngle(math.pi / 3).s == pytest.approx(0.25)


def test_deterministic_across_threads():
    cloud = sample(Torus(2), UniformIID(20000, seed=6), 0.05)
    cfg = EvolutionConfig(Annulus(0.05, 0.9), T=1.0)
    u = smooth_field(cloud, 7)
    outs = []
    old = numba.get_num_threads()
    try:
        for t in sorted({1, numba.config.NUMBA_NUM_THREADS}):
            numba.set_num_threads(t)
            f = LevelSetField(cloud, u)
            for _ in range(3):
                f = Evolver(cloud, cfg).step(f)
            outs.append(f.values.tobytes())
    finally:
        numba.set_num_threads(old)
    assert all(o == outs[0] for o in outs)


def test_radial_field_scaled():
    """|x - x0|**2 evolves to |x - x0|**2 + 2t under curvature flow in 2-D.

    Scaled-down version of the reference setting (N=10**6, r=0.02) so the
    test runs in seconds; probes avoid the extremum and the torus cut locus.
    """
    cloud = sample(Torus(2), UniformIID(100_000, seed=8), 0.05)
    x0 = np.array([0.5, 0.5])
    dist2 = np.sum((cloud.positions - x0) ** 2, axis=1)
    cfg = EvolutionConfig(Annulus(0.05, 0.9), T=0.01)
    final = run(LevelSetField(cloud, dist2), cfg)[-1]
    t = final.physical_time
    assert t > 0.009
    probe = (dist2 > 0.1 ** 2) & (dist2 < 0.35 ** 2)
    err = np.max(np.abs(final.values[probe] - (dist2[probe] + 2 * t)))
    assert err <= 0.05


def test_stop_near_extremum():
    cloud = sample(Torus(2), UniformIID(20000, seed=9), 0.05)
    dist = np.linalg.norm(cloud.positions - 0.5, axis=1)
    u = (dist < 0.2).astype(float)
    cfg = EvolutionConfig(Ball(0.05), T=0.1, mode=MBO(), stop_near_extremum=True)
    final = run(LevelSetField(cloud, u), cfg)[-1]
    assert final.stopped
    assert final.physical_time < 0.1


def test_ssl_labels_reset_and_spread():
    cloud = sample(Torus(2), UniformIID(3000, seed=10), 0.08)
    x = cloud.positions
    i0 = int(np.argmin(np.linalg.norm(x - [0.25, 0.5], axis=1)))
    i1 = int(np.argmin(np.linalg.norm(x - [0.75, 0.5], axis=1)))
    w = SSLWeightConfig((i0, i1), (0.0, 1.0), zeta=10, r0=0.05, R=0.2)
    cfg = EvolutionConfig(Ball(0.08), T=1.0, mode=SSL(w))
    u = np.random.default_rng(0).random(cloud.n)
    f = LevelSetField(cloud, u)
    ev = Evolver(cloud, cfg)
    for _ in range(4):
        f = ev.step(f)
        assert f.values[i0] == 0.0 and f.values[i1] == 1.0
    with pytest.raises(ConfigError):
        SSLWeightConfig((1,), (0.0, 1.0))


def test_radial_weight_uniform_equals_ball():
    cloud = sample(Torus(2), UniformIID(3000, seed=11), 0.08)
    u = smooth_field(cloud, 12)
    flat = RadialWeight(lambda rho: np.ones_like(rho), 0.08, support=1.0)
    a = Evolver(cloud, EvolutionConfig(flat, T=1.0)).step(LevelSetField(cloud, u)).values
    b = Evolver(cloud, EvolutionConfig(Ball(0.08), T=1.0)).step(LevelSetField(cloud, u)).values
    np.testing.assert_array_equal(a, b)


@pytest.fixture(scope="module")
def box_cloud():
    return sample(Box(2), UniformIID(40000, seed=13), 0.05)


def test_contact_angle_synthetic_60(box_cloud):
    x = box_cloud.positions
    u = -(x[:, 0] - 0.5) + x[:, 1] / math.tan(math.radians(60))
    f = LevelSetField(box_cloud, u)
    ang = contact_angle(f, 0.0, window=0.2, near=[0.5, 0.0])
    assert math.degrees(ang) == pytest.approx(60, abs=3)


def test_contact_angle_radial_90(box_cloud):
    x = box_cloud.positions
    u = np.sum((x - [0.5, 0.0]) ** 2, axis=1)
    ang = contact_angle(LevelSetField(box_cloud, u), 0.09, window=0.1)
    assert math.degrees(ang) == pytest.approx(90, abs=3)


def test_contact_angle_no_contact(box_cloud):
    u = np.sum((box_cloud.positions - 0.5) ** 2, axis=1)
    with pytest.raises(NotApplicableError):
        contact_angle(LevelSetField(box_cloud, u), 0.04)


@pytest.mark.parametrize("degree", [1, 2])
def test_contact_angle_degree_straight_line(box_cloud, degree):
    x = box_cloud.positions
    u = -(x[:, 0] - 0.5) + x[:, 1] / math.tan(math.radians(120))
    ang = contact_angle(LevelSetField(box_cloud, u), 0.0, window=0.2, near=[0.5, 0.0],
                        degree=degree)
    assert math.degrees(ang) == pytest.approx(120, abs=3)


@pytest.mark.parametrize("degree", [0, 3])
def test_contact_angle_bad_degree(box_cloud, degree):
    x = box_cloud.positions
    with pytest.raises(ValueError, match="degree"):
        contact_angle(LevelSetField(box_cloud, x[:, 0]), 0.5, degree=degree)


def test_young_90_stays_orthogonal():
    """A straight interface meeting the wall at a right angle is stationary.

    Single contacts scatter by about 5 degrees from sampling noise, so the
    two wall contacts are averaged and the tangent fit is linear.
    """
    r = 0.03
    cloud = sample(Box(2), UniformIID(100_000, seed=16), r)
    u = (cloud.positions[:, 0] < 0.5).astype(float)
    cfg = EvolutionConfig(Ball(r), T=0.01, mode=YoungAngle(math.pi / 2))
    final = run(LevelSetField(cloud, u), cfg)[-1]
    assert final.step_count > 0
    ang = contact_angle(final, 0.5, window=4 * r, smooth=r / 2, degree=1)
    assert math.degrees(ang) == pytest.approx(90, abs=5)


def test_young_full_wetting_spreads(box_cloud):
    """With alpha near 180 degrees the set {u >= 1/2} spreads along the wall."""
    r = 0.05
    x = box_cloud.positions
    u = (np.sum((x - [0.5, 0.0]) ** 2, axis=1) < 0.25 ** 2).astype(float)
    cfg = EvolutionConfig(Ball(r), T=0.02, mode=YoungAngle(math.radians(179)))
    final = run(LevelSetField(box_cloud, u), cfg)[-1]
    wall = x[:, 1] < r / 2
    before = np.ptp(x[wall & (u >= 0.5), 0])
    after = np.ptp(x[wall & (final.values >= 0.5), 0])
    assert after > before
