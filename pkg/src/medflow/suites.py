"""Named verification suites.

Every suite returns a list of :class:`~medflow.verify.VerificationRow` and is
deterministic for fixed arguments. Default arguments are the reference
problem sizes; the CLI and the test-suite call the same functions.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .domain import Box, PointCloud, Torus, UniformIID, sample
from .evolution import (MBO, EvolutionConfig, Evolver, LevelSet, LevelSetField,
                        YoungAngle, contact_angle)
from .heatflow import (GraphField, HeatFlow, dirichlet_energy, tl2_distance,
                       tv_energy_grid)
from .kernels import Annulus, Ball, moments
from .medians import continuous_median_mc, p_median, weighted_median
from .raster import level_curves
from .verify import (QuadraticTestField, VerificationRow, circle_front, circle_polyline,
                     dkw_envelope_test, hausdorff, levelset_F, track_front)

__all__ = [
    "consistency", "oberman", "circle_tracking", "identities", "median_oracles",
    "dkw", "dirichlet_limit", "heat_decay", "tv_limit", "young_angle", "tl2_exactness",
    "singular_probe", "front_oracle", "classification", "dumbbell_domain", "SUITES",
]

P_GRID = (-1.0, -0.5, 0.0, 0.5, 1.0)


def _rel(measured, predicted):
    return abs(measured - predicted) / abs(predicted)


def consistency(r: float = 0.025, mc_nodes: int = 2 ** 20, seed: int = 0,
                rtol: float = 0.05) -> list:
    """Normalized continuous median of ``x1**2 + x2`` at the origin vs ``2 c_A``."""
    phi = QuadraticTestField(a=[[1.0]], b=[0.0])
    rows = []
    for spec in (Ball(r), Annulus(r, 0.5)):
        est = continuous_median_mc(phi, np.zeros(2), spec, mc_nodes=mc_nodes, seed=seed)
        m = est.value / r ** 2
        pred = moments(spec, 2).c_A * phi.F
        rows.append(VerificationRow("consistency", f"{spec.label()} r={r:g}", m, pred,
                                    rtol, _rel(m, pred) <= rtol))
    return rows


def oberman(r: float = 0.1, kappa: float = 0.999, mc_nodes: int = 2 ** 20, seed: int = 0,
            expected: float = 0.48, atol: float = 0.05) -> list:
    """Thin-annulus median of ``x1**2`` probed at ``(r/10, 0)``."""
    c = np.array([r / 10.0, 0.0])
    est = continuous_median_mc(lambda x: x[:, 0] ** 2, c, Annulus(r, kappa),
                               mc_nodes=mc_nodes, seed=seed)
    m = (est.value - c[0] ** 2) / r ** 2
    return [VerificationRow("oberman", f"kappa={kappa:g}", m, expected, atol,
                            abs(m - expected) <= atol)]


def circle_tracking(N: int = 1_000_000, r: float = 0.01, kappa: float = 0.9, seed: int = 0,
                    R0: float = 0.3, R_end: float = 0.15, snapshots: int = 10,
                    res: int = 512, tol: float = 0.02, cloud: PointCloud | None = None,
                    report: Callable | None = None) -> list:
    """Shrinking disk under MBO against the exact radius ``sqrt(R0**2 - 2 t)``.

    The level curve of every snapshot is extracted on a ``res`` pixel grid
    (mean over radius ``r / 2``) and compared to the exact circle in the
    Hausdorff distance.
    """
    if cloud is None:
        cloud = sample(Torus(2), UniformIID(N, seed=seed), r)
    T = (R0 ** 2 - R_end ** 2) / 2.0
    x = cloud.positions - 0.5
    u = (np.hypot(x[:, 0], x[:, 1]) < R0).astype(float)
    cfg = EvolutionConfig(Annulus(r, kappa), T=T, mode=MBO())
    snaps = Evolver(cloud, cfg).run(LevelSetField(cloud, u),
                                    times=np.linspace(0.0, T, snapshots + 1))
    worst = 0.0
    for s in snaps:
        t = s.physical_time
        exact = math.sqrt(max(R0 ** 2 - 2.0 * t, 0.0))
        curves = level_curves(cloud, s.values, 0.5, res, method="mean", radius=r / 2)
        err = hausdorff(curves, [circle_polyline(exact, spacing=tol / 8)], tol / 4)
        worst = max(worst, err)
        if report is not None:
            report(s, exact, err)
    return [VerificationRow("tracking", f"N={cloud.n} r={r:g} kappa={kappa:g}", worst, 0.0,
                            tol, worst <= tol)]


def identities(instances: int = 100, N: int = 2000, seed: int = 0) -> list:
    """Exact order properties of one median step on random clouds and fields.

    Checks comparison, relabeling ``G(u + c) = G u + c``, sup-norm
    contraction, threshold commutation and range shrinkage.
    """
    rng = np.random.default_rng(seed)
    fails = dict.fromkeys(["comparison", "relabeling", "contraction", "threshold",
                           "range"], 0)
    for _ in range(instances):
        cloud = sample(Torus(2), UniformIID(N, seed=int(rng.integers(2 ** 31))), 0.1)
        r = float(rng.uniform(0.04, 0.1))
        spec = Ball(r) if rng.random() < 0.5 else Annulus(r, float(rng.uniform(0.2, 0.9)))
        ev = Evolver(cloud, EvolutionConfig(spec, T=1.0, mode=LevelSet()))
        G = lambda v: ev.step(LevelSetField(cloud, v)).values
        u = rng.standard_normal(N)
        v = u + rng.random(N)
        c = float(rng.integers(-8, 9)) * 0.25
        q = float(rng.choice(u))
        Gu, Gv = G(u), G(v)
        fails["comparison"] += not np.all(Gu <= Gv)
        fails["relabeling"] += not np.array_equal(G(u + c), Gu + c)
        w = rng.standard_normal(N)
        fails["contraction"] += not np.max(np.abs(Gu - G(w))) <= np.max(np.abs(u - w))
        Tq = lambda a: (a >= q).astype(float)
        fails["threshold"] += not np.array_equal(Tq(Gu), G(Tq(u)))
        fails["range"] += not (u.min() <= Gu.min() and Gu.max() <= u.max())
    return [VerificationRow("identities", k, float(n), 0.0, 0.0, n == 0)
            for k, n in fails.items()]


def _scan_p_median(v, p):
    n = v.size
    for m in np.sort(v):
        if 2 * np.count_nonzero(v <= m) - n >= p * n:
            return m
    return np.max(v)


def _scan_weighted(v, w, p):
    W = w.sum()
    for m in np.sort(v):
        if 2 * w[v <= m].sum() - W >= p * W:
            return m
    return np.max(v)


def median_oracles(instances: int = 1000, seed: int = 0) -> list:
    """``p_median`` and ``weighted_median`` against brute-force scans.

    Values carry heavy ties half of the time. Weights are small integers so
    both sides sum them exactly.
    """
    rng = np.random.default_rng(seed)
    bad_p = bad_w = 0
    for i in range(instances):
        n = int(rng.integers(1, 258))
        if i % 2:
            v = rng.integers(0, 6, n).astype(float)
        else:
            v = rng.standard_normal(n)
        p = float(rng.choice(P_GRID))
        w = rng.integers(1, 21, n).astype(float)
        bad_p += p_median(v, p) != _scan_p_median(v, p)
        bad_w += weighted_median(v, w, p) != _scan_weighted(v, w, p)
    return [VerificationRow("medians", "p_median", float(bad_p), 0.0, 0.0, bad_p == 0),
            VerificationRow("medians", "weighted_median", float(bad_w), 0.0, 0.0, bad_w == 0)]


def dkw(N: int = 1000, eps: float = 0.05, trials: int = 2000, seed: int = 0) -> list:
    """Empirical sup-deviation rate of the uniform empirical CDF."""
    res = dkw_envelope_test(lambda g, n: g.random(n), N, eps, trials=trials, seed=seed)
    return [VerificationRow("dkw", f"N={N} eps={eps:g}", res.rate, res.bound,
                            3.0 * res.sigma, bool(res.passed))]


def dirichlet_limit(pairs=((100_000, 0.05), (400_000, 0.035)), seed: int = 0,
                    rtol: float = 0.10, report: Callable | None = None) -> list:
    """Graph Dirichlet energy of ``sin(2 pi x1)`` against ``k2 pi**2``.

    Passes when every error is within ``rtol`` and the errors strictly
    decrease along ``pairs``.
    """
    target = moments(Ball(1.0), 2).k2 * math.pi ** 2
    rows, errs = [], []
    for N, r in pairs:
        cloud = sample(Torus(2), UniformIID(N, seed=seed), r)
        e = dirichlet_energy(GraphField(cloud, np.sin(2 * np.pi * cloud.positions[:, 0]), r))
        err = _rel(e, target)
        errs.append(err)
        if report is not None:
            report(N, r, e, target)
        rows.append(VerificationRow("dirichlet", f"N={N} r={r:g}", e, target, rtol,
                                    err <= rtol))
    mono = all(b < a for a, b in zip(errs, errs[1:]))
    rows.append(VerificationRow("dirichlet", "monotone", errs[-1], errs[0], 0.0, mono))
    return rows


def heat_decay(N: int = 100_000, r: float = 0.05, T: float = 0.004,
               taus=(4e-4, 2e-4, 1e-4), seed: int = 0, rtol: float = 0.05) -> list:
    """Decay rate of the ``cos(2 pi x1)`` mode under implicit Euler.

    The rate ``-log(A_T / A_0) / T`` of the projected amplitude is first
    order in ``tau``; Richardson extrapolation of the two finest steps is
    compared to ``k2 (2 pi)**2``.
    """
    cloud = sample(Torus(2), UniformIID(N, seed=seed), r)
    e = np.cos(2 * np.pi * cloud.positions[:, 0])
    flow = HeatFlow(cloud, r)
    rates = []
    for tau in taus:
        u = e.copy()
        for _ in range(int(round(T / tau))):
            u = flow.step(u, tau)
        rates.append(-math.log((u @ e) / (e @ e)) / T)
    ratio = taus[-2] / taus[-1]
    rich = (ratio * rates[-1] - rates[-2]) / (ratio - 1.0)
    target = moments(Ball(1.0), 2).k2 * (2 * math.pi) ** 2
    return [VerificationRow("heat", f"N={N} r={r:g} tau={t:g}", rt, target, rtol,
                            _rel(rt, target) <= rtol) for t, rt in zip(taus, rates)] + [
        VerificationRow("heat", "richardson", rich, target, rtol, _rel(rich, target) <= rtol)]


def tv_limit(radii=(0.2, 0.1, 0.05), rtol: float = 0.10) -> list:
    """Grid TV energy of the half-torus indicator against ``2 k1``.

    The grid spacing equals ``h = r**2``.
    """
    target = 2.0 * moments(Ball(1.0), 2).k1
    rows, errs = [], []
    for r in radii:
        M = int(round(1.0 / r ** 2))
        x = (np.arange(M) + 0.5) / M
        chi = np.broadcast_to((x < 0.5)[:, None], (M, M)).astype(float)
        e = tv_energy_grid(chi, 1.0 / M, r)
        errs.append(_rel(e, target))
        rows.append(VerificationRow("tv", f"r={r:g}", e, target, rtol, errs[-1] <= rtol))
    mono = all(b < a for a, b in zip(errs, errs[1:]))
    rows[-1] = VerificationRow("tv", rows[-1].parameter, rows[-1].measured, target, rtol,
                               rows[-1].passed and mono)
    rows.append(VerificationRow("tv", "monotone", errs[-1], errs[0], 0.0, mono))
    return rows


def young_angle(angles_deg=(60.0, 90.0, 120.0), N: int = 400_000, r: float = 0.03,
                seed: int = 0, T: float = 0.1, atol_deg: float = 7.0,
                report: Callable | None = None) -> list:
    """Contact angle reached by the half box ``{x2 < 1/2}`` under the Young scheme.

    The angle is measured inside ``{u < 1/2}`` and averaged over the two
    wall contacts.
    """
    cloud = sample(Box(2), UniformIID(N, seed=seed), r)
    u = (cloud.positions[:, 1] < 0.5).astype(float)
    rows = []
    for a in angles_deg:
        cfg = EvolutionConfig(Ball(r), T=T, mode=YoungAngle(math.radians(a)))
        final = Evolver(cloud, cfg).run(LevelSetField(cloud, u))[-1]
        ang = math.degrees(contact_angle(final, 0.5, window=4 * r, smooth=r / 2))
        if report is not None:
            report(a, ang, final)
        rows.append(VerificationRow("young", f"alpha={a:g}", ang, a, atol_deg,
                                    abs(ang - a) <= atol_deg))
    return rows


def _brute_tl2(a, b):
    (x, f), (y, g) = a, b
    C = np.sum((x[:, None] - y[None]) ** 2, axis=2) + (f[:, None] - g[None]) ** 2
    n = len(f)
    perms = np.array(list(itertools.permutations(range(n))))
    best = perms[np.argmin(C[np.arange(n), perms].sum(axis=1))]
    return math.sqrt(C[np.arange(n), best].sum() / n)


def tl2_exactness(instances: int = 50, triples: int = 100, seed: int = 0) -> list:
    """Assignment-based TL2 against permutation brute force, and the triangle inequality."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(instances):
        a = (rng.random((8, 2)), rng.random(8))
        b = (rng.random((8, 2)), rng.random(8))
        bad += not math.isclose(tl2_distance(a, b).value, _brute_tl2(a, b),
                                rel_tol=0.0, abs_tol=0.0)
    viol = 0
    for _ in range(triples):
        a, b, c = [(rng.random((16, 2)), rng.random(16)) for _ in range(3)]
        ab, bc, ac = (tl2_distance(*pair).value for pair in ((a, b), (b, c), (a, c)))
        viol += ac > ab + bc
    return [VerificationRow("tl2", "brute force 8 points", float(bad), 0.0, 0.0, bad == 0),
            VerificationRow("tl2", "triangle 16 points", float(viol), 0.0, 0.0, viol == 0)]


def singular_probe(radii=(0.1, 0.05, 0.025), mc_nodes: int = 2 ** 20, seed: int = 0,
                   field: str = "x1^2") -> list:
    """Normalized medians at the zero-gradient point of a quadratic field.

    ``field="x1^2"`` probes ``u = x1**2``, whose admissible curvature set is
    the interval ``[0, 2]``; ``field="|x|^2"`` probes ``u = |x|**2`` where it
    is the single value 2. The ball row passes when its normalized median
    stays outside ``c_A`` times that set at every radius (expected failure
    of consistency); the annulus row passes when it stays inside.
    """
    if field == "x1^2":
        phi = lambda x: x[:, 0] ** 2
        hess = np.diag([2.0, 0.0])
    elif field == "|x|^2":
        phi = lambda x: np.sum(x * x, axis=1)
        hess = np.diag([2.0, 2.0])
    else:
        raise ValueError(f"unknown probe field {field!r}")
    F = levelset_F(np.zeros(2), hess)
    rows = []
    for spec_of, want_inside in ((Ball, False), (lambda r: Annulus(r, 0.5), True)):
        vals = []
        for r in radii:
            spec = spec_of(r)
            est = continuous_median_mc(phi, np.zeros(2), spec, mc_nodes=mc_nodes, seed=seed)
            vals.append((est.value / r ** 2, est.halfwidth / r ** 2))
        cA = moments(spec_of(1.0), 2).c_A
        lo, hi = cA * F.lo, cA * F.hi
        inside = [lo - hw <= m <= hi + hw for m, hw in vals]
        ok = all(inside) if want_inside else not any(inside)
        rows.append(VerificationRow("singular", f"{spec_of(1.0).label()} {field}", vals[-1][0],
                                    0.5 * (lo + hi), 0.5 * (hi - lo), ok))
    return rows


def front_oracle(R0: float = 0.3, spacing: float = 0.012, dt: float = 1e-5,
                 R_end: float = 0.15, rtol: float = 1e-3) -> list:
    """Polygon curve shortening of a circle against ``sqrt(R0**2 - 2 t)``."""
    T = (R0 ** 2 - R_end ** 2) / 2.0
    snaps = track_front(circle_front(R0, spacing=spacing), dt, T, times=np.linspace(0, T, 6))
    worst = 0.0
    for t, fr in snaps:
        R = math.sqrt(fr.area / math.pi)
        worst = max(worst, _rel(R, math.sqrt(R0 ** 2 - 2 * t)))
    return [VerificationRow("front", f"R0={R0:g} dt={dt:g}", worst, 0.0, rtol, worst <= rtol)]


DUMBBELL_CENTERS = (0.17, 0.5, 0.83)
DUMBBELL_RADIUS = 0.13
DUMBBELL_NECK = 0.04


def dumbbell_domain() -> Box:
    """Three disks in a row joined by thin necks, inside the unit box."""
    def sdf(x):
        x = np.atleast_2d(x)
        disks = [np.hypot(x[:, 0] - c, x[:, 1] - 0.5) - DUMBBELL_RADIUS
                 for c in DUMBBELL_CENTERS]
        bar = np.maximum(np.abs(x[:, 0] - 0.5) - 0.33, np.abs(x[:, 1] - 0.5) - DUMBBELL_NECK)
        return np.minimum(np.min(disks, axis=0), bar)
    return Box(2, sdf=sdf)


def dumbbell_initial(cloud, split: float = 0.4, noise: float = 0.2, seed: int = 0) -> NDArray:
    """Indicator of ``{x1 < split}`` with a fraction ``noise`` of labels flipped."""
    rng = np.random.default_rng(seed)
    u = (cloud.positions[:, 0] < split).astype(float)
    flip = rng.random(cloud.n) < noise
    u[flip] = 1.0 - u[flip]
    return u


def classification(N: int = 40_000, r: float = 0.03, kappa: float = 0.5, T: float = 0.03,
                   seed: int = 0, final: LevelSetField | None = None,
                   evolver: Evolver | None = None) -> list:
    """Noisy two-label data on the three-cluster dumbbell under MBO.

    Passes when every cluster core carries a single label, the two labels
    both survive and the final state is a fixed point of the scheme.
    """
    if final is None:
        cloud = sample(dumbbell_domain(), UniformIID(N, seed=seed), r)
        cfg = EvolutionConfig(Annulus(r, kappa), T=T, mode=MBO())
        evolver = Evolver(cloud, cfg)
        final = evolver.run(LevelSetField(cloud, dumbbell_initial(cloud, seed=seed)))[-1]
    cloud = final.cloud
    x = cloud.positions
    u = final.values
    means = [u[np.hypot(x[:, 0] - c, x[:, 1] - 0.5) < DUMBBELL_RADIUS - r].mean()
             for c in DUMBBELL_CENTERS]
    pure = all(m in (0.0, 1.0) for m in means) and 0.0 in means and 1.0 in means
    fixed = np.array_equal(evolver.step(final).values, u)
    return [VerificationRow("classify", "cluster purity", float(np.mean(
                [min(m, 1 - m) for m in means])), 0.0, 0.0, pure),
            VerificationRow("classify", "fixed point", float(not fixed), 0.0, 0.0, fixed)]


SUITES = {
    "consistency": consistency,
    "oberman": oberman,
    "tracking": circle_tracking,
    "identities": identities,
    "medians": median_oracles,
    "dkw": dkw,
    "dirichlet": dirichlet_limit,
    "heat": heat_decay,
    "tv": tv_limit,
    "young": young_angle,
    "tl2": tl2_exactness,
    "singular": singular_probe,
    "front": front_oracle,
    "classify": classification,
}
