"""Oracles and checks: the level-set curvature operator, consistency
measurements, a front-tracking curve-shortening oracle, the DKW envelope
test and error metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .errors import NotApplicableError, TopologyChangeError
from .kernels import moments
from .medians import continuous_median_mc

__all__ = [
    "Interval", "levelset_F", "QuadraticTestField", "ConsistencyRow",
    "measure_consistency", "consistency_trend", "CurveFront", "circle_front",
    "front_tracking_step", "track_front", "DKWResult", "dkw_envelope_test",
    "ks_statistic", "ErrorMetrics", "error_metrics", "densify", "hausdorff",
    "circle_polyline", "VerificationRow",
]


class Interval(NamedTuple):
    lo: float
    hi: float


def levelset_F(grad, hess, atol: float = 0.0):
    """Level-set curvature operator ``tr(H) - n.H.n`` with ``n = grad/|grad|``.

    Returns a float for nonzero gradient. For zero gradient (``|grad| <=
    atol``) the operator is set-valued and an :class:`Interval`
    ``[tr(H) - lambda_max, tr(H) - lambda_min]`` is returned.
    """
    g = np.asarray(grad, float).ravel()
    H = np.asarray(hess, float)
    H = 0.5 * (H + H.T)
    lap = float(np.trace(H))
    norm = float(np.linalg.norm(g))
    if norm > atol:
        n = g / norm
        return lap - float(n @ H @ n)
    lam = np.linalg.eigvalsh(H)
    return Interval(lap - float(lam[-1]), lap - float(lam[0]))


@dataclass(frozen=True)
class QuadraticTestField:
    """``a_ij x_i x_j + x_d + b_i x_i x_d + b_d x_d**2`` (sums over ``i < d``)."""

    a: NDArray
    b: NDArray
    b_d: float = 0.0

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, float))
        if a.shape[0] != a.shape[1] or not np.allclose(a, a.T):
            raise ValueError("a must be a symmetric square matrix")
        b = np.asarray(self.b, float).ravel()
        if b.size != a.shape[0]:
            raise ValueError("b must have d - 1 entries")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return self.a.shape[0] + 1

    def __call__(self, x) -> NDArray:
        x = np.atleast_2d(np.asarray(x, float))
        xt = x[:, :-1]
        xd = x[:, -1]
        return (np.einsum("ni,ij,nj->n", xt, self.a, xt) + xd
                + (xt @ self.b) * xd + self.b_d * xd ** 2)

    @property
    def F(self) -> float:
        """Exact curvature operator at the origin, ``2 tr(a)``."""
        return 2.0 * float(np.trace(self.a))

    def gradient(self, x) -> NDArray:
        x = np.asarray(x, float).ravel()
        xt, xd = x[:-1], x[-1]
        g = np.empty(self.d)
        g[:-1] = 2 * self.a @ xt + self.b * xd
        g[-1] = 1.0 + self.b @ xt + 2 * self.b_d * xd
        return g

    def hessian(self) -> NDArray:
        H = np.zeros((self.d, self.d))
        H[:-1, :-1] = 2 * self.a
        H[:-1, -1] = H[-1, :-1] = self.b
        H[-1, -1] = 2 * self.b_d
        return H


@dataclass(frozen=True)
class ConsistencyRow:
    r: float
    measured: float
    predicted: float
    envelope: float

    @property
    def error(self) -> float:
        return self.measured - self.predicted


def measure_consistency(phi: Callable, spec, radii: Sequence[float], mc_nodes: int = 2 ** 20,
                        seed: int = 0, center=None, F: float | None = None) -> list:
    """Normalized stencil median ``(med(phi) - phi(center)) / r**2`` per radius.

    Parameters
    ----------
    phi : callable
        Field; a :class:`QuadraticTestField` supplies its own ``F``.
    spec : kernel spec
        Template; its radius is replaced by each entry of ``radii``.
    radii : sequence of float
    mc_nodes, seed : int
        Passed to :func:`continuous_median_mc`.
    center : array_like, optional
        Probe point, default the origin. May depend on ``r`` if callable.
    F : float, optional
        Curvature operator value for the prediction ``c_A F``.

    Returns
    -------
    list of ConsistencyRow
        ``envelope`` is the DKW half-width divided by ``r**2``.
    """
    if F is None:
        F = phi.F
    rows = []
    for r in radii:
        s = replace(spec, r=r)
        d = phi.d if hasattr(phi, "d") else None
        c = center(r) if callable(center) else center
        if c is None:
            c = np.zeros(d)
        c = np.asarray(c, float)
        est = continuous_median_mc(phi, c, s, mc_nodes=mc_nodes, seed=seed)
        base = float(phi(c[None])[0])
        pred = moments(s, c.size).c_A * F
        rows.append(ConsistencyRow(r, (est.value - base) / r ** 2, pred,
                                   est.halfwidth / r ** 2))
    return rows


def consistency_trend(rows: Sequence[ConsistencyRow]) -> tuple[float, bool]:
    """Fit ``|error| = C r`` on the two coarsest radii and test the finest.

    Returns ``(C, ok)`` where ``ok`` means the finest radius error lies
    within ``C r`` plus twice its envelope.
    """
    rows = sorted(rows, key=lambda t: -t.r)
    if len(rows) < 3:
        raise ValueError("need at least three radii")
    C = max(abs(rows[0].error) / rows[0].r, abs(rows[1].error) / rows[1].r)
    fine = rows[-1]
    return C, abs(fine.error) <= C * fine.r + 2.0 * fine.envelope


# ---------------------------------------------------------------------------
# front tracking
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CurveFront:
    """Polygon moved by curve shortening flow.

    ``period`` (optional 2-vector) turns the polygon into an open curve on
    the torus whose last vertex connects to ``vertices[0] + period``.
    Closed fronts are kept counterclockwise.
    """

    vertices: NDArray
    spacing: float
    period: Optional[NDArray] = None

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("a front needs at least three 2-D vertices")
        if self.period is None and _signed_area(v) < 0:
            v = v[::-1].copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        if self.period is not None:
            object.__setattr__(self, "period", np.asarray(self.period, float))

    def _prev_next(self):
        v = self.vertices
        prev = np.roll(v, 1, axis=0)
        nxt = np.roll(v, -1, axis=0)
        if self.period is not None:
            prev[0] = v[-1] - self.period
            nxt[-1] = v[0] + self.period
        return prev, nxt

    def edges(self) -> NDArray:
        _, nxt = self._prev_next()
        return np.linalg.norm(nxt - self.vertices, axis=1)

    @property
    def length(self) -> float:
        return float(self.edges().sum())

    @property
    def area(self) -> float:
        if self.period is not None:
            raise NotApplicableError("area of an open front")
        return abs(_signed_area(self.vertices))

    def isoperimetric_ratio(self) -> float:
        return self.length ** 2 / (4 * math.pi * self.area)

    def curvature(self) -> tuple[NDArray, NDArray]:
        """Circumcircle curvature and circumcenters (``inf`` when collinear)."""
        prev, nxt = self._prev_next()
        return _circumcircles(prev, self.vertices, nxt)


def _signed_area(v) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _circumcircles(a, b, c):
    """Curvature ``1/R`` at ``b`` (zero if collinear) and circumcenters."""
    ab = a - b
    cb = c - b
    cross = ab[:, 0] * cb[:, 1] - ab[:, 1] * cb[:, 0]
    na = np.einsum("ij,ij->i", ab, ab)
    nc = np.einsum("ij,ij->i", cb, cb)
    denom = 2.0 * cross
    with np.errstate(divide="ignore", invalid="ignore"):
        ux = (cb[:, 1] * na - ab[:, 1] * nc) / denom
        uy = (ab[:, 0] * nc - cb[:, 0] * na) / denom
    center = b + np.column_stack([ux, uy])
    rad = np.hypot(ux, uy)
    flat = np.abs(cross) <= 1e-14 * np.sqrt(na * nc)
    kappa = np.where(flat, 0.0, 1.0 / np.where(flat, 1.0, rad))
    return kappa, np.where(flat[:, None], b, center)


def circle_front(R: float, center=(0.5, 0.5), spacing: float = 0.01) -> CurveFront:
    n = max(8, int(round(2 * math.pi * R / spacing)))
    th = 2 * math.pi * np.arange(n) / n
    v = np.column_stack([center[0] + R * np.cos(th), center[1] + R * np.sin(th)])
    return CurveFront(v, spacing)


def _resample(front: CurveFront) -> NDArray:
    v = front.vertices
    _, nxt = front._prev_next()
    seg = np.linalg.norm(nxt - v, axis=1)
    L = seg.sum()
    s = np.r_[0.0, np.cumsum(seg)]
    pts = np.vstack([v, nxt[-1:]])
    trend = np.zeros(2) if front.period is None else front.period
    base = pts - np.outer(s / L, trend)
    base[-1] = base[0]
    spline = CubicSpline(s, base, bc_type="periodic")
    n = max(8, int(round(L / front.spacing)))
    t = L * np.arange(n) / n
    return spline(t) + np.outer(t / L, trend)


def _segments_intersect(front: CurveFront) -> bool:
    v = front.vertices
    _, nxt = front._prev_next()
    p, q = v, nxt
    n = len(v)
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    if i.size == 0:
        return False

    def orient(a, b, c):
        return np.sign((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                       - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    o1 = orient(p[i], q[i], p[j])
    o2 = orient(p[i], q[i], q[j])
    o3 = orient(p[j], q[j], p[i])
    o4 = orient(p[j], q[j], q[i])
    return bool(np.any((o1 * o2 < 0) & (o3 * o4 < 0)))


def front_tracking_step(front: CurveFront, dt: float, check: bool = True) -> CurveFront:
    """Explicit curve-shortening step followed by uniform resampling.

    Each vertex moves toward the circumcenter of itself and its two
    neighbors with speed equal to the circumcircle curvature.

    Raises
    ------
    ValueError
        If ``dt`` exceeds ``0.1 * min_edge**2``.
    TopologyChangeError
        If the moved polygon self-intersects.
    """
    h = front.edges().min()
    if dt > 0.1 * h * h * (1 + 1e-9):
        raise ValueError(f"time step {dt} exceeds 0.1 * min_edge**2 = {0.1 * h * h}")
    kappa, center = front.curvature()
    v = front.vertices
    move = (center - v) * (kappa ** 2)[:, None]
    moved = CurveFront(v + dt * move, front.spacing, front.period)
    if moved.period is None and _signed_area(moved.vertices) <= 0:
        raise TopologyChangeError("front collapsed")
    if check and _segments_intersect(moved):
        raise TopologyChangeError("front self-intersects")
    return CurveFront(_resample(moved), front.spacing, front.period)


def track_front(front: CurveFront, dt: float, T: float, times=None,
                check_every: int = 1) -> list:
    """Iterate :func:`front_tracking_step`; snapshots after ``floor(t/dt)`` steps."""
    req = sorted({0.0, *(times if times is not None else [T])})
    want = {int(math.floor(t / dt * (1 + 1e-12))): t for t in req}
    out = [(0.0, front)] if 0 in want else []
    nsteps = int(math.floor(T / dt * (1 + 1e-12)))
    for n in range(1, nsteps + 1):
        front = front_tracking_step(front, dt, check=(n % check_every == 0))
        if n in want:
            out.append((n * dt, front))
    return out


# ---------------------------------------------------------------------------
# DKW envelope
# ---------------------------------------------------------------------------

def ks_statistic(sample: NDArray, cdf: Callable[[NDArray], NDArray]) -> float:
    """Exact ``sup |F_N - F|`` for a continuous ``F``."""
    x = np.sort(np.asarray(sample, float))
    n = x.size
    F = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


@dataclass(frozen=True)
class DKWResult:
    rate: float
    bound: float
    sigma: float
    passed: Optional[bool]
    skipped: bool
    violations: int
    trials: int


def dkw_envelope_test(sampler: Callable, N: int, eps: float, trials: int = 2000,
                      cdf: Callable | None = None, seed: int = 0) -> DKWResult:
    """Empirical rate of ``sup |F_N - F| > eps`` against ``2 exp(-2 N eps**2)``.

    Parameters
    ----------
    sampler : callable
        ``sampler(rng, N)`` returns ``N`` draws.
    N, eps, trials :
        Sample size, deviation and number of independent trials (>= 100).
    cdf : callable
        Exact CDF of the sampled law (default uniform on ``[0, 1]``).
    seed : int
        Root of the per-trial seed streams.

    Returns
    -------
    DKWResult
        ``passed`` is ``rate <= bound + 3 sigma`` with the binomial
        ``sigma = sqrt(bound (1 - bound) / trials)``; vacuous bounds
        (``>= 1``) are skipped with ``passed = None``.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    cdf = cdf if cdf is not None else (lambda x: np.clip(x, 0.0, 1.0))
    bound = 2.0 * math.exp(-2.0 * N * eps * eps)
    if bound >= 1.0:
        return DKWResult(float("nan"), bound, float("nan"), None, True, 0, trials)
    streams = np.random.SeedSequence(seed).spawn(trials)
    viol = 0
    for ss in streams:
        x = sampler(np.random.default_rng(ss), N)
        if ks_statistic(x, cdf) > eps:
            viol += 1
    rate = viol / trials
    sigma = math.sqrt(bound * (1.0 - bound) / trials)
    return DKWResult(rate, bound, sigma, rate <= bound + 3.0 * sigma, False, viol, trials)


# ---------------------------------------------------------------------------
# error metrics
# ---------------------------------------------------------------------------

class ErrorMetrics(NamedTuple):
    sup: float
    l2: float
    hausdorff: Optional[float]


def densify(poly: NDArray, spacing: float, closed: bool = False) -> NDArray:
    """Insert points so consecutive vertices are at most ``spacing`` apart."""
    p = np.asarray(poly, float)
    if closed:
        p = np.vstack([p, p[:1]])
    out = [p[:1]]
    for a, b in zip(p[:-1], p[1:]):
        k = max(1, int(math.ceil(np.linalg.norm(b - a) / spacing)))
        t = np.arange(1, k + 1)[:, None] / k
        out.append(a + t * (b - a))
    return np.vstack(out)


def circle_polyline(R: float, center=(0.5, 0.5), spacing: float = 1e-3) -> NDArray:
    n = max(16, int(math.ceil(2 * math.pi * R / spacing)))
    th = 2 * math.pi * np.arange(n) / n
    return np.column_stack([center[0] + R * np.cos(th), center[1] + R * np.sin(th)])


def hausdorff(A: Sequence[NDArray], B: Sequence[NDArray], spacing: float) -> float:
    """Symmetric Hausdorff distance between two sets of polylines."""
    if not A or not B:
        raise NotApplicableError("empty level set")
    pa = np.vstack([densify(a, spacing) for a in A])
    pb = np.vstack([densify(b, spacing) for b in B])
    da, _ = cKDTree(pb).query(pa)
    db, _ = cKDTree(pa).query(pb)
    return float(max(da.max(), db.max()))


def error_metrics(a, b, curves_a=None, curves_b=None, tol: float = 0.02) -> ErrorMetrics:
    """Sup and root-mean-square errors, plus Hausdorff distance of level curves.

    Curves are densified to spacing ``tol / 4`` before the nearest-point
    comparison.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    diff = np.abs(a - b)
    sup = float(diff.max()) if diff.size else 0.0
    l2 = float(np.sqrt(np.mean(diff ** 2))) if diff.size else 0.0
    haus = None
    if curves_a is not None or curves_b is not None:
        haus = hausdorff(list(curves_a or []), list(curves_b or []), tol / 4.0)
    return ErrorMetrics(sup, l2, haus)


@dataclass(frozen=True)
class VerificationRow:
    test: str
    parameter: str
    measured: float
    predicted: float
    tolerance: float
    passed: bool

    def __post_init__(self):
        for name in ("measured", "predicted", "tolerance"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "passed", bool(self.passed))
