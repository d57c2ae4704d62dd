"""Simulation domains, point sampling and fixed-radius neighbor queries.

Two domain kinds are supported: the unit flat torus ``[0, 1)^d`` with
periodic distances, and an axis-aligned box whose (possibly curved) boundary
is described by a signed distance function. Point clouds carry a uniform
bucket grid; neighbor queries scan the ``3^d`` cells around the query point,
which is exact as long as the query radius does not exceed the cell size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray
from scipy.special import gamma
from scipy.stats import norm, qmc

from . import _accel
from .errors import IndexMisconfigurationError, InvalidDomainError

__all__ = [
    "Torus", "Box", "UniformIID", "Poisson", "PointCloud", "sample",
    "neighbors", "volume_fractions", "unit_ball_volume", "box_sdf",
]

_QMC_LOG2 = 12
_VOLUME_LOG2 = 16


def unit_ball_volume(d: int) -> float:
    """Lebesgue measure of the unit ball in ``R^d``."""
    return float(np.pi ** (d / 2) / gamma(d / 2 + 1))


def box_sdf(lo, hi) -> Callable[[NDArray], NDArray]:
    """Exact signed distance to the box ``[lo, hi]``."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)

    def sdf(x):
        x = np.atleast_2d(x)
        q = np.maximum(lo - x, x - hi)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside

    return sdf


@dataclass(frozen=True)
class Torus:
    """Unit flat torus ``[0, 1)^d``."""

    d: int = 2

    periodic = True

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise InvalidDomainError(f"dimension must be an integer >= 2, got {self.d}")

    @property
    def lo(self) -> NDArray:
        return np.zeros(self.d)

    @property
    def hi(self) -> NDArray:
        return np.ones(self.d)

    @property
    def volume(self) -> float:
        return 1.0

    def contains(self, x) -> NDArray:
        x = np.atleast_2d(x)
        return np.all((x >= 0.0) & (x < 1.0), axis=1)

    def displacement(self, x, y) -> NDArray:
        """Minimal-image vector ``y - x``."""
        v = np.asarray(y, float) - np.asarray(x, float)
        return v - np.round(v)

    def distance(self, x, y) -> NDArray:
        return np.linalg.norm(self.displacement(x, y), axis=-1)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with an optional signed distance function.

    Parameters
    ----------
    d : int
        Dimension.
    bounds : tuple of array_like
        ``(lo, hi)`` corners of the bounding box. Defaults to the unit cube.
    sdf : callable, optional
        Signed distance, negative inside. Maps ``(n, d)`` arrays to ``(n,)``.
        Defaults to the exact distance to the bounding box itself.
    """

    d: int = 2
    bounds: Optional[tuple] = None
    sdf: Optional[Callable[[NDArray], NDArray]] = None
    _volume: float = field(default=0.0, init=False, repr=False, compare=False)

    periodic = False

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise InvalidDomainError(f"dimension must be an integer >= 2, got {self.d}")
        if self.bounds is None:
            object.__setattr__(self, "bounds", (np.zeros(self.d), np.ones(self.d)))
        lo, hi = (np.asarray(b, float).reshape(self.d) for b in self.bounds)
        if np.any(hi <= lo):
            raise InvalidDomainError("box bounds must satisfy lo < hi on every axis")
        object.__setattr__(self, "bounds", (lo, hi))
        if self.sdf is None:
            object.__setattr__(self, "sdf", box_sdf(lo, hi))
        nodes = qmc.Sobol(self.d, scramble=True, seed=0).random_base2(_VOLUME_LOG2)
        frac = np.mean(self.sdf(lo + nodes * (hi - lo)) < 0)
        if frac == 0:
            raise InvalidDomainError("domain has zero volume inside its bounding box")
        object.__setattr__(self, "_volume", float(frac * np.prod(hi - lo)))

    @property
    def lo(self) -> NDArray:
        return self.bounds[0]

    @property
    def hi(self) -> NDArray:
        return self.bounds[1]

    @property
    def volume(self) -> float:
        """Volume of the region ``sdf < 0`` (quasi-Monte Carlo estimate)."""
        return self._volume

    def contains(self, x) -> NDArray:
        x = np.atleast_2d(x)
        inbox = np.all((x >= self.lo) & (x < self.hi), axis=1)
        return inbox & (self.sdf(x) < 0)

    def displacement(self, x, y) -> NDArray:
        return np.asarray(y, float) - np.asarray(x, float)

    def distance(self, x, y) -> NDArray:
        return np.linalg.norm(self.displacement(x, y), axis=-1)


@dataclass(frozen=True)
class UniformIID:
    """Exactly ``n`` independent uniform points."""

    n: int
    seed: int = 0


@dataclass(frozen=True)
class Poisson:
    """Poisson process with the given intensity per unit volume."""

    intensity: float
    seed: int = 0


class _GridIndex:
    """Uniform bucket grid. Points are stored sorted by linear cell id."""

    def __init__(self, positions: NDArray, domain, cell_size: float):
        d = positions.shape[1]
        extent = domain.hi - domain.lo
        m = np.maximum(np.floor(extent / cell_size + 1e-12), 1).astype(np.int64)
        self.m = m
        self.lo = domain.lo.astype(float)
        self.cell = extent / m
        self.strides = np.ones(d, np.int64)
        for k in range(d - 2, -1, -1):
            self.strides[k] = self.strides[k + 1] * m[k + 1]
        ncell = int(np.prod(m))
        coords = np.floor((positions - self.lo) / self.cell).astype(np.int64)
        coords = np.clip(coords, 0, m - 1)
        lin = coords @ self.strides
        order = np.argsort(lin, kind="stable")
        self.order = order.astype(np.int32)
        self.pos_sorted = np.ascontiguousarray(positions[order])
        self.cell_start = np.zeros(ncell + 1, np.int64)
        np.add.at(self.cell_start, lin + 1, 1)
        np.cumsum(self.cell_start, out=self.cell_start)
        axes = []
        for k in range(d):
            if not domain.periodic or m[k] >= 3:
                axes.append([-1, 0, 1])
            elif m[k] == 2:
                axes.append([0, 1])
            else:
                axes.append([0])
        mesh = np.meshgrid(*axes, indexing="ij")
        self.offsets = np.stack([g.ravel() for g in mesh], axis=1).astype(np.int64)
        self.periodic = bool(domain.periodic)
        for a in (self.order, self.pos_sorted, self.cell_start, self.offsets):
            a.setflags(write=False)

    @property
    def cell_size(self) -> float:
        return float(self.cell.min())

    def args(self):
        return (self.pos_sorted, self.order, self.cell_start, self.lo, self.cell,
                self.m, self.strides, self.offsets, self.periodic)


class PointCloud:
    """Sampled positions on a domain with an immutable bucket-grid index.

    Parameters
    ----------
    positions : (n, d) array_like
        Point coordinates.
    domain : Torus or Box
        Domain the points live in.
    cell_size : float
        Minimum bucket width; every later query radius must not exceed the
        realised cell size (which can be larger).
    seed : int, optional
        Seed recorded for serialization.
    """

    def __init__(self, positions, domain, cell_size: float, seed: Optional[int] = None):
        pos = np.array(positions, dtype=float, order="C", ndmin=2)
        if pos.shape[1] != domain.d:
            raise InvalidDomainError(
                f"positions have dimension {pos.shape[1]}, domain has {domain.d}")
        if cell_size <= 0:
            raise IndexMisconfigurationError("cell size must be positive")
        pos.setflags(write=False)
        self.positions = pos
        self.domain = domain
        self.seed = seed
        self._index = _GridIndex(pos, domain, cell_size)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @property
    def cell_size(self) -> float:
        return self._index.cell_size

    def _check_radii(self, r_outer, r_inner):
        if not 0 <= r_inner <= r_outer:
            raise IndexMisconfigurationError(
                f"need 0 <= r_inner <= r_outer, got {r_inner}, {r_outer}")
        if r_outer > self.cell_size * (1 + 1e-12):
            raise IndexMisconfigurationError(
                f"query radius {r_outer} exceeds index cell size {self.cell_size}")

    def neighbors(self, center, r_outer: float, r_inner: float = 0.0) -> NDArray:
        """Indices with ``r_inner < dist <= r_outer``, ascending.

        ``r_inner == 0`` selects the closed ball, center included.
        """
        self._check_radii(r_outer, r_inner)
        q = np.asarray(center, float).reshape(1, self.d)
        if self.domain.periodic:
            q = q % 1.0
        if r_inner == r_outer and r_inner > 0:
            return np.empty(0, np.int64)
        indptr, indices = self._csr(q, r_outer, r_inner)
        return indices.astype(np.int64)

    def neighbor_graph(self, r_outer: float, r_inner: float = 0.0):
        """CSR rows ``(indptr, indices)`` of every point's shell neighborhood.

        Rows are sorted ascending. The point itself is included in ball
        neighborhoods (``r_inner == 0``).
        """
        self._check_radii(r_outer, r_inner)
        if r_inner == r_outer and r_inner > 0:
            return np.zeros(self.n + 1, np.int64), np.empty(0, np.int32)
        # query in cell order for locality, rows land in original order
        idx = self._index
        return self._csr(idx.pos_sorted, r_outer, r_inner, idx.order)

    def _csr(self, q, r_outer, r_inner, rowmap=None):
        closed = r_inner == 0
        args = self._index.args() + (float(r_inner) ** 2, float(r_outer) ** 2, closed)
        counts = _accel.count_shell(q, *args)
        if rowmap is None:
            rowmap = np.arange(q.shape[0], dtype=np.int32)
        else:
            counts[rowmap] = counts.copy()
        indptr = np.zeros(q.shape[0] + 1, np.int64)
        np.cumsum(counts, out=indptr[1:])
        indices = np.empty(int(indptr[-1]), np.int32)
        _accel.fill_shell(q, *args, rowmap, indptr, indices)
        return indptr, indices

    def pair_sums(self, values, r_outer, r_inner=0.0, power=2, weight=None):
        """Per-point sums ``sum_y w(|x - y|) |u(x) - u(y)|**power``.

        ``weight`` is an optional pair ``(radii, weights)`` tabulating a
        radial weight; without it every pair in the shell has weight one.
        """
        self._check_radii(r_outer, r_inner)
        values = np.ascontiguousarray(values, dtype=float)
        if weight is None:
            tr = tk = np.empty(0)
        else:
            tr, tk = (np.ascontiguousarray(a, dtype=float) for a in weight)
        args = self._index.args() + (float(r_inner) ** 2, float(r_outer) ** 2,
                                     r_inner == 0)
        return _accel.pair_sums(values, *args, int(power), tr, tk)


def sample(domain, cfg, cell_size: float) -> PointCloud:
    """Draw a point cloud on ``domain``.

    Parameters
    ----------
    domain : Torus or Box
    cfg : UniformIID or Poisson
    cell_size : float
        Index cell size, normally the largest query radius of the run.

    Returns
    -------
    PointCloud
    """
    vol = domain.volume
    if not vol > 0:
        raise InvalidDomainError("domain has zero volume")
    rng = np.random.default_rng(cfg.seed)
    if isinstance(cfg, UniformIID):
        if cfg.n < 1:
            raise InvalidDomainError("need at least one point")
        n = int(cfg.n)
    elif isinstance(cfg, Poisson):
        if not cfg.intensity > 0:
            raise InvalidDomainError("Poisson intensity must be positive")
        n = int(rng.poisson(cfg.intensity * vol))
    else:
        raise TypeError(f"unknown sampler config {cfg!r}")
    if isinstance(domain, Torus):
        pts = rng.random((n, domain.d))
    else:
        pts = _rejection(domain, n, rng)
    return PointCloud(pts, domain, cell_size, seed=cfg.seed)


def _rejection(domain: Box, n: int, rng) -> NDArray:
    lo, hi = domain.lo, domain.hi
    ratio = domain.volume / float(np.prod(hi - lo))
    out = []
    have = 0
    while have < n:
        batch = int(1.1 * (n - have) / ratio) + 16
        x = lo + rng.random((batch, domain.d)) * (hi - lo)
        x = x[domain.contains(x)]
        out.append(x)
        have += len(x)
    return np.concatenate(out)[:n] if out else np.empty((0, domain.d))


def neighbors(cloud: PointCloud, center, r_outer: float, r_inner: float = 0.0) -> NDArray:
    """Module-level alias for :meth:`PointCloud.neighbors`."""
    return cloud.neighbors(center, r_outer, r_inner)


_BALL_NODES: dict = {}


def ball_nodes(d: int) -> NDArray:
    """Deterministic ``2**12`` quasi-uniform nodes in the unit ball."""
    if d not in _BALL_NODES:
        u = qmc.Sobol(d + 1, scramble=True, seed=12345).random_base2(_QMC_LOG2)
        g = norm.ppf(u[:, :d])
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        nodes = g * u[:, d:] ** (1.0 / d)
        nodes.setflags(write=False)
        _BALL_NODES[d] = nodes
    return _BALL_NODES[d]


def volume_fractions(cloud_or_domain, center, r: float, method: str = "quadrature"):
    """Fractions of ``B_r(center)`` inside and outside a box domain.

    Parameters
    ----------
    cloud_or_domain : PointCloud or Box
    center : array_like
    r : float
    method : {"quadrature", "cloud"}
        ``"quadrature"`` integrates over ``2**12`` fixed quasi-Monte Carlo
        nodes, so the two fractions are dyadic and sum to one exactly.
        ``"cloud"`` counts sampled points instead, which only estimates the
        inside fraction relative to the expected count.

    Returns
    -------
    frac_in, frac_out : float
    """
    domain = getattr(cloud_or_domain, "domain", cloud_or_domain)
    if not isinstance(domain, Box):
        raise InvalidDomainError("volume fractions need a Box domain")
    center = np.asarray(center, float).reshape(domain.d)
    if domain.sdf(center[None])[0] < -r:
        return 1.0, 0.0
    if method == "cloud":
        cloud = cloud_or_domain
        expected = cloud.n / domain.volume * unit_ball_volume(domain.d) * r ** domain.d
        got = len(cloud.neighbors(center, r))
        fin = min(got / expected, 1.0)
        return fin, 1.0 - fin
    nodes = center + r * ball_nodes(domain.d)
    n = nodes.shape[0]
    inside = int(np.count_nonzero(domain.sdf(nodes) < 0))
    return inside / n, (n - inside) / n


def volume_fractions_all(cloud: PointCloud, r: float) -> NDArray:
    """Inside fractions for every point of a box cloud (quadrature)."""
    domain = cloud.domain
    out = np.ones(cloud.n)
    near = np.nonzero(domain.sdf(cloud.positions) >= -r)[0]
    nodes = r * ball_nodes(domain.d)
    for i in near:
        out[i] = np.count_nonzero(domain.sdf(cloud.positions[i] + nodes) < 0) / nodes.shape[0]
    return out
