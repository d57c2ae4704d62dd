"""Time stepping by local median filters.

One step replaces every value by the (p-)median of the previous values over
the stencil around the point (a Jacobi update), and advances physical
curvature-flow time by ``c_A h`` with ``h = r**2``. Modes:

``LevelSet``
    Plain median of all level sets simultaneously.
``MBO``
    Threshold at ``q`` first; the field stays binary and only points next to
    a point that changed in the previous step are recomputed.
``YoungAngle``
    Rank-shifted median near the boundary of a box domain, encoding a
    prescribed contact angle.
``SSL``
    Weighted median with weights boosted near labeled points, labels reset
    after every step.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from . import _accel
from .domain import Box, volume_fractions_all
from .errors import ConfigError, NotApplicableError
from .kernels import Ball, RadialWeight, moments, profile
from .raster import level_curves, sample_grid

__all__ = [
    "LevelSet", "MBO", "YoungAngle", "SSLWeightConfig", "SSL", "EvolutionConfig",
    "LevelSetField", "Evolver", "step", "run", "threshold", "contact_angle",
    "ssl_gamma",
]


@dataclass(frozen=True)
class LevelSet:
    name = "levelset"


@dataclass(frozen=True)
class MBO:
    q: float = 0.5
    name = "mbo"


@dataclass(frozen=True)
class YoungAngle:
    """Contact angle ``alpha`` in radians, measured inside ``{u < q}``."""

    alpha: float
    name = "youngangle"

    def __post_init__(self):
        if not 0.0 < self.alpha < math.pi:
            raise ConfigError(f"contact angle must lie in (0, pi), got {self.alpha}",
                              key="alpha")

    @property
    def s(self) -> float:
        return math.sin(self.alpha / 2.0) ** 2


@dataclass(frozen=True)
class SSLWeightConfig:
    """Label set and the near-label weight ``min(zeta, 1 + (r0 / dist)**exponent)``.

    The weight applies within distance ``R`` of the labels and is one
    elsewhere. ``hard_reset`` restores labeled values after every step.
    """

    label_index: tuple
    label_value: tuple
    zeta: float = 10.0
    r0: float = 0.05
    R: float = 0.2
    exponent: float = 1.0
    hard_reset: bool = True

    def __post_init__(self):
        if len(self.label_index) != len(self.label_value) or not self.label_index:
            raise ConfigError("labels need matching, nonempty index and value lists",
                              key="labels")
        if not self.zeta > 1:
            raise ConfigError("zeta must exceed 1", key="zeta")
        if not 0 < self.r0 < self.R:
            raise ConfigError("need 0 < r0 < R", key="r0")


@dataclass(frozen=True)
class SSL:
    weights: SSLWeightConfig
    name = "ssl"


@dataclass(frozen=True)
class EvolutionConfig:
    """Scheme parameters.

    Parameters
    ----------
    kernel : kernel spec
        Stencil; its radius ``r`` fixes ``h = r**2``.
    T : float
        Final physical time.
    mode : LevelSet, MBO, YoungAngle or SSL
    h : float, optional
        Must equal ``r**2`` if given.
    boundary : domain, optional
        Defaults to the cloud's domain.
    stop_near_extremum : bool
        Ball kernels only: stop once the tracked ``level`` comes within
        ``2 r`` of the field extremum it encloses.
    level : float
        Level tracked by the stopping rule.
    """

    kernel: object
    T: float
    mode: object = LevelSet()
    h: Optional[float] = None
    boundary: object = None
    stop_near_extremum: bool = False
    level: float = 0.5

    def __post_init__(self):
        r2 = float(self.kernel.r) ** 2
        if self.h is None:
            object.__setattr__(self, "h", r2)
        elif abs(self.h - r2) > 1e-12 * r2:
            raise ConfigError(f"h={self.h} must equal r**2={r2}", key="h")
        if not self.T > 0:
            raise ConfigError("final time T must be positive", key="T")


@dataclass(frozen=True, eq=False)
class LevelSetField:
    """Values on a point cloud together with step bookkeeping.

    ``physical_time`` is ``step_count * time_unit`` where ``time_unit`` is
    ``c_A h`` once the field has passed through an evolver.
    """

    cloud: object
    values: NDArray
    step_count: int = 0
    time_unit: float = 0.0
    empty_count: int = 0
    stopped: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.cloud.n,):
            raise ValueError(f"expected {self.cloud.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def physical_time(self) -> float:
        return self.step_count * self.time_unit


def ssl_gamma(cloud, cfg: SSLWeightConfig) -> NDArray:
    """Per-point weight ``gamma_zeta`` from the distance to the labels."""
    idx = np.asarray(cfg.label_index, int)
    pts = cloud.positions[idx]
    if cloud.domain.periodic:
        tree = cKDTree(pts, boxsize=1.0)
    else:
        tree = cKDTree(pts)
    dist, _ = tree.query(cloud.positions)
    with np.errstate(divide="ignore"):
        g = np.minimum(cfg.zeta, 1.0 + (cfg.r0 / dist) ** cfg.exponent)
    return np.where(dist <= cfg.R, g, 1.0)


def _is_binary(u: NDArray) -> bool:
    return bool(np.all((u == 0.0) | (u == 1.0)))


class Evolver:
    """Precomputed stencil graph and per-point data for one cloud and config."""

    def __init__(self, cloud, cfg: EvolutionConfig):
        self.cloud = cloud
        self.cfg = cfg
        spec = cfg.kernel
        d = cloud.d
        boundary = cfg.boundary if cfg.boundary is not None else cloud.domain
        mode = cfg.mode
        if isinstance(mode, YoungAngle) and not isinstance(boundary, Box):
            raise ConfigError("YoungAngle requires Box", key="mode")
        self.moments = moments(spec, d)
        self.time_unit = self.moments.c_A * cfg.h
        self.indptr, self.indices = cloud.neighbor_graph(spec.r_outer, spec.r_inner)
        n = cloud.n
        self.pvals = np.zeros(n)
        if isinstance(mode, YoungAngle):
            fin = volume_fractions_all(cloud, spec.r_outer)
            fout = 1.0 - fin
            c = 1.0 - 2.0 * mode.s
            with np.errstate(divide="ignore", invalid="ignore"):
                p = np.where(fin > 0, -c * fout / fin, -np.sign(c))
            self.pvals = np.clip(p, -1.0, 1.0)
        self.weighted = isinstance(mode, SSL) or isinstance(spec, RadialWeight)
        if self.weighted:
            if isinstance(spec, RadialWeight):
                rows = np.repeat(np.arange(n), np.diff(self.indptr))
                diff = cloud.positions[self.indices] - cloud.positions[rows]
                if cloud.domain.periodic:
                    diff -= np.round(diff)
                dist = np.linalg.norm(diff, axis=1)
                self.edge_weight = profile(spec, dist / spec.r)
            else:
                self.edge_weight = np.ones(self.indices.size)
            if isinstance(mode, SSL):
                if mode.weights.exponent <= d - 2:
                    raise ConfigError("SSL exponent must exceed d - 2", key="exponent")
                self.node_weight = ssl_gamma(cloud, mode.weights)
            else:
                self.node_weight = np.ones(n)
        self._last_out = None
        self._last_changed = None

    def _active(self, u: NDArray) -> NDArray:
        if self._last_out is not None and u is self._last_out:
            changed = np.nonzero(self._last_changed)[0]
            mask = _accel.mark_rows(self.indptr, self.indices, changed, u.size)
            return np.nonzero(mask)[0]
        return np.arange(u.size)

    def step(self, fld: LevelSetField) -> LevelSetField:
        """Advance one scheme step."""
        if fld.cloud is not self.cloud:
            raise ValueError("field lives on a different cloud")
        mode = self.cfg.mode
        u = fld.values
        if isinstance(mode, MBO) and not (_is_binary(u) and 0.0 < mode.q <= 1.0):
            u = (u >= mode.q).astype(float)
        out = np.array(u)
        empty = np.zeros(u.size, np.uint8)
        if self.weighted:
            active = np.arange(u.size)
            _accel.weighted_update(u, self.indptr, self.indices, self.edge_weight,
                                   self.node_weight, self.pvals, active, out, empty)
        elif _is_binary(u):
            active = self._active(u)
            _accel.binary_update(u, self.indptr, self.indices, self.pvals, active,
                                 out, empty)
        else:
            active = np.arange(u.size)
            _accel.median_update(u, self.indptr, self.indices, self.pvals, active,
                                 out, empty)
        if isinstance(mode, SSL) and mode.weights.hard_reset:
            out[np.asarray(mode.weights.label_index, int)] = mode.weights.label_value
        new = LevelSetField(self.cloud, out, fld.step_count + 1, self.time_unit,
                            fld.empty_count + int(empty.sum()))
        self._last_out = new.values
        self._last_changed = new.values != u
        return new

    def near_extremum(self, fld: LevelSetField) -> bool:
        """True once the tracked level is within ``2 r`` of an enclosed extremum."""
        u = fld.values
        q = self.cfg.level
        pos = self.cloud.positions
        r = self.cfg.kernel.r
        for idx, other in ((np.argmin(u), u >= q), (np.argmax(u), u < q)):
            if not other.any() or other[idx]:
                continue
            disp = pos[other] - pos[idx]
            if self.cloud.domain.periodic:
                disp -= np.round(disp)
            if np.min(np.einsum("ij,ij->i", disp, disp)) < (2 * r) ** 2:
                return True
        return False

    def run(self, g: LevelSetField, times=None,
            callback: Optional[Callable[[LevelSetField], None]] = None) -> list:
        """Iterate and return snapshots at the requested physical times.

        A snapshot at time ``t`` is the state after ``floor(t / (c_A h))``
        steps (piecewise constant in time). The initial field is always the
        first entry; snapshots at identical step counts are merged.
        """
        T = self.cfg.T
        unit = self.time_unit
        nsteps = lambda t: int(math.floor(t / unit * (1.0 + 1e-12)))
        req = sorted({0.0, *(times if times is not None else [T])})
        req = [t for t in req if t <= T]
        targets = sorted({nsteps(t) for t in req})
        jmax = nsteps(T)
        cur = replace(g, time_unit=unit) if g.time_unit != unit else g
        snaps = [cur] if targets[0] == 0 else []
        stop_rule = self.cfg.stop_near_extremum and isinstance(self.cfg.kernel, Ball)
        want = set(targets)
        if callback is not None:
            callback(cur)
        for _ in range(cur.step_count, jmax):
            cur = self.step(cur)
            if callback is not None:
                callback(cur)
            if stop_rule and self.near_extremum(cur):
                cur = replace(cur, stopped=True)
                snaps.append(cur)
                break
            if cur.step_count in want:
                snaps.append(cur)
        return snaps


_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _evolver(cloud, cfg) -> Evolver:
    per_cloud = _CACHE.setdefault(cloud, {})
    key = id(cfg)
    ev = per_cloud.get(key)
    if ev is None or ev.cfg is not cfg:
        ev = Evolver(cloud, cfg)
        per_cloud.clear()
        per_cloud[key] = ev
    return ev


def step(fld: LevelSetField, cfg: EvolutionConfig) -> LevelSetField:
    """One Jacobi median-filter step (stencil graph cached per cloud)."""
    return _evolver(fld.cloud, cfg).step(fld)


def run(g: LevelSetField, cfg: EvolutionConfig, times=None, callback=None) -> list:
    """Evolve to ``cfg.T``; see :meth:`Evolver.run`."""
    return _evolver(g.cloud, cfg).run(g, times, callback)


def threshold(fld: LevelSetField, q: float) -> LevelSetField:
    """Indicator of ``{u >= q}`` with the same bookkeeping."""
    return replace(fld, values=(fld.values >= q).astype(float))


def _sdf_grad(sdf, x, eps):
    d = x.size
    g = np.empty(d)
    for k in range(d):
        e = np.zeros(d)
        e[k] = eps
        g[k] = (sdf((x + e)[None])[0] - sdf((x - e)[None])[0]) / (2 * eps)
    return g / np.linalg.norm(g)


def contact_angle(fld: LevelSetField, q: float, boundary=None, window: float | None = None,
                  res: int = 256, smooth: float | None = None, values=None,
                  near=None, return_all: bool = False, degree: int = 2):
    """Angle between the ``q`` level curve and the boundary, inside ``{u < q}``.

    The level curve is extracted on a pixel grid. Near each point where it
    meets the boundary, its tangential offset along the wall is fitted as a
    polynomial of the given ``degree`` (1 or 2) in the depth into the domain,
    using curve points within ``window`` of the wall (default 0.1). The slope
    at the wall gives the interface direction; the returned angle (radians)
    is measured from the wall direction pointing into ``{u < q}``.

    With ``near`` given, only the contact closest to that point is used;
    otherwise all contacts are averaged. ``return_all=True`` returns the
    list of ``(contact_point, angle)`` pairs instead.

    Raises
    ------
    NotApplicableError
        If the level curve does not reach the boundary.
    """
    cloud = fld.cloud
    boundary = boundary if boundary is not None else cloud.domain
    if not isinstance(boundary, Box) or cloud.d != 2:
        raise NotApplicableError("contact angles need a 2-D Box domain")
    u = fld.values if values is None else np.asarray(values, float)
    if degree not in (1, 2):
        raise ValueError("degree must be 1 or 2")
    if window is None:
        window = 0.1
    method = "linear" if smooth is None else "mean"
    curves = level_curves(cloud, u, q, res, method=method, radius=smooth)
    grid = sample_grid(cloud, u, res, method=method, radius=smooth)
    pix = (boundary.hi[0] - boundary.lo[0]) / res
    sdf = boundary.sdf
    angles = []
    for c in curves:
        depth = -sdf(c)
        for end in (0, -1):
            if depth[end] > 2.0 * pix:
                continue
            seq = c if end == 0 else c[::-1]
            dseq = depth if end == 0 else depth[::-1]
            stop = np.argmax(dseq > window) if np.any(dseq > window) else len(seq)
            pts = seq[:stop]
            dep = dseq[:stop]
            if len(pts) < 5 or dep.max() < 0.5 * window:
                continue
            x0 = pts[0]
            nrm = _sdf_grad(sdf, x0, 1e-6)
            tan = np.array([-nrm[1], nrm[0]])
            tau = (pts - x0) @ tan
            A = np.vander(dep, degree + 1, increasing=True)
            coef, *_ = np.linalg.lstsq(A, tau, rcond=None)
            slope = coef[1]
            wall_pt = x0 + coef[0] * tan
            direction = slope * tan - nrm
            direction /= np.linalg.norm(direction)
            probe = max(3.0 * pix, 0.25 * window)
            side = _grid_value(grid, boundary, wall_pt + probe * tan - 1.5 * pix * nrm)
            t_sub = tan if side < q else -tan
            angles.append((wall_pt, float(np.arccos(np.clip(direction @ t_sub, -1.0, 1.0)))))
    if not angles:
        raise NotApplicableError("level set does not meet the boundary")
    if return_all:
        return angles
    if near is not None:
        near = np.asarray(near, float)
        return min(angles, key=lambda a: np.linalg.norm(a[0] - near))[1]
    return float(np.mean([a[1] for a in angles]))


def _grid_value(grid, domain, x):
    res = grid.shape[0]
    lo, hi = domain.lo, domain.hi
    j = int(np.clip((x[0] - lo[0]) / (hi[0] - lo[0]) * res, 0, res - 1))
    i = int(np.clip((x[1] - lo[1]) / (hi[1] - lo[1]) * res, 0, res - 1))
    return grid[i, j]
