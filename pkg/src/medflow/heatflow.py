"""Graph heat flow, nonlocal energies and transport distances on point clouds.

With ``N`` points, connection radius ``r`` and ``w_d`` the unit-ball volume,
the discrete Dirichlet energy is

    E(u) = 1 / (2 N**2 r**(d+2) w_d) * sum_x sum_{|y - x| <= r} (u(x) - u(y))**2

and ``d_N(u, v)**2 = mean((u - v)**2)``. One implicit Euler step of size
``tau`` is the minimizer of ``E(u) + d_N(u, u_n)**2 / (2 tau)``, i.e. the
solution of ``(I + tau L) u = u_n`` with

    L = 2 / (N r**(d+2) w_d) * (D - W),

``W`` the ball adjacency and ``D`` its degree matrix. On smooth data
``L u`` approximates ``-k2 * Laplacian(u)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy import integrate
from scipy.optimize import linear_sum_assignment
from scipy.signal import fftconvolve
from scipy.sparse import csgraph
from scipy.sparse.linalg import LinearOperator, bicgstab, cg
from scipy.spatial import cKDTree

from .domain import Box, unit_ball_volume, volume_fractions_all
from .errors import FieldValueError, SolverFailureError, UnsupportedConfigurationError
from .kernels import Ball, RadialWeight, moments, profile

__all__ = [
    "GraphField", "EnergyReport", "TransportDistance", "graph_laplacian",
    "dirichlet_energy", "heat_step", "HeatFlow", "minimizing_movement",
    "tv_energy", "tv_energy_grid", "tl2_distance", "d_N",
]


@dataclass(frozen=True, eq=False)
class GraphField:
    """Values on a cloud with the connection radius of the random graph."""

    cloud: object
    values: NDArray
    r: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.cloud.n,):
            raise ValueError(f"expected {self.cloud.n} values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class EnergyReport:
    dirichlet: float
    tv: float
    l2_norm: float
    minimum: float
    maximum: float


@dataclass(frozen=True)
class TransportDistance:
    value: float
    plan: Optional[NDArray] = None
    bound_only: bool = False


def d_N(u, v) -> float:
    """Empirical L2 distance ``sqrt(mean((u - v)**2))``."""
    diff = np.asarray(u, float) - np.asarray(v, float)
    return float(np.sqrt(np.mean(diff * diff)))


def _prefactor(cloud, r):
    d = cloud.d
    return 1.0 / (cloud.n * r ** (d + 2) * unit_ball_volume(d))


def dirichlet_energy(f: GraphField) -> float:
    """Discrete Dirichlet energy by an exact double sum over ball neighbors."""
    per_point = f.cloud.pair_sums(f.values, f.r, 0.0, power=2)
    return float(0.5 * _prefactor(f.cloud, f.r) / f.cloud.n * np.sum(per_point))


def adjacency(cloud, r: float) -> sp.csr_matrix:
    """Symmetric 0/1 adjacency of the radius-``r`` graph, no self loops."""
    indptr, indices = cloud.neighbor_graph(r)
    data = np.ones(indices.size)
    W = sp.csr_matrix((data, indices, indptr), shape=(cloud.n, cloud.n))
    W.setdiag(0.0)
    W.eliminate_zeros()
    return W


def graph_laplacian(cloud, r: float, normalization: str = "energy") -> sp.csr_matrix:
    """Graph Laplacian whose implicit Euler step minimizes the energy.

    ``normalization="energy"`` (default) gives ``2 / (N r**(d+2) w_d) (D - W)``.
    ``normalization="degree"`` gives the random-walk Laplacian
    ``2 (d + 2) k2 / r**2 (I - D^-1 W)``, scaled to the same continuum limit;
    it is not symmetric.
    """
    W = adjacency(cloud, r)
    deg = np.asarray(W.sum(axis=1)).ravel()
    if normalization == "energy":
        L = sp.diags(deg) - W
        return (2.0 * _prefactor(cloud, r) * L).tocsr()
    if normalization == "degree":
        k2 = moments(Ball(r), cloud.d).k2
        inv = np.where(deg > 0, 1.0 / np.maximum(deg, 1), 0.0)
        P = sp.diags(inv) @ W
        L = sp.identity(cloud.n) - P
        return (2.0 * (cloud.d + 2) * k2 / r ** 2 * L).tocsr()
    raise ValueError(f"unknown normalization {normalization!r}")


class HeatFlow:
    """Cached Laplacian and implicit Euler solver for one cloud and radius."""

    def __init__(self, cloud, r: float, normalization: str = "energy",
                 rtol: float = 1e-10, maxiter: int = 10000):
        self.cloud = cloud
        self.r = float(r)
        self.normalization = normalization
        self.L = graph_laplacian(cloud, r, normalization)
        self.rtol = rtol
        self.maxiter = maxiter
        self._tau = None
        ncomp, _ = csgraph.connected_components(self.L, directed=False)
        self.components = ncomp
        if ncomp > 1:
            warnings.warn(f"radius-{r} graph has {ncomp} connected components; "
                          "flow proceeds per component", RuntimeWarning, stacklevel=2)

    def step(self, u: NDArray, tau: float) -> NDArray:
        """Solve ``(I + tau L) v = u``."""
        if not tau > 0:
            raise ValueError("time step must be positive")
        u = np.asarray(u, float)
        n = u.size
        if self._tau != tau:
            self._A = (sp.identity(n, format="csr") + tau * self.L).tocsr()
            self._diag = self._A.diagonal()
            self._tau = tau
        A, diag = self._A, self._diag
        M = LinearOperator((n, n), matvec=lambda x: x / diag, dtype=float)
        if self.normalization == "energy":
            v, info = cg(A, u, x0=u.copy(), rtol=self.rtol, atol=0.0,
                         maxiter=self.maxiter, M=M)
        else:
            v, info = bicgstab(A, u, x0=u.copy(), rtol=self.rtol, atol=0.0,
                               maxiter=self.maxiter, M=M)
        res = np.linalg.norm(A @ v - u) / max(np.linalg.norm(u), 1e-300)
        if info != 0 and res > 10 * self.rtol:
            raise SolverFailureError(f"linear solve did not converge, residual {res:.3e}",
                                     residual=res)
        return v

    def energy(self, u: NDArray) -> float:
        """Energy from the Laplacian, ``u . L u / (2 N)`` (energy normalization)."""
        u = np.asarray(u, float)
        return float(u @ (self.L @ u) / (2.0 * self.cloud.n))


def heat_step(f: GraphField, tau: float, normalization: str = "energy") -> GraphField:
    """One implicit Euler step of the graph heat flow."""
    v = HeatFlow(f.cloud, f.r, normalization).step(f.values, tau)
    return GraphField(f.cloud, v, f.r)


def minimizing_movement(g: GraphField, tau: float, T: float, times=None,
                        normalization: str = "energy", flow: HeatFlow | None = None):
    """Iterate implicit Euler steps up to time ``T``.

    Returns
    -------
    snapshots : list of (time, GraphField)
        States after ``floor(t / tau)`` steps for each requested ``t``
        (default ``[0, T]``).
    energies : ndarray
        Energy after every step, starting with the initial energy.
    monotone : bool
        Whether the energy never increased beyond solver tolerance.
    """
    flow = flow or HeatFlow(g.cloud, g.r, normalization)
    nsteps = int(math.floor(T / tau * (1 + 1e-12)))
    req = sorted({0.0, *(times if times is not None else [T])})
    want = {}
    for t in req:
        want.setdefault(int(math.floor(t / tau * (1 + 1e-12))), t)
    u = np.array(g.values)
    energies = [flow.energy(u)]
    snaps = [(want[0], g)] if 0 in want else []
    for n in range(1, nsteps + 1):
        u = flow.step(u, tau)
        energies.append(flow.energy(u))
        if n in want:
            snaps.append((want[n], GraphField(g.cloud, u, g.r)))
    energies = np.asarray(energies)
    slack = 1e-8 * max(energies[0], 1e-300)
    monotone = bool(np.all(np.diff(energies) <= slack))
    if not monotone:
        warnings.warn("energy increased during minimizing movement", RuntimeWarning,
                      stacklevel=2)
    return snaps, energies, monotone


def _check_unit_interval(u):
    if np.any(u < 0) or np.any(u > 1):
        raise FieldValueError("TV energy needs values in [0, 1]")


def tv_energy(f: GraphField, spec=None, s: float = 0.5, boundary=None) -> float:
    """Two-term nonlocal TV energy of a cloud field with values in ``[0, 1]``.

    The kernel is ``spec`` at radius ``sqrt(h)`` (default the ball of radius
    ``f.r``), normalized to unit mass. Integrals over the domain become
    cloud averages times its volume. With ``s = 1/2`` or a torus this is the
    pure interaction term; otherwise the term coupling ``u`` to the outside
    of the box, ``2 (1 - 2s) int u(x) K(D^c - x)``, is added using
    quadrature volume fractions (ball kernels only).
    """
    u = np.asarray(f.values, float)
    _check_unit_interval(u)
    cloud = f.cloud
    spec = spec if spec is not None else Ball(f.r)
    d = cloud.d
    r = spec.r
    vol = cloud.domain.volume
    if isinstance(spec, RadialWeight):
        rad, k = spec.table()
        weight = (rad, k / (_profile_mass(spec, d) * r ** d))
        pair = cloud.pair_sums(u, spec.r_outer, 0.0, power=1, weight=weight)
    else:
        dens = 1.0 / (_profile_mass(spec, d) * r ** d)
        pair = dens * cloud.pair_sums(u, spec.r_outer, spec.r_inner, power=1)
    energy = (vol / cloud.n) ** 2 * np.sum(pair) / r
    boundary = boundary if boundary is not None else cloud.domain
    if s != 0.5 and isinstance(boundary, Box):
        if not isinstance(spec, Ball):
            raise UnsupportedConfigurationError("boundary term implemented for ball kernels")
        fout = 1.0 - volume_fractions_all(cloud, r)
        energy += 2.0 * (1.0 - 2.0 * s) * (vol / cloud.n) * np.sum(u * fout) / r
    return float(energy)


def _profile_mass(spec, d) -> float:
    """``int K(|x|) dx`` of the unit-scale profile."""
    w_d = unit_ball_volume(d)
    if isinstance(spec, RadialWeight):
        upper = spec.r_outer / spec.r
        val, _ = integrate.quad(lambda t: float(spec.profile(t)) * t ** (d - 1), 0, upper,
                                epsrel=1e-12)
        return d * w_d * val
    return w_d * (1.0 - spec.kappa ** d)


def _grid_kernel(r: float, spacing: float, d: int, spec=None) -> NDArray:
    """Unit-mass ball (or radial) kernel ``K_r`` sampled at grid offsets."""
    spec = spec if spec is not None else Ball(r)
    reach = int(math.ceil(spec.r_outer / spacing))
    ax = np.arange(-reach, reach + 1) * spacing
    mesh = np.meshgrid(*([ax] * d), indexing="ij")
    rho = np.sqrt(sum(m * m for m in mesh)) / r
    return profile(spec, rho) / (_profile_mass(spec, d) * r ** d)


def _conv(field: NDArray, kern: NDArray, periodic: bool) -> NDArray:
    """Correlation of ``field`` with a centered symmetric kernel via FFT."""
    shape = field.shape
    if periodic:
        kpad = np.zeros(shape)
        c = [k // 2 for k in kern.shape]
        idx = np.ix_(*[np.arange(-ci, ci + 1) % s for ci, s in zip(c, shape)])
        np.add.at(kpad, idx, kern)
        return np.real(np.fft.ifftn(np.fft.fftn(field) * np.fft.fftn(kpad)))
    return fftconvolve(field, kern, mode="same")


def tv_energy_grid(values: NDArray, spacing: float, r: float, s: float = 0.5,
                   mask: NDArray | None = None, periodic: bool = True, spec=None) -> float:
    """Two-term nonlocal TV energy of a cell-centered grid field.

    Parameters
    ----------
    values : ndarray
        Field in ``[0, 1]`` on a uniform grid with cell width ``spacing``.
    r : float
        Kernel radius ``sqrt(h)``.
    s : float
        Wetting parameter ``sin(alpha / 2)**2``.
    mask : ndarray of bool, optional
        Cells belonging to the domain ``D``. Required for the boundary
        term; the grid must then extend at least ``r`` beyond ``D``.
    periodic : bool
        Periodic grid (torus) without a boundary term.

    Notes
    -----
    Fields with more than two values are split by the layer-cake formula
    into indicator levels, each evaluated by FFT convolutions.
    """
    u = np.asarray(values, float)
    _check_unit_interval(u)
    d = u.ndim
    kern = _grid_kernel(r, spacing, d, spec)
    cell = spacing ** d
    inside = np.ones(u.shape, bool) if mask is None else np.asarray(mask, bool)
    u = np.where(inside, u, 0.0)
    levels = np.unique(u[inside])
    levels = levels[levels > 0]
    prev = 0.0
    total = 0.0
    outside = (~inside).astype(float)
    conv_out = _conv(outside, kern, periodic) if mask is not None and s != 0.5 else None
    for lv in levels:
        chi = ((u >= lv) & inside).astype(float)
        rest = inside.astype(float) - chi
        pair = 2.0 * np.sum(chi * _conv(rest, kern, periodic)) * cell * cell
        e = pair / r
        if conv_out is not None:
            e += 2.0 * (1.0 - 2.0 * s) * np.sum(chi * conv_out) * cell * cell / r
        total += (lv - prev) * e
        prev = lv
    return float(total)


def tl2_distance(a, b, mode: str = "exact", period: float | None = None) -> TransportDistance:
    """Transport distance between two measure-function pairs.

    Parameters
    ----------
    a, b : tuple
        ``(positions, values)`` or ``(positions, values, masses)``. Positions
        are ``(n, d)`` (1-D inputs are treated as ``d = 1``).
    mode : {"exact", "nearest"}
        ``"exact"`` solves the assignment problem on the cost
        ``|x - y|**2 + |f - g|**2`` (at most 64 points, equal uniform
        masses). ``"nearest"`` builds a greedy feasible matching and returns
        an upper bound.
    period : float, optional
        Wrap position differences on a torus of this side length.
    """
    xa, fa, ma = _unpack(a)
    xb, fb, mb = _unpack(b)
    if xa.shape[1] != xb.shape[1]:
        raise UnsupportedConfigurationError("point sets differ in dimension")
    n = xa.shape[0]
    if xb.shape[0] != n or not _uniform(ma) or not _uniform(mb):
        raise UnsupportedConfigurationError("transport needs equal counts and uniform masses")
    if ma is not None and mb is not None and not np.isclose(ma.sum(), mb.sum()):
        raise UnsupportedConfigurationError("total masses differ")
    if mode == "exact":
        if n > 64:
            raise UnsupportedConfigurationError("exact transport limited to 64 points")
        C = _cost(xa[:, None, :], xb[None, :, :], fa[:, None], fb[None, :], period)
        row, col = linear_sum_assignment(C)
        value = math.sqrt(max(C[row, col].sum() / n, 0.0))
        return TransportDistance(value, col.copy(), False)
    if mode == "nearest":
        col = _greedy_match(xa, fa, xb, fb, period)
        cost = _cost(xa, xb[col], fa, fb[col], period)
        return TransportDistance(math.sqrt(cost.sum() / n), col, True)
    raise ValueError(f"unknown mode {mode!r}")


def _unpack(a):
    x = np.asarray(a[0], float)
    if x.ndim == 1:
        x = x[:, None]
    f = np.asarray(a[1], float).ravel()
    m = np.asarray(a[2], float).ravel() if len(a) > 2 and a[2] is not None else None
    if f.size != x.shape[0] or (m is not None and m.size != x.shape[0]):
        raise UnsupportedConfigurationError("positions, values and masses differ in length")
    return x, f, m


def _uniform(m) -> bool:
    return m is None or bool(np.all(m == m[0]))


def _cost(x, y, f, g, period):
    dx = x - y
    if period is not None:
        dx = dx - period * np.round(dx / period)
    return np.sum(dx * dx, axis=-1) + (f - g) ** 2


def _greedy_match(xa, fa, xb, fb, period):
    """Match each source point, in order, to its cheapest unused target."""
    n = xa.shape[0]
    za = np.column_stack([xa, fa])
    zb = np.column_stack([xb, fb])
    if period is not None:
        tree = cKDTree(np.column_stack([np.mod(xb, period), fb]),
                       boxsize=np.r_[np.full(xb.shape[1], period), np.inf])
        za = np.column_stack([np.mod(xa, period), fa])
    else:
        tree = cKDTree(zb)
    used = np.zeros(n, bool)
    col = np.empty(n, np.int64)
    for i in range(n):
        k = 8
        while True:
            _, idx = tree.query(za[i], k=min(k, n))
            idx = np.atleast_1d(idx)
            free = idx[~used[idx]]
            if free.size:
                col[i] = free[0]
                used[free[0]] = True
                break
            if k >= n:
                raise RuntimeError("no unused target left")
            k *= 4
    return col
