"""Selection primitives: median, p-median, weighted median and a Monte Carlo
estimate of the continuous median over a stencil.

All discrete medians return the infimum of the solution set of

    p <= sum_i w_i sign(m - v_i) / sum_i w_i,

which for uniform weights is the ``k``-th order statistic with
``k = ceil(n (1 + p) / 2)`` clamped to ``[1, n]``. For ``p = 0`` and even
``n`` this is the lower median. ``p = -1`` and ``p = 1`` give the minimum and
maximum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _accel
from .errors import DegenerateWeightsError, EmptyNeighborhoodError, FieldValueError
from .kernels import stencil_nodes

__all__ = [
    "discrete_median", "p_median", "weighted_median", "rank", "kselect",
    "continuous_median_mc", "MCMedian", "dkw_epsilon",
]


def _values(values: ArrayLike) -> NDArray:
    v = np.ascontiguousarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptyNeighborhoodError("median of an empty neighborhood")
    return v


def _check_p(p: float) -> float:
    p = float(p)
    if not -1.0 <= p <= 1.0:
        raise FieldValueError(f"p must lie in [-1, 1], got {p}")
    return p


def rank(n: int, p: float = 0.0) -> int:
    """1-based order-statistic rank of the p-median of ``n`` values."""
    return int(_accel.rank_from_p(int(n), _check_p(p)))


def kselect(values: ArrayLike, k: int) -> float:
    """``k``-th smallest value, 1-based, in expected linear time."""
    v = _values(values)
    if not 1 <= k <= v.size:
        raise IndexError(f"rank {k} out of range for {v.size} values")
    return float(_accel.select_kth(v, k - 1))


def discrete_median(values: ArrayLike) -> float:
    """Lower median: the ``ceil(n / 2)``-th order statistic.

    Raises
    ------
    EmptyNeighborhoodError
        If ``values`` is empty.
    """
    return p_median(values, 0.0)


def p_median(values: ArrayLike, p: float = 0.0) -> float:
    """Infimum ``m`` with ``p <= mean(sign(m - values))``.

    Parameters
    ----------
    values : array_like
        Nonempty sample.
    p : float
        Rank shift in ``[-1, 1]``.

    Returns
    -------
    float
    """
    v = _values(values)
    k = _accel.rank_from_p(v.size, _check_p(p))
    return float(_accel.select_kth(v, k - 1))


def weighted_median(values: ArrayLike, weights: ArrayLike, p: float = 0.0) -> float:
    """Infimum ``m`` with ``p <= sum(w sign(m - v)) / sum(w)``.

    Values are sorted and cumulative weights scanned until the inequality
    holds in the right limit at a sample value.

    Raises
    ------
    DegenerateWeightsError
        If weights are negative, mismatched in length, or sum to zero.
    """
    v = _values(values)
    w = np.ascontiguousarray(weights, dtype=float).ravel()
    if w.shape != v.shape:
        raise DegenerateWeightsError("weights and values differ in length")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DegenerateWeightsError("weights must be finite and nonnegative")
    if not w.sum() > 0:
        raise DegenerateWeightsError("weights sum to zero")
    order = np.argsort(v, kind="stable")
    return float(_accel.weighted_pmedian_sorted(v[order], w[order], _check_p(p)))


def dkw_epsilon(n: int, level: float = 0.05) -> float:
    """Half-width ``eps`` with ``2 exp(-2 n eps^2) = level``."""
    return float(np.sqrt(np.log(2.0 / level) / (2.0 * n)))


@dataclass(frozen=True)
class MCMedian:
    """Monte Carlo median estimate.

    Attributes
    ----------
    value : float
        Empirical median of the field over the stencil nodes.
    halfwidth : float
        Largest distance from ``value`` to the empirical quantiles at
        ``1/2 -+ eps``, with ``eps`` the DKW envelope at level 0.05.
    eps : float
        DKW half-width in probability.
    n : int
        Number of nodes.
    """

    value: float
    halfwidth: float
    eps: float
    n: int


def continuous_median_mc(phi: Callable[[NDArray], NDArray], center: ArrayLike, spec,
                         mc_nodes: int = 2 ** 20, seed: int = 0, p: float = 0.0,
                         method: str = "sobol") -> MCMedian:
    """Estimate the median of ``phi`` over the stencil ``A_r(center)``.

    Parameters
    ----------
    phi : callable
        Vectorized field, ``(n, d)`` points to ``(n,)`` values.
    center : array_like
        Stencil center; its length sets the dimension.
    spec : kernel spec
        Stencil shape and radius. Radial weights are sampled with density
        proportional to the weight.
    mc_nodes : int
        Number of nodes, at least ``10**4``.
    seed : int
        Scrambling or sampling seed.
    p : float
        Rank shift, default plain median.
    method : {"sobol", "iid"}
        Scrambled Sobol nodes (default, ``mc_nodes`` must be a power of two)
        or independent uniform samples.
    """
    if mc_nodes < 10 ** 4:
        raise ValueError("need at least 10**4 Monte Carlo nodes")
    center = np.asarray(center, float).ravel()
    d = center.size
    x = center + spec.r * stencil_nodes(spec, d, mc_nodes, seed=seed, method=method)
    vals = np.ascontiguousarray(phi(x), dtype=float).ravel()
    n = vals.size
    k = _accel.rank_from_p(n, _check_p(p))
    m = float(_accel.select_kth(vals, k - 1))
    eps = dkw_epsilon(n)
    q = (1.0 + p) / 2.0
    lo = int(np.clip(np.ceil(n * (q - eps)), 1, n))
    hi = int(np.clip(np.ceil(n * (q + eps)), 1, n))
    part = np.partition(vals, [lo - 1, hi - 1])
    half = max(m - part[lo - 1], part[hi - 1] - m)
    return MCMedian(m, float(half), eps, n)
