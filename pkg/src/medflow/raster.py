"""Pixel images of point-cloud fields and level-curve extraction."""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import LinearNDInterpolator
from scipy.spatial import cKDTree
from skimage import measure

__all__ = ["pixel_centers", "sample_grid", "rasterize", "level_overlay", "level_curves"]


def pixel_centers(domain, res: int) -> tuple[NDArray, NDArray]:
    """Pixel-center coordinates of a ``res x res`` grid over a 2-D domain.

    Returns ``(xs, ys)``; image row ``i`` has ``y = ys[i]`` and column ``j``
    has ``x = xs[j]``.
    """
    lo, hi = domain.lo, domain.hi
    xs = lo[0] + (np.arange(res) + 0.5) * (hi[0] - lo[0]) / res
    ys = lo[1] + (np.arange(res) + 0.5) * (hi[1] - lo[1]) / res
    return xs, ys


def _tree(cloud):
    if cloud.domain.periodic:
        return cKDTree(cloud.positions, boxsize=1.0)
    return cKDTree(cloud.positions)


def sample_grid(cloud, values, res: int, method: str = "nearest",
                radius: float | None = None) -> NDArray:
    """Resample a 2-D cloud field onto a pixel grid.

    ``method="nearest"`` copies the value of the closest cloud point.
    ``method="mean"`` averages over cloud points within ``radius`` of the
    pixel center, falling back to the nearest point when none is found.
    ``method="linear"`` interpolates piecewise linearly on the Delaunay
    triangulation (non-periodic), falling back to the nearest point outside
    the convex hull.
    """
    if cloud.d != 2:
        raise ValueError("rasterization needs a 2-D cloud")
    values = np.asarray(values, float)
    xs, ys = pixel_centers(cloud.domain, res)
    gx, gy = np.meshgrid(xs, ys)
    q = np.column_stack([gx.ravel(), gy.ravel()])
    tree = _tree(cloud)
    _, nn = tree.query(q)
    out = values[nn]
    if method == "mean":
        if radius is None or radius <= 0:
            raise ValueError("mean resampling needs a positive radius")
        groups = tree.query_ball_point(q, radius)
        for i, g in enumerate(groups):
            if g:
                out[i] = values[g].mean()
    elif method == "linear":
        lin = LinearNDInterpolator(cloud.positions, values)(q)
        out = np.where(np.isnan(lin), out, lin)
    elif method != "nearest":
        raise ValueError(f"unknown method {method!r}")
    return out.reshape(res, res)


def rasterize(cloud, values, res: int, vmin: float | None = None,
              vmax: float | None = None) -> NDArray:
    """Grayscale ``uint8`` image of a cloud field by nearest-point lookup.

    Values are mapped linearly from ``[vmin, vmax]`` (default: the field
    range) to ``[0, 255]``; a constant field maps to mid-gray. Row 0 is the
    bottom of the domain.
    """
    if res < 16:
        raise ValueError("resolution must be at least 16")
    grid = sample_grid(cloud, values, res)
    lo = np.min(values) if vmin is None else vmin
    hi = np.max(values) if vmax is None else vmax
    if hi > lo:
        scaled = np.clip((grid - lo) / (hi - lo), 0.0, 1.0) * 255.0
    else:
        scaled = np.full_like(grid, 127.0)
    return np.rint(scaled).astype(np.uint8)


def level_overlay(image: NDArray, grid_values: NDArray, q: float, mark: int = 255) -> NDArray:
    """Mark pixels where the field crosses ``q`` relative to a 4-neighbor."""
    above = grid_values >= q
    edge = np.zeros_like(above)
    edge[:-1, :] |= above[:-1, :] != above[1:, :]
    edge[:, :-1] |= above[:, :-1] != above[:, 1:]
    out = image.copy()
    out[edge] = mark
    return out


def level_curves(cloud, values, q: float, res: int, method: str = "nearest",
                 radius: float | None = None) -> list[NDArray]:
    """Polylines of the ``q`` level set in domain coordinates."""
    grid = sample_grid(cloud, values, res, method=method, radius=radius)
    xs, ys = pixel_centers(cloud.domain, res)
    dx = xs[1] - xs[0]
    dy = ys[1] - ys[0]
    curves = []
    for c in measure.find_contours(grid, q):
        curves.append(np.column_stack([xs[0] + c[:, 1] * dx, ys[0] + c[:, 0] * dy]))
    return curves
