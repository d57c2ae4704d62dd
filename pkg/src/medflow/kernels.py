"""Stencil geometries, radial kernels and their moment constants.

Every kernel is described by a radial profile ``K`` on the unit scale; the
scaled kernel at radius ``r`` is ``K(|z| / r)``. Moments are taken of the
profile normalized to unit mass, so the second moment ``k2``, the first
absolute moment ``k1`` and the time constant ``c_A`` do not depend on how
the profile happens to be scaled.

Closed forms in dimension ``d`` (``w_d`` the unit-ball volume):

* ball: ``c_A = 1 / (2 (d + 1))``, ``k2 = 1 / (d + 2)``
* annulus ``B_1 minus B_kappa``:
  ``c_A = (1 - kappa**(d+1)) / (2 (d + 1) (1 - kappa**(d-1)))``
* general profile: ``c_A = int K rho^d / (2 (d - 1) int K rho^(d-2))``
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray
from scipy import integrate
from scipy.stats import norm, qmc

from .domain import unit_ball_volume
from .errors import AdmissibilityError

__all__ = [
    "Ball", "Annulus", "ShrinkingAnnulus", "RadialWeight", "KernelMoments",
    "moments", "admissible", "parse_kernel", "default_schedule",
]


def default_schedule(r: float) -> float:
    """Default inner-radius ratio for shrinking annuli, ``1 - sqrt(r)``."""
    return 1.0 - np.sqrt(r)


@dataclass(frozen=True)
class Ball:
    """Indicator of the closed ball of radius ``r``."""

    r: float

    def __post_init__(self):
        _check_r(self.r)

    kappa = 0.0
    weighted = False

    @property
    def r_inner(self) -> float:
        return 0.0

    @property
    def r_outer(self) -> float:
        return float(self.r)

    def label(self) -> str:
        return "ball"


@dataclass(frozen=True)
class Annulus:
    """Indicator of ``B_r`` minus ``B_{kappa r}``."""

    r: float
    kappa: float

    weighted = False

    def __post_init__(self):
        _check_r(self.r)
        if not 0.0 <= self.kappa < 1.0:
            raise AdmissibilityError(f"annulus ratio must lie in [0, 1), got {self.kappa}")

    @property
    def r_inner(self) -> float:
        return float(self.kappa * self.r)

    @property
    def r_outer(self) -> float:
        return float(self.r)

    def label(self) -> str:
        return f"annulus:{self.kappa:g}"


@dataclass(frozen=True)
class ShrinkingAnnulus:
    """Annulus whose ratio follows a schedule ``kappa(r)`` tending to one."""

    r: float
    schedule: Callable[[float], float] = default_schedule

    weighted = False

    def __post_init__(self):
        _check_r(self.r)
        k = self.kappa
        if not 0.0 <= k < 1.0:
            raise AdmissibilityError(f"schedule gives kappa={k} outside [0, 1) at r={self.r}")

    @property
    def kappa(self) -> float:
        return float(self.schedule(self.r))

    @property
    def r_inner(self) -> float:
        return self.kappa * float(self.r)

    @property
    def r_outer(self) -> float:
        return float(self.r)

    def as_annulus(self) -> Annulus:
        return Annulus(self.r, self.kappa)

    def label(self) -> str:
        return "shrinking"


@dataclass(frozen=True)
class RadialWeight:
    """Nonincreasing radial weight ``K(|z| / r)``.

    Parameters
    ----------
    K : callable
        Vectorized profile on the unit scale.
    r : float
        Length scale.
    support : float or None
        Profile vanishes beyond this unit-scale radius. ``None`` means
        unbounded support; neighborhoods are then truncated at
        ``truncate`` times ``r``.
    truncate : float
        Truncation radius used for unbounded profiles.
    """

    K: Callable[[NDArray], NDArray]
    r: float
    support: Optional[float] = 1.0
    truncate: float = 3.0
    name: str = "radial"

    weighted = True
    kappa = 0.0

    def __post_init__(self):
        _check_r(self.r)

    @property
    def r_inner(self) -> float:
        return 0.0

    @property
    def r_outer(self) -> float:
        s = self.truncate if self.support is None else self.support
        return float(s * self.r)

    def profile(self, rho) -> NDArray:
        rho = np.asarray(rho, float)
        k = np.asarray(self.K(rho), float) * np.ones_like(rho)
        if self.support is not None:
            k = np.where(rho <= self.support, k, 0.0)
        return k

    def table(self, n: int = 2049):
        """Tabulated ``(radii, weights)`` in physical units on ``[0, r_outer]``."""
        rho = np.linspace(0.0, self.r_outer / self.r, n)
        return rho * self.r, self.profile(rho)

    @classmethod
    def from_table(cls, rho, k, r: float, name: str = "radial") -> "RadialWeight":
        rho = np.asarray(rho, float)
        k = np.asarray(k, float)
        order = np.argsort(rho)
        rho, k = rho[order], k[order]
        if rho[0] > 0:
            rho = np.r_[0.0, rho]
            k = np.r_[k[0], k]

        def K(x):
            return np.interp(x, rho, k, right=0.0)

        return cls(K, r, support=float(rho[-1]), name=name)

    def label(self) -> str:
        return self.name


def _check_r(r):
    if not (np.isfinite(r) and r > 0):
        raise AdmissibilityError(f"kernel radius must be positive, got {r}")


def profile(spec, rho) -> NDArray:
    """Unit-scale radial profile of any kernel spec."""
    rho = np.asarray(rho, float)
    if isinstance(spec, RadialWeight):
        return spec.profile(rho)
    return ((rho >= spec.kappa) & (rho <= 1.0)).astype(float)


@dataclass(frozen=True)
class KernelMoments:
    """Derived constants of a kernel in a given dimension.

    Attributes
    ----------
    c_A : float
        Physical curvature-flow time advanced by one scheme step, divided
        by ``h = r**2``.
    k1 : float
        ``int K(|x|) |x_1| dx`` for the unit-mass profile.
    k2 : float
        ``int K(|x|) x_1**2 dx`` for the unit-mass profile.
    omega_d : float
        Unit-ball volume.
    """

    c_A: float
    k1: float
    k2: float
    omega_d: float


def _radial_integral(spec, power: int) -> float:
    if isinstance(spec, RadialWeight):
        upper = np.inf if spec.support is None else spec.support
        val, _ = integrate.quad(lambda t: float(spec.profile(t)) * t ** power, 0.0, upper,
                                epsrel=1e-10, epsabs=0.0, limit=500)
        return val
    k = spec.kappa
    return (1.0 - k ** (power + 1)) / (power + 1)


def moments(spec, d: int) -> KernelMoments:
    """Compute ``c_A``, ``k1`` and ``k2`` of a kernel in dimension ``d``.

    Indicator kernels use closed forms; radial weights use adaptive
    quadrature at relative tolerance ``1e-10`` after an admissibility check.
    """
    if isinstance(spec, RadialWeight):
        ok, why = admissible(spec.profile if spec.support is not None else spec.K, d)
        if not ok:
            raise AdmissibilityError(f"kernel not admissible: {why}")
    w_d = unit_ball_volume(d)
    w_dm1 = unit_ball_volume(d - 1) if d > 1 else 2.0
    i_dm2 = _radial_integral(spec, d - 2)
    i_dm1 = _radial_integral(spec, d - 1)
    i_d = _radial_integral(spec, d)
    i_dp1 = _radial_integral(spec, d + 1)
    mass = d * w_d * i_dm1
    c_A = i_d / (2.0 * (d - 1) * i_dm2)
    k1 = 2.0 * w_dm1 * i_d / mass
    k2 = w_d * i_dp1 / mass
    return KernelMoments(float(c_A), float(k1), float(k2), w_d)


def admissible(K: Callable, d: int):
    """Check a radial profile for admissibility.

    Returns
    -------
    ok : bool
    diagnostic : str
        Empty when admissible, otherwise names the violated clause:
        ``"non-increasing"``, ``"positive at zero"`` or ``"second moment"``.
    """
    rho = np.r_[0.0, np.geomspace(1e-6, 1e6, 1201)]
    k = np.asarray(K(rho), float) * np.ones_like(rho)
    if not np.all(np.isfinite(k)):
        return False, "finite values"
    if np.any(np.diff(k) > 1e-12 * max(1.0, abs(k[0]))):
        return False, "non-increasing"
    if not k[0] > 0:
        return False, "positive at zero"
    # partial integrals of K rho^(d+1) over [0, 2^j] must settle
    partial = []
    for j in range(0, 41):
        hi = 2.0 ** j
        grid = np.linspace(0.0, hi, 4097)
        partial.append(integrate.simpson(np.asarray(K(grid), float) * np.ones_like(grid)
                                         * grid ** (d + 1), x=grid))
        if j >= 4:
            a, b = partial[-2], partial[-1]
            if abs(b - a) <= 1e-8 * max(abs(b), 1e-300):
                return True, ""
    return False, "second moment"


def sample_unit(spec, d: int, u: NDArray) -> NDArray:
    """Map ``(n, d)`` uniforms in ``[0, 1)`` to the unit-scale stencil.

    The radial coordinate is drawn with density proportional to
    ``K(rho) rho**(d-1)``; directions use polar angle in 2-D and normalized
    Gaussian coordinates otherwise.
    """
    u = np.asarray(u, float)
    ur = u[:, 0]
    if isinstance(spec, RadialWeight):
        upper = spec.r_outer / spec.r
        grid = np.linspace(0.0, upper, 8193)
        dens = spec.profile(grid) * grid ** (d - 1)
        cdf = np.r_[0.0, np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))]
        cdf /= cdf[-1]
        rad = np.interp(ur, cdf, grid)
    else:
        k = spec.kappa
        rad = (k ** d + ur * (1.0 - k ** d)) ** (1.0 / d)
    if d == 2:
        th = 2.0 * np.pi * u[:, 1]
        direc = np.stack([np.cos(th), np.sin(th)], axis=1)
    else:
        g = norm.ppf(np.clip(u[:, 1:d + 1], 1e-300, 1 - 1e-16))
        direc = g / np.linalg.norm(g, axis=1, keepdims=True)
    return rad[:, None] * direc


def stencil_nodes(spec, d: int, n: int, seed: int = 0, method: str = "sobol") -> NDArray:
    """``n`` stencil nodes on the unit scale (Sobol needs ``n`` a power of 2).

    ``method="sobol"`` gives scrambled quasi-random nodes, ``"iid"`` plain
    pseudo-random ones.
    """
    ncoord = 2 if d == 2 else d + 1
    if method == "sobol":
        m = int(np.log2(n))
        if 2 ** m != n:
            raise ValueError("Sobol node counts must be powers of two")
        u = qmc.Sobol(ncoord, scramble=True, seed=seed).random_base2(m)
    elif method == "iid":
        u = np.random.default_rng(seed).random((n, ncoord))
    else:
        raise ValueError(f"unknown node method {method!r}")
    return sample_unit(spec, d, u)


def parse_kernel(text: str, r: float):
    """Build a kernel from its config string.

    Accepted forms are ``ball``, ``annulus:<kappa>``, ``shrinking`` and
    ``radial:<file>`` where the file holds whitespace separated
    ``rho K(rho)`` pairs on the unit scale.
    """
    text = text.strip()
    if text == "ball":
        return Ball(r)
    if text == "shrinking":
        return ShrinkingAnnulus(r)
    if text.startswith("annulus:"):
        return Annulus(r, float(text.split(":", 1)[1]))
    if text.startswith("radial:"):
        path = text.split(":", 1)[1]
        data = np.loadtxt(path, ndmin=2)
        return RadialWeight.from_table(data[:, 0], data[:, 1], r, name=text)
    raise AdmissibilityError(f"unknown kernel '{text}'")
