"""Probability densities on the discrete circle and initial-data handling.

Covers the density type with its mass/nonnegativity invariants, cell
averaging of continuous data with the positivity lift, piecewise-constant
reconstruction, the Hellinger distance, and seeded random test densities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .grid import GridFunction, GridSpec

MASS_TOL = 1e-12


class QuadratureFailure(RuntimeError):
    """Adaptive quadrature could not certify the requested tolerance."""


@dataclass(frozen=True)
class Density:
    """Nonnegative grid function with unit mesh-weighted mass."""

    base: GridFunction

    def __post_init__(self) -> None:
        v = self.base.values
        if np.min(v) < 0.0:
            raise ValueError(f"density has negative entry {np.min(v):.3e}")
        mass = self.base.grid.delta * np.sum(v)
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"density mass {mass!r} deviates from 1 by more than {MASS_TOL:.0e}")

    @property
    def grid(self) -> GridSpec:
        return self.base.grid

    @property
    def values(self) -> np.ndarray:
        return self.base.values

    @property
    def mass(self) -> float:
        return float(self.grid.delta * np.sum(self.values))

    @property
    def min_value(self) -> float:
        return float(np.min(self.values))


def density_from_values(grid: GridSpec, values: np.ndarray) -> Density:
    return Density(GridFunction(grid, values))


def is_positive(rho: Density) -> bool:
    """Strict positivity of every cell value."""
    return bool(np.min(rho.values) > 0.0)


@dataclass(frozen=True)
class ContinuousDatum:
    """Normalized nonnegative density on the circle, given by an evaluator.

    ``density`` must be vectorized and 1-periodic.  ``sqrt_density_dx`` (the
    spatial derivative of sqrt(density), when available in closed form) feeds
    the continuous Fisher information used by projection bounds.
    """

    density: Callable[[np.ndarray], np.ndarray]
    name: str = "datum"
    sqrt_density_dx: Callable[[np.ndarray], np.ndarray] | None = None
    quad_tol: float = 1e-10

    def integral(self) -> float:
        val, err = integrate.quad(self.density, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=400)
        if err > max(1e-8 * abs(val), 1e-10):
            raise QuadratureFailure(f"normalization integral uncertain: err={err:.3e}")
        return float(val)


def uniform_datum() -> ContinuousDatum:
    return ContinuousDatum(density=lambda x: np.ones_like(np.asarray(x, dtype=float)), name="uniform")


def bls_datum(m: int, eps: float) -> ContinuousDatum:
    """Bump-with-floor family: Z^{-1} (sqrt(eps) + ((1+cos 2 pi x)/2)^m)^2.

    The normalization constant Z is computed by adaptive quadrature to a
    relative tolerance of 1e-12.
    """
    if m < 1:
        raise ValueError("m must be a positive integer")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    root_eps = float(np.sqrt(eps))

    def unnormalized(x):
        c = 0.5 * (1.0 + np.cos(2.0 * np.pi * np.asarray(x, dtype=float)))
        return (root_eps + c**m) ** 2

    z, zerr = integrate.quad(unnormalized, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=400)
    if zerr > 1e-10 * z:
        raise QuadratureFailure(f"normalization of bump datum uncertain: err={zerr:.3e}")
    inv_z = 1.0 / z
    inv_sqrt_z = float(np.sqrt(inv_z))

    def density(x):
        return inv_z * unnormalized(x)

    def sqrt_density_dx(x):
        x = np.asarray(x, dtype=float)
        c = 0.5 * (1.0 + np.cos(2.0 * np.pi * x))
        return inv_sqrt_z * m * c ** (m - 1) * (-np.pi * np.sin(2.0 * np.pi * x))

    return ContinuousDatum(
        density=density,
        name=f"bls:m={m},eps={eps:g}",
        sqrt_density_dx=sqrt_density_dx,
    )


def cell_averages(datum: ContinuousDatum, grid: GridSpec) -> np.ndarray:
    """Per-cell averages of the datum by adaptive quadrature on each cell."""
    n, d = grid.n, grid.delta
    out = np.empty(n)
    f = datum.density

    def periodic(x):
        return f(np.mod(x, 1.0))

    for k in range(n):
        a = (k - 0.5) * d
        b = (k + 0.5) * d
        val, err = integrate.quad(periodic, a, b, epsabs=1e-14, epsrel=datum.quad_tol, limit=200)
        if not np.isfinite(val) or err > max(10.0 * datum.quad_tol * abs(val), 1e-12):
            raise QuadratureFailure(f"cell {k}: quadrature error {err:.3e} too large")
        out[k] = val / d
    return out


def project_initial(datum: ContinuousDatum, grid: GridSpec) -> Density:
    """Discretize a continuous datum: cell averages plus the positivity lift.

    The averaged values are renormalized to unit mesh mass (they already are,
    up to quadrature tolerance) before applying (avg + delta) / (1 + delta),
    so every output entry is at least delta/(1+delta) and the mass is exact.
    """
    avg = cell_averages(datum, grid)
    mass = grid.delta * np.sum(avg)
    if abs(mass - 1.0) > 1e-6:
        raise QuadratureFailure(f"datum not normalized: projected mass {mass!r}")
    avg = avg / mass
    lifted = (avg + grid.delta) / (1.0 + grid.delta)
    return density_from_values(grid, lifted)


def reconstruct(rho: Density, x: float) -> float:
    """Piecewise-constant evaluation at a point of [0,1); boundaries go right."""
    n, d = rho.grid.n, rho.grid.delta
    k = int(np.floor(x / d + 0.5)) % n
    return float(rho.values[k])


def reconstruct_many(rho: Density, x: np.ndarray) -> np.ndarray:
    n, d = rho.grid.n, rho.grid.delta
    k = np.floor(np.asarray(x, dtype=float) / d + 0.5).astype(int) % n
    return rho.values[k]


def hellinger(rho: Density, eta: Density) -> float:
    """Mesh l2 distance of the square roots of two densities."""
    if rho.grid != eta.grid:
        raise ValueError("grid mismatch")
    diff = np.sqrt(rho.values) - np.sqrt(eta.values)
    return float(np.sqrt(rho.grid.delta * np.sum(diff * diff)))


def random_positive_density(grid: GridSpec, seed: int, min_value: float = 1e-3) -> Density:
    """Seeded random density with all entries >= min_value and unit mass.

    Mixes the uniform density with smoothed noise: the floor is exact by
    construction, not by clipping.
    """
    if not 0.0 < min_value <= 1.0:
        raise ValueError("min_value must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=grid.n)
    # On tiny circles the 3-point average is constant; keep the raw draw there.
    w = (u + np.roll(u, 1) + np.roll(u, -1)) / 3.0 if grid.n >= 5 else u
    w = w / (grid.delta * np.sum(w))
    a = 1.0 - min_value
    return density_from_values(grid, (1.0 - a) + a * w)


def continuous_fisher(datum: ContinuousDatum) -> float:
    """Fisher information 2 * int (d/dx sqrt(rho))^2 dx of a smooth datum."""
    if datum.sqrt_density_dx is None:
        raise ValueError("datum provides no sqrt-derivative")
    g = datum.sqrt_density_dx
    val, err = integrate.quad(lambda x: g(x) ** 2, 0.0, 1.0, epsabs=1e-13, epsrel=1e-10, limit=400)
    if err > max(1e-7 * abs(val), 1e-9):
        raise QuadratureFailure(f"fisher quadrature uncertain: err={err:.3e}")
    return float(2.0 * val)


def continuous_entropy(datum: ContinuousDatum) -> float:
    """Entropy int rho (log rho - 1) + 1 dx of a continuous datum by quadrature."""
    f = datum.density

    def integrand(x):
        r = f(x)
        return np.where(r > 0.0, r * (np.log(np.maximum(r, 1e-300)) - 1.0) + 1.0, 1.0)

    val, err = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-10, limit=400)
    if err > max(1e-7 * abs(val), 1e-9):
        raise QuadratureFailure(f"entropy quadrature uncertain: err={err:.3e}")
    return float(val)
