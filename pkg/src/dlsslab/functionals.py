"""Lyapunov functionals of the discrete flow and their variational calculus.

Entropy, Fisher information, and heat capacity with their gradients, the
entropy-production rate with its curvature lower bound, and the pair of
dissipation potentials behind the generalized gradient structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import Density
from .grid import GridFunction, laplacian_values, shift_minus, shift_plus


@dataclass(frozen=True)
class FunctionalValues:
    """Snapshot of the monitored functionals at one state."""

    entropy: float
    fisher: float
    heat_capacity: float  # math.inf when some cell vanishes
    min_density: float
    mass: float


def _entropy_summand(v: np.ndarray) -> np.ndarray:
    # rho (log rho - 1) + 1, written through u = rho - 1 so the near-uniform
    # regime (values ~ u^2/2) survives cancellation.
    u = v - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(v > 0.0, (1.0 + u) * np.log1p(u) - u, 1.0)
    return s


def entropy(rho: Density) -> float:
    """Discrete entropy: delta * sum rho (log rho - 1) + 1, with 0 log 0 = 0."""
    return float(rho.grid.delta * np.sum(_entropy_summand(rho.values)))


def entropy_values(v: np.ndarray, delta: float) -> float:
    return float(delta * np.sum(_entropy_summand(v)))


def entropy_gradient(rho: Density) -> GridFunction:
    """Variational derivative of the entropy: log rho, cellwise."""
    if np.min(rho.values) <= 0.0:
        raise ValueError("entropy gradient needs a strictly positive density")
    return GridFunction(rho.grid, np.log(rho.values))


def fisher(rho: Density) -> float:
    """Discrete Fisher information: 2 delta * sum ((sqrt rho)_{k+1}-(sqrt rho)_k)^2/delta^2."""
    return fisher_values(rho.values, rho.grid.delta)


def fisher_values(v: np.ndarray, delta: float) -> float:
    s = np.sqrt(v)
    d = (shift_plus(s) - s) / delta
    return float(2.0 * delta * np.sum(d * d))


def fisher_gradient(rho: Density) -> GridFunction:
    """Variational derivative of the Fisher information, cellwise.

    2 delta^-2 (2 - (sqrt rho_{k+1} + sqrt rho_{k-1}) / sqrt rho_k).
    """
    v = rho.values
    if np.min(v) <= 0.0:
        raise ValueError("fisher gradient needs a strictly positive density")
    s = np.sqrt(v)
    d = rho.grid.delta
    g = 2.0 / (d * d) * (2.0 - (shift_plus(s) + shift_minus(s)) / s)
    return GridFunction(rho.grid, g)


def heat_capacity(rho: Density) -> float:
    """-delta * sum log rho; +inf as soon as some cell vanishes."""
    v = rho.values
    if np.min(v) <= 0.0:
        return math.inf
    return heat_capacity_values(v, rho.grid.delta)


def heat_capacity_values(v: np.ndarray, delta: float) -> float:
    return float(-delta * np.sum(np.log1p(v - 1.0)))


def scheme_flux_values(v: np.ndarray, delta: float) -> np.ndarray:
    """Flux of the discrete evolution: -(2/delta^2)(sqrt(rho_+ rho_-) - rho)."""
    return -(2.0 / (delta * delta)) * (np.sqrt(shift_plus(v) * shift_minus(v)) - v)


def entropy_dissipation(rho: Density) -> float:
    """Entropy production rate of the flow at a positive density.

    4 delta * sum ((sqrt(rho_+ rho_-) - rho)/delta^2) ((log sqrt(rho_+ rho_-) - log rho)/delta^2);
    every summand is nonnegative since both factors share their sign.
    """
    v = rho.values
    if np.min(v) <= 0.0:
        raise ValueError("entropy dissipation needs a strictly positive density")
    d = rho.grid.delta
    g = np.sqrt(shift_plus(v) * shift_minus(v))
    a = (g - v) / (d * d)
    b = (0.5 * (np.log(shift_plus(v)) + np.log(shift_minus(v))) - np.log(v)) / (d * d)
    return float(4.0 * d * np.sum(a * b))


def laplacian_sqrt_energy(rho: Density) -> float:
    """delta * sum (lap sqrt(rho))^2, the curvature lower bound of the dissipation."""
    d = rho.grid.delta
    w = laplacian_values(np.sqrt(rho.values), d)
    return float(d * np.sum(w * w))


def _eta(s: np.ndarray) -> np.ndarray:
    # s log s - s + 1 with the continuous extension eta(0) = 1.
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(s > 0.0, s * np.log(np.where(s > 0.0, s, 1.0)) - s + 1.0, 1.0)


def ggs_dual_potential(rho: Density, xi: GridFunction) -> float:
    """Dual dissipation potential at a positive density and driving force xi.

    delta * sum rho_k (2/delta^2) [ (2/delta^2)(exp(-delta^2 xi_k / 2) - 1) + xi_k ].
    Its xi-gradient in the mesh pairing reproduces the scheme flux at
    xi = -lap log rho.
    """
    v = rho.values
    x = xi.values
    d = rho.grid.delta
    c = 2.0 / (d * d)
    return float(d * np.sum(v * c * (c * np.expm1(-0.5 * d * d * x) + x)))


def ggs_potential(rho: Density, w: GridFunction) -> float:
    """Primal dissipation potential, the convex dual of ggs_dual_potential.

    (4/delta^4) * delta * sum rho_k eta(1 - delta^2 w_k / (2 rho_k)), finite
    exactly on rho_k >= delta^2 w_k / 2 and +inf otherwise.  The 4/delta^4
    prefactor is forced by duality: without it the eta-sum is not the
    Legendre transform of the dual potential (see the duality check suite).
    """
    v = rho.values
    ww = w.values
    d = rho.grid.delta
    s = 1.0 - 0.5 * d * d * ww / v
    if np.min(s) < 0.0:
        return math.inf
    return float((4.0 / d**4) * d * np.sum(v * _eta(s)))


def fenchel_gap(rho: Density) -> float:
    """Duality balance at the scheme's own force/flux pair; zero along the flow.

    gap = R(rho, w) + R*(rho, xi) - <xi, w> with xi = -lap log rho and
    w the scheme flux; nonnegative by convex duality for any flux.  In
    floating point the three terms scale like delta^-4, so the returned gap
    is zero only up to roundoff relative to <xi, w>.
    """
    v = rho.values
    if np.min(v) <= 0.0:
        raise ValueError("fenchel gap needs a strictly positive density")
    d = rho.grid.delta
    xi = GridFunction(rho.grid, -laplacian_values(np.log(v), d))
    w = GridFunction(rho.grid, scheme_flux_values(v, d))
    pairing = d * np.sum(xi.values * w.values)
    return float(ggs_potential(rho, w) + ggs_dual_potential(rho, xi) - pairing)


def functional_values(rho: Density) -> FunctionalValues:
    return FunctionalValues(
        entropy=entropy(rho),
        fisher=fisher(rho),
        heat_capacity=heat_capacity(rho),
        min_density=float(np.min(rho.values)),
        mass=float(rho.grid.delta * np.sum(rho.values)),
    )
