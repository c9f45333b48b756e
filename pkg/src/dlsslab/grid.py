"""Cyclic grid on the unit circle and its discrete difference calculus.

All operators act on real-valued functions living on the cells of a uniform
cyclic mesh with n cells of width delta = 1/n.  Indices are cyclic mod n
throughout; cell kappa occupies ((kappa-1/2)*delta, (kappa+1/2)*delta).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solveh_banded

MEAN_TOL = 1e-12


class NonZeroMean(ValueError):
    """An operation that needs a zero-average grid function got one with mass."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform cyclic mesh: n cells of width delta = 1/n on the circle."""

    n: int
    delta: float = field(init=False)

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("grid needs at least 2 cells")
        object.__setattr__(self, "delta", 1.0 / self.n)
        assert abs(self.delta * self.n - 1.0) <= 1e-15

    def centers(self) -> np.ndarray:
        """Cell centers kappa*delta, kappa = 0..n-1."""
        return self.delta * np.arange(self.n)


@dataclass(frozen=True)
class GridFunction:
    """Real values on the cells of a cyclic grid, one entry per cell.

    Values are copied on construction and frozen; instances are safe to
    share between threads.
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.grid.n


# Array kernels; the shift convention is values[kappa+1] = roll(values, -1).


def shift_plus(v: np.ndarray) -> np.ndarray:
    return np.roll(v, -1)


def shift_minus(v: np.ndarray) -> np.ndarray:
    return np.roll(v, 1)


def forward_diff_values(v: np.ndarray, delta: float) -> np.ndarray:
    return (shift_plus(v) - v) / delta


def backward_diff_values(v: np.ndarray, delta: float) -> np.ndarray:
    return (v - shift_minus(v)) / delta


def laplacian_values(v: np.ndarray, delta: float) -> np.ndarray:
    return (shift_plus(v) + shift_minus(v) - 2.0 * v) / (delta * delta)


def forward_diff(f: GridFunction) -> GridFunction:
    """Forward difference quotient (f_{k+1}-f_k)/delta."""
    return GridFunction(f.grid, forward_diff_values(f.values, f.grid.delta))


def backward_diff(f: GridFunction) -> GridFunction:
    """Backward difference quotient (f_k-f_{k-1})/delta."""
    return GridFunction(f.grid, backward_diff_values(f.values, f.grid.delta))


def laplacian(f: GridFunction) -> GridFunction:
    """Second difference quotient (f_{k+1}+f_{k-1}-2 f_k)/delta^2."""
    return GridFunction(f.grid, laplacian_values(f.values, f.grid.delta))


def mean_value(v: np.ndarray, delta: float) -> float:
    return float(delta * np.sum(v))


def require_zero_mean(v: np.ndarray, delta: float, tol: float = MEAN_TOL) -> None:
    m = mean_value(v, delta)
    if abs(m) > tol:
        raise NonZeroMean(f"grid function has mean {m:.3e}, expected |mean| <= {tol:.0e}")


def inv_laplacian_values(v: np.ndarray, delta: float, tol_mean: float = MEAN_TOL) -> np.ndarray:
    """Zero-average solution W of the cyclic second-difference equation lap W = v.

    The singular cyclic system is deflated by grounding cell 0 (W_0 = 0),
    which leaves a plain symmetric positive definite tridiagonal system for
    the remaining cells; the zero-average representative is restored by a
    constant shift.  Small grids use a dense least-squares solve.
    """
    require_zero_mean(v, delta, tol_mean)
    n = v.size
    if n <= 4:
        a = laplacian_matrix(n, delta)
        w, *_ = np.linalg.lstsq(a, v, rcond=None)
    else:
        # Grounded system: unknowns W_1..W_{n-1}, matrix = Dirichlet tridiagonal
        # of -lap (SPD), right-hand side -v_1..-v_{n-1}.
        inv_d2 = 1.0 / (delta * delta)
        ab = np.empty((2, n - 1))
        ab[0, :] = -inv_d2  # superdiagonal (first entry unused by LAPACK)
        ab[1, :] = 2.0 * inv_d2
        sol = solveh_banded(ab, -v[1:], lower=False)
        w = np.concatenate(([0.0], sol))
    return w - np.mean(w)


def inv_laplacian(f: GridFunction, tol_mean: float = MEAN_TOL) -> GridFunction:
    """Inverse of the discrete Laplacian on zero-average functions.

    Raises NonZeroMean when the input carries mass beyond tol_mean.
    """
    return GridFunction(f.grid, inv_laplacian_values(f.values, f.grid.delta, tol_mean))


def laplacian_matrix(n: int, delta: float) -> np.ndarray:
    """Dense matrix of the cyclic second-difference operator (test oracle)."""
    a = np.zeros((n, n))
    idx = np.arange(n)
    np.add.at(a, (idx, idx), -2.0)
    np.add.at(a, (idx, (idx + 1) % n), 1.0)
    np.add.at(a, (idx, (idx - 1) % n), 1.0)
    return a / (delta * delta)


def inner_delta(f: GridFunction, g: GridFunction) -> float:
    """Mesh-weighted scalar product delta * sum_k f_k g_k."""
    if f.grid != g.grid:
        raise ValueError("grid mismatch")
    return float(f.grid.delta * np.dot(f.values, g.values))


def lp_norm(f: GridFunction, p: float) -> float:
    """Mesh-weighted l^p norm (delta * sum |f|^p)^(1/p)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return float((f.grid.delta * np.sum(np.abs(f.values) ** p)) ** (1.0 / p))


def h1_norm(f: GridFunction) -> float:
    """Discrete H^1 norm: (l2 norm^2 + delta * sum (forward diff)^2)^(1/2)."""
    delta = f.grid.delta
    l2sq = delta * np.sum(f.values**2)
    dsq = delta * np.sum(forward_diff_values(f.values, delta) ** 2)
    return float(np.sqrt(l2sq + dsq))


def weighted_median(v: np.ndarray) -> float:
    """Lower median (deterministic minimizer of sum |v - c| for uniform weights)."""
    s = np.sort(v)
    return float(s[(v.size - 1) // 2])


def w2inf_dual_norm(f: GridFunction, tol_mean: float = MEAN_TOL) -> float:
    """Dual norm of a zero-average f against test functions with |lap phi| <= 1.

    Evaluated exactly through duality: with W the zero-average double
    primitive of f, the value is min_c delta * sum |W_k - c|, attained at a
    mesh-weighted median of W.
    """
    w = inv_laplacian_values(f.values, f.grid.delta, tol_mean)
    c = weighted_median(w)
    return float(f.grid.delta * np.sum(np.abs(w - c)))


def poincare_constant(grid: GridSpec) -> float:
    """Sharp constant relating l2 mass of zero-mean functions to gradient energy.

    Equals delta^2 / (2 (1 - cos(2 pi delta))); the lowest nonconstant
    Fourier mode attains it.
    """
    d = grid.delta
    return d * d / (2.0 * (1.0 - np.cos(2.0 * np.pi * d)))
