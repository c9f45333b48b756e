"""Independent oracles used to freeze expected values in the tests.

Everything here is deliberately naive: brute-force linear programs, dense
sampling, explicit high-order time stepping, and a generic reduced-space
convex minimizer.  None of it shares code paths with the implementations it
checks.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog, minimize


def dual_norm_lp(values: np.ndarray, delta: float) -> float:
    """Brute-force LP value of sup { delta * sum(phi f) : |lap phi|_inf <= 1 }.

    The test function is pinned at phi_0 = 0 (the objective is shift
    invariant for zero-mean f), which keeps the LP bounded.
    """
    n = values.size
    lap_rows = []
    for k in range(n):
        row = np.zeros(n)
        row[k] -= 2.0
        row[(k + 1) % n] += 1.0
        row[(k - 1) % n] += 1.0
        lap_rows.append(row / (delta * delta))
    lap = np.asarray(lap_rows)
    a_ub = np.vstack([lap, -lap])[:, 1:]  # phi_0 pinned to zero
    b_ub = np.ones(2 * n)
    c = -delta * values[1:]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=[(None, None)] * (n - 1), method="highs")
    if not res.success:
        raise RuntimeError(f"LP oracle failed: {res.message}")
    return float(-res.fun)


def rk4(rhs, v0: np.ndarray, t_end: float, steps: int) -> np.ndarray:
    """Classic explicit fourth-order integrator; the caller owns stability."""
    v = v0.astype(float).copy()
    h = t_end / steps
    for _ in range(steps):
        k1 = rhs(v)
        k2 = rhs(v + 0.5 * h * k1)
        k3 = rhs(v + 0.5 * h * k2)
        k4 = rhs(v + h * k3)
        v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return v


def piecewise_l2_sampling(grid_a, va, grid_b, vb, points: int = 200_000) -> float:
    """Dense midpoint-sampling approximation of the L2 distance of reconstructions."""
    x = (np.arange(points) + 0.5) / points
    ka = np.floor(x * grid_a.n + 0.5).astype(int) % grid_a.n
    kb = np.floor(x * grid_b.n + 0.5).astype(int) % grid_b.n
    diff = va[ka] - vb[kb]
    return float(np.sqrt(np.mean(diff * diff)))


def geodesic_value_bfgs(rho0, rho1, s_slices: int, mobility_fn, laplacian_dense) -> float:
    """Generic convex minimization of the identical discretized action problem.

    The affine continuity constraints are eliminated exactly through a
    null-space basis; BFGS with finite-difference gradients then minimizes
    the smooth convex reduced objective from the explicit connecting seed.
    """
    from dlsslab.metric import connecting_curve

    grid = rho0.grid
    n, s = grid.n, s_slices
    lap = laplacian_dense(n, grid.delta)
    nvar = (s - 1) * n + s * n
    a = np.zeros((s * n, nvar))
    b = np.zeros(s * n)
    for blk in range(s):
        rows = slice(blk * n, (blk + 1) * n)
        if blk <= s - 2:
            a[rows, blk * n:(blk + 1) * n] = np.eye(n)
        if blk >= 1:
            a[rows, (blk - 1) * n:blk * n] = -np.eye(n)
        wcol = (s - 1) * n + blk * n
        a[rows, wcol:wcol + n] = -(1.0 / s) * lap
    b[:n] = rho0.values
    b[-n:] = -rho1.values

    def objective(z):
        rho = np.vstack([rho0.values, z[: (s - 1) * n].reshape(s - 1, n), rho1.values])
        w = z[(s - 1) * n:].reshape(s, n)
        mid = 0.5 * (rho[:-1] + rho[1:])
        if np.min(mid) <= 0.0:
            return 1e6
        m = mobility_fn(mid, np.roll(mid, -1, axis=1), np.roll(mid, 1, axis=1))
        return grid.delta * np.sum(w * w / m) / s

    seed = connecting_curve(rho0, rho1, s)
    z0 = np.concatenate([seed.rho[1:-1].ravel(), seed.w.ravel()])
    basis = null_space(a)
    res = minimize(lambda y: objective(z0 + basis @ y), np.zeros(basis.shape[1]),
                   method="BFGS", options={"maxiter": 5000, "gtol": 1e-12})
    return float(res.fun)


def quad_cell_average_midpoint(f, a: float, b: float, points: int = 100_000) -> float:
    """Midpoint-rule cell average with a fixed large sample count."""
    x = a + (b - a) * (np.arange(points) + 0.5) / points
    return float(np.mean(f(np.mod(x, 1.0))))
