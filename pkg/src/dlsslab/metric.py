"""Diffusive transport distance on discrete densities.

A curve is a time-sliced pair (densities, fluxes) obeying the second-order
continuity equation slice by slice; its action integrates squared flux
weighted by the inverse three-point mobility at the temporal midpoint
density.  The infimal action over connecting curves squares the distance;
this module evaluates actions, rigorous lower/upper bounds, an approximate
geodesic by projected gradient descent, and the action bound carried by
solver trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csc_matrix, eye as speye, lil_matrix
from scipy.sparse.linalg import splu

from .density import Density, density_from_values
from .flow import Trajectory, simulate_fixed
from .functionals import entropy_values, scheme_flux_values
from .grid import (
    GridFunction,
    GridSpec,
    inv_laplacian_values,
    laplacian_matrix,
    w2inf_dual_norm,
)
from .mobility import mobility, mobility_partials

CONTINUITY_TOL = 1e-9
ENDPOINT_MASS_TOL = 1e-12


class Infeasible(RuntimeError):
    """No feasible curve was produced (should not happen for valid endpoints)."""


@dataclass(frozen=True)
class MetricConfig:
    """Knobs of the action discretization and the geodesic optimizer."""

    s_slices: int = 32
    max_iterations: int = 5000
    objective_tol: float = 1e-8
    barrier_floor: float = 1e-12

    def __post_init__(self) -> None:
        if self.s_slices < 2:
            raise ValueError("need at least 2 time slices")


@dataclass(frozen=True)
class Curve:
    """Time-discretized (density, flux) path with uniform slice width 1/S.

    rho has shape (S+1, n) and w shape (S, n); slice s of w drives the
    increment from rho[s-1] to rho[s] through the cyclic second difference.
    """

    grid: GridSpec
    rho: np.ndarray
    w: np.ndarray

    def __post_init__(self) -> None:
        rho = np.asarray(self.rho, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if rho.ndim != 2 or w.ndim != 2 or rho.shape[0] != w.shape[0] + 1:
            raise ValueError("curve needs S+1 density slices and S flux slices")
        if rho.shape[1] != self.grid.n or w.shape[1] != self.grid.n:
            raise ValueError("slice width does not match the grid")
        for idx in (0, -1):
            mass = self.grid.delta * np.sum(rho[idx])
            if abs(mass - 1.0) > ENDPOINT_MASS_TOL:
                raise ValueError(f"endpoint mass {mass!r} off unit")
        if np.min(rho) < -1e-12:
            raise ValueError(f"curve density slice has entry {np.min(rho):.3e}")
        resid = self.continuity_residual(rho, w, self.grid.delta)
        if resid > CONTINUITY_TOL:
            raise ValueError(f"continuity residual {resid:.3e} exceeds {CONTINUITY_TOL:.0e}")
        rho.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "w", w)

    @property
    def slices(self) -> int:
        return self.w.shape[0]

    @staticmethod
    def continuity_residual(rho: np.ndarray, w: np.ndarray, delta: float) -> float:
        s = w.shape[0]
        drho = (rho[1:] - rho[:-1]) * s
        lap_w = (np.roll(w, -1, axis=1) + np.roll(w, 1, axis=1) - 2.0 * w) / (delta * delta)
        return float(np.max(np.abs(drho - lap_w)))

    def reversed(self) -> "Curve":
        return Curve(self.grid, self.rho[::-1].copy(), -self.w[::-1].copy())


def relaxed_quotient(p: float, r: float) -> float:
    """Convex relaxation of p^2/r: zero at (0, 0), +inf at (p != 0, 0)."""
    if r > 0.0:
        return p * p / r
    return 0.0 if p == 0.0 else math.inf


def _midpoint_mobility(rho: np.ndarray) -> np.ndarray:
    mid = 0.5 * (rho[:-1] + rho[1:])
    return mobility(mid, np.roll(mid, -1, axis=1), np.roll(mid, 1, axis=1)), mid


def action(curve: Curve) -> float:
    """Slice sum of mesh-weighted [w^2 / M(midpoint density)] times the slice width."""
    m, _ = _midpoint_mobility(curve.rho)
    w = curve.w
    bad = (m <= 0.0) & (w != 0.0)
    if np.any(bad):
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(m > 0.0, w * w / np.where(m > 0.0, m, 1.0), 0.0)
    return float(curve.grid.delta * np.sum(q) / curve.slices)


def connecting_curve(rho0: Density, rho1: Density, s_slices: int) -> Curve:
    """Explicit finite-action curve through the uniform density.

    Both endpoints are pulled to the uniform state along quadratic-in-time
    mixtures; slice fluxes are recovered exactly from the increments through
    the inverse Laplacian, so the continuity invariant holds to rounding.
    """
    if rho0.grid != rho1.grid:
        raise ValueError("grid mismatch")
    grid = rho0.grid
    n, s = grid.n, s_slices
    sv = np.arange(s + 1) / s
    rho = np.empty((s + 1, n))
    first = sv <= 0.5
    rho[first] = (1.0 - 4.0 * sv[first, None] ** 2) * rho0.values + 4.0 * sv[first, None] ** 2
    back = 1.0 - sv[~first]
    rho[~first] = (1.0 - 4.0 * back[:, None] ** 2) * rho1.values + 4.0 * back[:, None] ** 2
    w = np.empty((s, n))
    for k in range(s):
        w[k] = inv_laplacian_values((rho[k + 1] - rho[k]) * s, grid.delta, tol_mean=1e-9)
    return Curve(grid, rho, w)


def connection_action_bound(rho0: Density, rho1: Density) -> float:
    """8 (|W0|^2 + |W1|^2) with W the double primitives of the endpoint excesses."""
    grid = rho0.grid
    w0 = inv_laplacian_values(rho0.values - 1.0, grid.delta, tol_mean=1e-9)
    w1 = inv_laplacian_values(rho1.values - 1.0, grid.delta, tol_mean=1e-9)
    return float(8.0 * grid.delta * (np.sum(w0 * w0) + np.sum(w1 * w1)))


def distance_lower(rho0: Density, rho1: Density) -> float:
    """Rigorous lower bound: dual second-order Sobolev norm of the difference over sqrt(3)."""
    if rho0.grid != rho1.grid:
        raise ValueError("grid mismatch")
    diff = GridFunction(rho0.grid, rho0.values - rho1.values)
    return w2inf_dual_norm(diff, tol_mean=1e-9) / math.sqrt(3.0)


@dataclass(frozen=True)
class GeodesicResult:
    curve: Curve
    value: float
    iterations: int
    converged: bool
    grad_norm: float
    warning: str = ""


class _AffineProjector:
    """Projection onto the continuity-plus-endpoint affine set.

    Variables are the interior density slices and all flux slices; the
    constraint normal equations are factorized once and reused.
    """

    def __init__(self, grid: GridSpec, s_slices: int):
        n, s = grid.n, s_slices
        self.n, self.s = n, s
        lap = csc_matrix(laplacian_matrix(n, grid.delta))
        ident = speye(n, format="csc")
        a = lil_matrix((s * n, (s - 1) * n + s * n))
        for blk in range(s):
            rows = slice(blk * n, (blk + 1) * n)
            if blk <= s - 2:
                a[rows, blk * n : (blk + 1) * n] = ident
            if blk >= 1:
                a[rows, (blk - 1) * n : blk * n] = -ident
            wcol = (s - 1) * n + blk * n
            a[rows, wcol : wcol + n] = -(1.0 / s) * lap
        self.a = csc_matrix(a)
        self.lu = splu(csc_matrix(self.a @ self.a.T))

    def rhs(self, rho0: np.ndarray, rho1: np.ndarray) -> np.ndarray:
        b = np.zeros(self.s * self.n)
        b[: self.n] = rho0
        b[-self.n :] = -rho1
        return b

    def project_point(self, z: np.ndarray, b: np.ndarray) -> np.ndarray:
        resid = self.a @ z - b
        return z - self.a.T @ self.lu.solve(resid)

    def project_direction(self, g: np.ndarray) -> np.ndarray:
        return g - self.a.T @ self.lu.solve(self.a @ g)


def _pack(rho: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.concatenate([rho[1:-1].ravel(), w.ravel()])


def _unpack(z: np.ndarray, rho0: np.ndarray, rho1: np.ndarray, s: int, n: int):
    interior = z[: (s - 1) * n].reshape(s - 1, n)
    w = z[(s - 1) * n :].reshape(s, n)
    rho = np.vstack([rho0, interior, rho1])
    return rho, w


def _objective_and_gradient(rho: np.ndarray, w: np.ndarray, delta: float):
    s = w.shape[0]
    mid = 0.5 * (rho[:-1] + rho[1:])
    midp = np.roll(mid, -1, axis=1)
    midm = np.roll(mid, 1, axis=1)
    m = mobility(mid, midp, midm)
    if np.min(m) <= 0.0:
        return math.inf, None, None
    f = float(delta * np.sum(w * w / m) / s)
    gw = (2.0 * delta / s) * w / m
    r = (w / m) ** 2
    d0, dp, dm = mobility_partials(mid, midp, midm)
    gmid = -(delta / s) * (r * d0 + np.roll(r * dp, 1, axis=1) + np.roll(r * dm, -1, axis=1))
    ginterior = 0.5 * (gmid[:-1] + gmid[1:])
    return f, ginterior, gw


def _feasible(rho: np.ndarray, floor: float) -> bool:
    if rho.shape[0] > 2 and np.min(rho[1:-1]) < floor:
        return False
    mid = 0.5 * (rho[:-1] + rho[1:])
    return bool(np.min(mid) >= floor)


def geodesic(rho0: Density, rho1: Density, cfg: MetricConfig = MetricConfig()) -> GeodesicResult:
    """Approximate minimizer of the action between two endpoint densities.

    Projected gradient descent on the affine continuity set, seeded with the
    explicit connecting curve; line search rejects iterates whose midpoint
    densities touch the barrier floor.  The returned value is an upper bound
    on the squared distance; grad_norm is the projected-gradient optimality
    proxy at the last iterate.
    """
    if rho0.grid != rho1.grid:
        raise ValueError("grid mismatch")
    grid = rho0.grid
    n, s = grid.n, cfg.s_slices
    if np.array_equal(rho0.values, rho1.values):
        rho = np.repeat(rho0.values[None, :], s + 1, axis=0)
        curve = Curve(grid, rho, np.zeros((s, n)))
        return GeodesicResult(curve, 0.0, 0, True, 0.0)

    seed = connecting_curve(rho0, rho1, s)
    proj = _AffineProjector(grid, s)
    b = proj.rhs(rho0.values, rho1.values)
    z = proj.project_point(_pack(seed.rho, seed.w), b)
    rho, w = _unpack(z, rho0.values, rho1.values, s, n)
    if not _feasible(rho, cfg.barrier_floor):
        z = _pack(seed.rho, seed.w)
        rho, w = seed.rho.copy(), seed.w.copy()
    f, gi, gw = _objective_and_gradient(rho, w, grid.delta)
    if not np.isfinite(f):
        raise Infeasible("seed curve has infinite action")

    grad = np.concatenate([gi.ravel(), gw.ravel()])
    d = -proj.project_direction(grad)
    alpha = 1.0 / max(1.0, float(np.max(np.abs(d))))
    stall = 0
    iterations = 0
    warning = ""
    flat = False
    z_prev = None
    pg_prev = None
    for iterations in range(1, cfg.max_iterations + 1):
        gnorm2 = float(np.dot(d, d))
        if gnorm2 <= 1e-30:
            flat = True
            break
        accepted = False
        a_trial = alpha
        for _ in range(60):
            zt = z + a_trial * d
            rt, wt = _unpack(zt, rho0.values, rho1.values, s, n)
            if _feasible(rt, cfg.barrier_floor):
                ft, git, gwt = _objective_and_gradient(rt, wt, grid.delta)
                if np.isfinite(ft) and ft <= f - 1e-4 * a_trial * gnorm2:
                    accepted = True
                    break
            a_trial *= 0.5
        if not accepted:
            warning = "no progress along the projected gradient"
            break
        drop = f - ft
        z_prev, pg_prev = z, -d
        z, rho, w, f, gi, gw = zt, rt, wt, ft, git, gwt
        grad = np.concatenate([gi.ravel(), gw.ravel()])
        pg = proj.project_direction(grad)
        d = -pg
        # Barzilai-Borwein step seed for the next line search.
        dz = z - z_prev
        dg = pg - pg_prev
        denom = float(np.dot(dz, dg))
        alpha = float(np.dot(dz, dz)) / denom if denom > 1e-300 else a_trial * 2.0
        alpha = min(max(alpha, 1e-12), 1e12)
        if drop <= cfg.objective_tol * max(abs(f), 1e-30):
            stall += 1
            if stall >= 3:
                break
        else:
            stall = 0
        if iterations % 64 == 0:
            z = proj.project_point(z, b)
            rho, w = _unpack(z, rho0.values, rho1.values, s, n)
            f, gi, gw = _objective_and_gradient(rho, w, grid.delta)
            grad = np.concatenate([gi.ravel(), gw.ravel()])
            d = -proj.project_direction(grad)

    z_final = proj.project_point(z, b)
    rho_f, w_f = _unpack(z_final, rho0.values, rho1.values, s, n)
    f_f, gi, gw = _objective_and_gradient(rho_f, w_f, grid.delta)
    if not np.isfinite(f_f):
        # The drift-correcting projection stepped outside the barrier; keep
        # the last accepted iterate (feasible to line-search precision).
        rho_f, w_f = rho, w
        f_f, gi, gw = _objective_and_gradient(rho_f, w_f, grid.delta)
    grad_norm = float(np.max(np.abs(proj.project_direction(np.concatenate([gi.ravel(), gw.ravel()])))))
    curve = Curve(grid, np.maximum(rho_f, 0.0), w_f)
    converged = stall >= 3 or flat
    if not converged and not warning:
        warning = "iteration budget exhausted"
    return GeodesicResult(curve, float(f_f), iterations, converged, grad_norm, warning)


def distance_upper(rho0: Density, rho1: Density, cfg: MetricConfig = MetricConfig()) -> float:
    """Best available upper bound on the squared distance."""
    direct = action(connecting_curve(rho0, rho1, cfg.s_slices))
    return min(direct, geodesic(rho0, rho1, cfg).value)


def trajectory_curve(traj: Trajectory, t0: float, t1: float, s_slices: int = 32):
    """Reparametrize a trajectory window into a curve, with its action and entropy drop.

    The window is re-run at the uniform step (t1-t0)/S so the slices sit on
    equispaced times; slice fluxes are (t1-t0) times the scheme flux, which
    satisfies the continuity invariant up to S times the Newton tolerance.
    The action is evaluated with the slice-density mobility, matching the
    identity action = (t1-t0) * integral of the entropy production.
    """
    if not 0.0 <= t0 < t1:
        raise ValueError("need 0 <= t0 < t1")
    grid = traj.grid
    times = np.asarray(traj.state_times)
    start = traj.initial if t0 == 0.0 else None
    if start is None:
        k0 = int(np.argmin(np.abs(times - t0)))
        t0 = float(times[k0])
        start = density_from_values(grid, traj.state_values[k0])
    if t1 <= t0:
        raise ValueError("window collapsed after snapping to recorded times")
    span = t1 - t0
    sub = simulate_fixed(start, span / s_slices, s_slices, traj.config, t0=t0)
    states = np.vstack([start.values[None, :], np.vstack(sub.state_values)])
    w = span * np.vstack([scheme_flux_values(states[k], grid.delta) for k in range(1, s_slices + 1)])
    curve = Curve(grid, states, w)
    m = mobility(states[1:], np.roll(states[1:], -1, axis=1), np.roll(states[1:], 1, axis=1))
    act = float(grid.delta * np.sum(w * w / m) / s_slices)
    drop = entropy_values(states[0], grid.delta) - entropy_values(states[-1], grid.delta)
    return curve, act, drop


def trajectory_curve_bound(traj: Trajectory, t0: float, t1: float, s_slices: int = 32) -> float:
    """Action of the reparametrized trajectory window; certified against the entropy drop."""
    if t1 == t0:
        return 0.0
    _, act, drop = trajectory_curve(traj, t0, t1, s_slices)
    bound = drop * (t1 - t0) * (1.0 + 1e-6)
    if act > bound:
        raise AssertionError(f"trajectory action {act:.6e} exceeds entropy-drop bound {bound:.6e}")
    return act


def hoelder_diagnostic(traj: Trajectory, time_pairs) -> list[dict]:
    """Reported ratio of Hellinger distance to the 1/12 power of the upper distance bound."""
    out = []
    grid = traj.grid
    for ta, tb in time_pairs:
        ra = traj.state_at_time(ta)
        rb = traj.state_at_time(tb)
        d2 = action(connecting_curve(ra, rb, 16))
        hell = float(
            np.sqrt(grid.delta * np.sum((np.sqrt(ra.values) - np.sqrt(rb.values)) ** 2))
        )
        dist = math.sqrt(max(d2, 0.0))
        ratio = hell / dist ** (1.0 / 12.0) if dist > 0.0 else 0.0
        out.append({"t0": ta, "t1": tb, "hellinger": hell, "upper_distance": dist, "ratio": ratio})
    return out
