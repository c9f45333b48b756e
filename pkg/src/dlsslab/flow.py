"""Semi-discrete evolution on the circle: right-hand sides, implicit Euler, stepping.

The evolution is d/dt rho = lap(flux(rho)) with the three-point flux
-(2/delta^2)(sqrt(rho_+ rho_-) - rho).  Implicit Euler steps are solved by a
damped Newton iteration on a cyclic pentadiagonal Jacobian; the adaptive
controller shrinks the step when Newton works hard and grows it when Newton
is quick, mirroring the step rules the scheme was reported with.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .density import Density, density_from_values, is_positive
from .functionals import FunctionalValues, functional_values, scheme_flux_values
from .grid import (
    GridFunction,
    GridSpec,
    backward_diff_values,
    forward_diff_values,
    laplacian_values,
    shift_minus,
    shift_plus,
)
from .mobility import mobility_values


class SolverError(RuntimeError):
    pass


class NewtonDivergence(SolverError):
    """Newton exhausted its iteration or damping budget; shrink the step."""


class PositivityLoss(SolverError):
    """No damping factor kept the Newton iterate strictly positive."""


class PositivityRequired(ValueError):
    """The flow is only solved from strictly positive initial data."""


class StepFailure(SolverError):
    """The adaptive controller ran the step size into the ground."""


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and step rules of the implicit Euler solver.

    The initial step is dt0_factor * delta.  After an accepted step the next
    step grows by grow_factor when Newton needed fewer than grow_threshold
    iterations; a step needing more than shrink_threshold iterations (or a
    failed Newton solve) is redone with the step scaled by shrink_factor.
    """

    dt0_factor: float = 1e-2
    newton_tol: float = 1e-11
    newton_max_iter: int = 25
    shrink_threshold: int = 4
    grow_threshold: int = 3
    grow_factor: float = 1.05
    shrink_factor: float = 0.5
    entropy_stop: float = 1e-14
    t_max: float = np.inf
    positivity_floor: float = 1e-300
    store_stride: int = 1
    record_flux: bool = False
    max_damping: int = 40
    max_steps: int = 1_000_000

    def __post_init__(self) -> None:
        if not (0.0 < self.shrink_factor < 1.0 < self.grow_factor):
            raise ValueError("need 0 < shrink_factor < 1 < grow_factor")
        if self.grow_threshold > self.shrink_threshold:
            raise ValueError("grow_threshold must not exceed shrink_threshold")


@dataclass(frozen=True)
class StepRecord:
    """Diagnostics of one accepted implicit Euler step."""

    t: float
    dt: float
    newton_iterations: int
    damping_events: int
    functionals: FunctionalValues
    flux: np.ndarray | None = None


@dataclass(frozen=True)
class Trajectory:
    """Accepted states and per-step diagnostics of one simulation."""

    grid: GridSpec
    initial: Density
    records: tuple[StepRecord, ...]
    state_times: tuple[float, ...]
    state_values: tuple[np.ndarray, ...]
    config: SolverConfig

    def __post_init__(self) -> None:
        ts = [r.t for r in self.records]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("record times must be strictly increasing")
        for v in self.state_values:
            if np.min(v) <= 0.0:
                raise ValueError("stored state lost positivity")
            mass = self.grid.delta * np.sum(v)
            if abs(mass - 1.0) > 1e-11:
                raise ValueError(f"stored state mass {mass!r} drifted")
            v.setflags(write=False)

    @property
    def times(self) -> np.ndarray:
        """Record times prefixed by the initial time 0."""
        return np.concatenate(([0.0], [r.t for r in self.records]))

    def series(self, name: str) -> np.ndarray:
        """Per-time values of one functional, initial state included."""
        first = getattr(functional_values(self.initial), name)
        return np.concatenate(([first], [getattr(r.functionals, name) for r in self.records]))

    @property
    def final_density(self) -> Density:
        if not self.state_values:
            return self.initial
        return density_from_values(self.grid, self.state_values[-1])

    def state_at_time(self, t: float) -> Density:
        """Stored state at an exactly recorded time (0 means the initial state)."""
        if t == 0.0:
            return self.initial
        for st, sv in zip(self.state_times, self.state_values):
            if st == t:
                return density_from_values(self.grid, sv)
        raise KeyError(f"no stored state at t={t!r}")


# Right-hand sides ----------------------------------------------------------


def flux(rho: Density) -> GridFunction:
    """Scheme flux -(2/delta^2)(sqrt(rho_+ rho_-) - rho)."""
    return GridFunction(rho.grid, scheme_flux_values(rho.values, rho.grid.delta))


def rhs_values(v: np.ndarray, delta: float) -> np.ndarray:
    return laplacian_values(scheme_flux_values(v, delta), delta)


def rhs(rho: Density) -> GridFunction:
    """Evolution right-hand side lap(flux), the compact form of the scheme."""
    return GridFunction(rho.grid, rhs_values(rho.values, rho.grid.delta))


def rhs_gradient_form(rho: Density) -> GridFunction:
    """-lap(M(rho) lap log rho): steepest descent of the entropy in the transport metric."""
    v = rho.values
    d = rho.grid.delta
    m = mobility_values(v)
    out = -laplacian_values(m * laplacian_values(np.log(v), d), d)
    return GridFunction(rho.grid, out)


def rhs_sqrt_form(rho: Density) -> GridFunction:
    """2 sqrt(rho) (-lap lap sqrt(rho) + (lap sqrt(rho))^2 / sqrt(rho))."""
    v = rho.values
    d = rho.grid.delta
    s = np.sqrt(v)
    ls = laplacian_values(s, d)
    out = -2.0 * s * laplacian_values(ls, d) + 2.0 * ls * ls
    return GridFunction(rho.grid, out)


def rhs_wasserstein_form(rho: Density) -> GridFunction:
    """Fisher-descent form: bdiff(sqrt(rho rho_+) fdiff(dF/drho)) with the
    edge-geometric-mean mobility; dF/drho = -2 lap sqrt(rho)/sqrt(rho)."""
    v = rho.values
    d = rho.grid.delta
    s = np.sqrt(v)
    edge_mean = s * shift_plus(s)
    g = laplacian_values(s, d) / s
    out = -2.0 * backward_diff_values(edge_mean * forward_diff_values(g, d), d)
    return GridFunction(rho.grid, out)


# Jacobian and linear solves ------------------------------------------------

_OFFSETS = (-2, -1, 0, 1, 2)


@dataclass(frozen=True)
class CyclicBanded:
    """Cyclic banded matrix of bandwidth 2, stored by diagonals.

    diagonal o holds A[k, (k+o) mod n] at index k.
    """

    n: int
    diagonals: dict

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n)
        for o in _OFFSETS:
            out += self.diagonals[o] * np.roll(v, -o)
        return out

    def todense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        idx = np.arange(self.n)
        for o in _OFFSETS:
            np.add.at(a, (idx, (idx + o) % self.n), self.diagonals[o])
        return a


def _rhs_jacobian_diagonals(v: np.ndarray, delta: float) -> dict:
    inv_d2 = 1.0 / (delta * delta)
    sp = shift_plus(v)
    sm = shift_minus(v)
    ap = -inv_d2 * np.sqrt(sm / sp)  # d flux_k / d rho_{k+1}
    am = -inv_d2 * np.sqrt(sp / sm)  # d flux_k / d rho_{k-1}
    a0 = 2.0 * inv_d2  # d flux_k / d rho_k
    return {
        -2: np.roll(am, 1) * inv_d2,
        -1: (a0 - 2.0 * am) * inv_d2,
        0: (np.roll(ap, 1) + np.roll(am, -1) - 2.0 * a0) * inv_d2,
        1: (a0 - 2.0 * ap) * inv_d2,
        2: np.roll(ap, -1) * inv_d2,
    }


def jacobian(rho: Density) -> CyclicBanded:
    """Analytic Jacobian of the right-hand side at a positive density."""
    v = rho.values
    if np.min(v) <= 0.0:
        raise ValueError("jacobian needs a strictly positive density")
    return CyclicBanded(rho.grid.n, _rhs_jacobian_diagonals(v, rho.grid.delta))


def _newton_matrix(v: np.ndarray, delta: float, dt: float) -> CyclicBanded:
    d = _rhs_jacobian_diagonals(v, delta)
    diags = {o: -dt * d[o] for o in _OFFSETS}
    diags[0] = diags[0] + 1.0
    return CyclicBanded(v.size, diags)


def solve_cyclic_banded(a: CyclicBanded, b: np.ndarray) -> np.ndarray:
    """Solve a cyclic pentadiagonal system.

    Banded LU on the acyclic band plus a rank-4 corner correction; small
    systems and ill-behaved corrections fall back to a dense solve.
    """
    n = a.n
    if n <= 8:
        return np.linalg.solve(a.todense(), b)
    dg = a.diagonals
    ab = np.zeros((5, n))
    cols = np.arange(n)
    for o in _OFFSETS:
        j = cols + o
        inside = (j >= 0) & (j <= n - 1)
        ab[2 - o, j[inside]] = dg[o][inside]
    # Wrap entries live in rows {0, 1, n-2, n-1}: rank-4 correction.
    u = np.zeros((n, 4))
    u[0, 0] = u[1, 1] = u[n - 2, 2] = u[n - 1, 3] = 1.0
    vmat = np.zeros((n, 4))
    vmat[n - 1, 0] = dg[-1][0]
    vmat[n - 2, 0] = dg[-2][0]
    vmat[n - 1, 1] = dg[-2][1]
    vmat[0, 2] = dg[2][n - 2]
    vmat[0, 3] = dg[1][n - 1]
    vmat[1, 3] = dg[2][n - 1]
    try:
        block = np.column_stack([b, u])
        y = solve_banded((2, 2), ab, block)
        yb, yu = y[:, 0], y[:, 1:]
        cap = np.eye(4) + vmat.T @ yu
        x = yb - yu @ np.linalg.solve(cap, vmat.T @ yb)
    except np.linalg.LinAlgError:
        return np.linalg.solve(a.todense(), b)
    if not np.all(np.isfinite(x)):
        return np.linalg.solve(a.todense(), b)
    resid = np.max(np.abs(a.matvec(x) - b))
    if resid > 1e-8 * (1.0 + np.max(np.abs(b))):
        return np.linalg.solve(a.todense(), b)
    return x


# Implicit Euler ------------------------------------------------------------


def _newton_solve(v0: np.ndarray, dt: float, delta: float, cfg: SolverConfig):
    """Damped Newton for x - v0 - dt rhs(x) = 0; returns (x, iterations, dampings)."""

    def residual(x):
        return x - v0 - dt * rhs_values(x, delta)

    x = v0.copy()
    g = residual(x)
    gnorm = float(np.max(np.abs(g)))
    iters = 0
    dampings = 0
    while iters < cfg.newton_max_iter:
        mat = _newton_matrix(x, delta, dt)
        step = solve_cyclic_banded(mat, -g)
        iters += 1
        alpha = 1.0
        accepted = False
        saw_positive = False
        for _ in range(cfg.max_damping + 1):
            xn = x + alpha * step
            if np.min(xn) > cfg.positivity_floor:
                saw_positive = True
                gn = residual(xn)
                gn_norm = float(np.max(np.abs(gn)))
                if gn_norm <= gnorm:
                    accepted = True
                    break
            alpha *= 0.5
            dampings += 1
        if not accepted:
            if not saw_positive:
                raise PositivityLoss(f"no damping kept the iterate positive (dt={dt:.3e})")
            raise NewtonDivergence(f"residual stalled at {gnorm:.3e} (dt={dt:.3e})")
        x, g, gnorm = xn, gn, gn_norm
        if gnorm <= cfg.newton_tol:
            return x, iters, dampings
    raise NewtonDivergence(f"no convergence within {cfg.newton_max_iter} iterations (dt={dt:.3e})")


def implicit_euler_step(rho: Density, dt: float, cfg: SolverConfig) -> tuple[Density, StepRecord]:
    """One backward Euler step of size dt from a strictly positive density."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if not is_positive(rho):
        raise PositivityRequired("implicit Euler step needs a strictly positive density")
    x, iters, dampings = _newton_solve(rho.values, dt, rho.grid.delta, cfg)
    out = density_from_values(rho.grid, x)
    rec = StepRecord(
        t=dt,
        dt=dt,
        newton_iterations=iters,
        damping_events=dampings,
        functionals=functional_values(out),
        flux=scheme_flux_values(x, rho.grid.delta) if cfg.record_flux else None,
    )
    return out, rec


class _TrajectoryBuilder:
    def __init__(self, grid: GridSpec, initial: Density, cfg: SolverConfig):
        self.grid = grid
        self.initial = initial
        self.cfg = cfg
        self.records: list[StepRecord] = []
        self.state_times: list[float] = []
        self.state_values: list[np.ndarray] = []

    def accept(self, t: float, dt: float, iters: int, dampings: int, values: np.ndarray) -> FunctionalValues:
        fv = functional_values(density_from_values(self.grid, values))
        fl = scheme_flux_values(values, self.grid.delta) if self.cfg.record_flux else None
        self.records.append(StepRecord(t, dt, iters, dampings, fv, fl))
        if (len(self.records) - 1) % self.cfg.store_stride == 0:
            self._store(t, values)
        return fv

    def _store(self, t: float, values: np.ndarray) -> None:
        self.state_times.append(t)
        self.state_values.append(values.copy())

    def finish(self, t: float, values: np.ndarray) -> Trajectory:
        if not self.state_times or self.state_times[-1] != t:
            if self.records:
                self._store(t, values)
        return Trajectory(
            grid=self.grid,
            initial=self.initial,
            records=tuple(self.records),
            state_times=tuple(self.state_times),
            state_values=tuple(self.state_values),
            config=self.cfg,
        )


def simulate(rho0: Density, cfg: SolverConfig) -> Trajectory:
    """Adaptive implicit Euler run until the entropy or time budget is hit."""
    if not is_positive(rho0):
        raise PositivityRequired("simulate needs an initial density in the positive cone")
    grid = rho0.grid
    delta = grid.delta
    build = _TrajectoryBuilder(grid, rho0, cfg)
    x = rho0.values.copy()
    t = 0.0
    dt = cfg.dt0_factor * delta
    entropy_now = functional_values(rho0).entropy
    while entropy_now > cfg.entropy_stop and t < cfg.t_max:
        if len(build.records) >= cfg.max_steps:
            raise StepFailure(f"exceeded {cfg.max_steps} accepted steps")
        dt_try = min(dt, cfg.t_max - t)
        while True:
            if dt_try < 1e-16 * delta:
                raise StepFailure(f"step size underflow at t={t:.6e}")
            try:
                xn, iters, dampings = _newton_solve(x, dt_try, delta, cfg)
            except (NewtonDivergence, PositivityLoss):
                dt_try *= cfg.shrink_factor
                continue
            if iters > cfg.shrink_threshold:
                dt_try *= cfg.shrink_factor
                continue
            break
        t += dt_try
        x = xn
        fv = build.accept(t, dt_try, iters, dampings, x)
        entropy_now = fv.entropy
        dt = dt_try * cfg.grow_factor if iters < cfg.grow_threshold else dt_try
    return build.finish(t, x)


def simulate_fixed(rho0: Density, dt: float, n_steps: int, cfg: SolverConfig, t0: float = 0.0) -> Trajectory:
    """Fixed-step implicit Euler run (refinement studies); no adaptivity."""
    if not is_positive(rho0):
        raise PositivityRequired("simulate_fixed needs a strictly positive density")
    build = _TrajectoryBuilder(rho0.grid, rho0, cfg)
    x = rho0.values.copy()
    t = t0
    for k in range(n_steps):
        x, iters, dampings = _newton_solve(x, dt, rho0.grid.delta, cfg)
        t = t0 + (k + 1) * dt
        build.accept(t, dt, iters, dampings, x)
    return build.finish(t, x)


def evolve_pair(rho0: Density, eta0: Density, cfg: SolverConfig) -> tuple[Trajectory, Trajectory]:
    """Evolve two initial states on one shared accepted time grid.

    A step is accepted only when Newton succeeds for both states; the
    controller reacts to the larger of the two iteration counts, so both
    trajectories share identical record times.
    """
    if rho0.grid != eta0.grid:
        raise ValueError("grid mismatch")
    if not (is_positive(rho0) and is_positive(eta0)):
        raise PositivityRequired("evolve_pair needs strictly positive densities")
    grid = rho0.grid
    delta = grid.delta
    ba = _TrajectoryBuilder(grid, rho0, cfg)
    bb = _TrajectoryBuilder(grid, eta0, cfg)
    xa = rho0.values.copy()
    xb = eta0.values.copy()
    t = 0.0
    dt = cfg.dt0_factor * delta
    ha = functional_values(rho0).entropy
    hb = functional_values(eta0).entropy
    while max(ha, hb) > cfg.entropy_stop and t < cfg.t_max:
        if len(ba.records) >= cfg.max_steps:
            raise StepFailure(f"exceeded {cfg.max_steps} accepted steps")
        dt_try = min(dt, cfg.t_max - t)
        while True:
            if dt_try < 1e-16 * delta:
                raise StepFailure(f"step size underflow at t={t:.6e}")
            try:
                xan, ia, da = _newton_solve(xa, dt_try, delta, cfg)
                xbn, ib, db = _newton_solve(xb, dt_try, delta, cfg)
            except (NewtonDivergence, PositivityLoss):
                dt_try *= cfg.shrink_factor
                continue
            iters = max(ia, ib)
            if iters > cfg.shrink_threshold:
                dt_try *= cfg.shrink_factor
                continue
            break
        t += dt_try
        xa, xb = xan, xbn
        ha = ba.accept(t, dt_try, ia, da, xa).entropy
        hb = bb.accept(t, dt_try, ib, db, xb).entropy
        dt = dt_try * cfg.grow_factor if iters < cfg.grow_threshold else dt_try
    return ba.finish(t, xa), bb.finish(t, xb)
