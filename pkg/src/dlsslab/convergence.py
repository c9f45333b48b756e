"""Mesh-refinement studies: cross-grid errors, weak-form residuals, orders.

Levels of a refinement ladder are run at a fixed step proportional to
delta^2, so the first-order time error stays subdominant to the expected
second-order spatial consistency; states on different grids are compared by
exact integration of their piecewise-constant reconstructions over the
common refinement of the two meshes.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .density import ContinuousDatum, Density, cell_averages, density_from_values, project_initial
from .flow import SolverConfig, StepRecord, Trajectory, simulate, simulate_fixed
from .grid import GridSpec, laplacian_values, shift_minus, shift_plus


def _worker_count(n_jobs: int) -> int:
    cap = os.environ.get("DLSSLAB_THREADS")
    if cap:
        try:
            return max(1, min(n_jobs, int(cap)))
        except ValueError:
            return 1
    return max(1, min(n_jobs, os.cpu_count() or 1))


def _breakpoints(n: int) -> np.ndarray:
    # Cell boundaries (k + 1/2)/n, folded into [0, 1).
    return ((np.arange(n) + 0.5) / n) % 1.0


def piecewise_l2(grid_a: GridSpec, va: np.ndarray, grid_b: GridSpec, vb: np.ndarray) -> float:
    """Exact L2 distance of two piecewise-constant functions on the circle.

    Integrates over the common refinement of the two staggered meshes, so
    the value is exact up to rounding for any pair of cell counts.
    """
    if grid_a.n == grid_b.n:
        d = grid_a.delta
        return float(math.sqrt(d * np.sum((va - vb) ** 2)))
    cuts = np.sort(np.unique(np.concatenate([_breakpoints(grid_a.n), _breakpoints(grid_b.n)])))
    widths = np.diff(np.concatenate([cuts, [cuts[0] + 1.0]]))
    mids = (cuts + 0.5 * widths) % 1.0
    ka = np.floor(mids * grid_a.n + 0.5).astype(int) % grid_a.n
    kb = np.floor(mids * grid_b.n + 0.5).astype(int) % grid_b.n
    diff = va[ka] - vb[kb]
    return float(math.sqrt(np.sum(widths * diff * diff)))


def common_refinement_l2(rho_coarse: Density, rho_fine: Density) -> float:
    """Exact L2 distance of the reconstructions of two states."""
    return piecewise_l2(rho_coarse.grid, rho_coarse.values, rho_fine.grid, rho_fine.values)


def sqrt_refinement_l2(rho_coarse: Density, rho_fine: Density) -> float:
    """Cross-grid L2 distance of the square roots of two states."""
    return piecewise_l2(
        rho_coarse.grid, np.sqrt(rho_coarse.values), rho_fine.grid, np.sqrt(rho_fine.values)
    )


@dataclass(frozen=True)
class SpaceTimeTestFunction:
    """Separable test function bump(t) * cos(2 pi k x) with compact time support."""

    k: int
    t_start: float
    t_end: float

    def _bump(self, t: np.ndarray) -> np.ndarray:
        u = (2.0 * t - (self.t_start + self.t_end)) / (self.t_end - self.t_start)
        out = np.zeros_like(u)
        inside = np.abs(u) < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
        return out

    def _bump_dt(self, t: np.ndarray) -> np.ndarray:
        u = (2.0 * t - (self.t_start + self.t_end)) / (self.t_end - self.t_start)
        out = np.zeros_like(u)
        inside = np.abs(u) < 1.0
        ui = u[inside]
        out[inside] = np.exp(-1.0 / (1.0 - ui**2)) * (-2.0 * ui / (1.0 - ui**2) ** 2)
        return out * (2.0 / (self.t_end - self.t_start))

    def spatial_cell_average(self, grid: GridSpec) -> np.ndarray:
        """Exact cell averages of cos(2 pi k x)."""
        x = grid.centers()
        kd = np.pi * self.k * grid.delta
        damp = np.sin(kd) / kd if self.k != 0 else 1.0
        return np.cos(2.0 * np.pi * self.k * x) * damp

    def dt_cell_average(self, t: float, grid: GridSpec) -> np.ndarray:
        return float(self._bump_dt(np.asarray([t]))[0]) * self.spatial_cell_average(grid)

    def dxx_cell_average(self, t: float, grid: GridSpec) -> np.ndarray:
        factor = -((2.0 * np.pi * self.k) ** 2)
        return float(self._bump(np.asarray([t]))[0]) * factor * self.spatial_cell_average(grid)


def weak_residual(traj: Trajectory, testfn: SpaceTimeTestFunction) -> float:
    """Residual of the weak form of the evolution against one test function.

    | int dt-part - 2 * int dxx-part | with the nonlinear term evaluated as
    sqrt(rho) lap sqrt(rho) - ((fdiff sqrt rho)^2 + (bdiff sqrt rho)^2)/2 and
    trapezoidal time integration over the recorded states.
    """
    grid = traj.grid
    d = grid.delta
    times = np.concatenate([[0.0], np.asarray(traj.state_times)])
    states = [traj.initial.values] + [v for v in traj.state_values]
    a_vals = np.empty(times.size)
    b_vals = np.empty(times.size)
    for i, (t, v) in enumerate(zip(times, states)):
        s = np.sqrt(v)
        lap_s = laplacian_values(s, d)
        fplus = (shift_plus(s) - s) / d
        fminus = (s - shift_minus(s)) / d
        nonlinear = s * lap_s - 0.5 * (fplus * fplus + fminus * fminus)
        a_vals[i] = d * np.sum(testfn.dt_cell_average(t, grid) * v)
        b_vals[i] = d * np.sum(testfn.dxx_cell_average(t, grid) * nonlinear)
    lhs = np.trapezoid(a_vals, times)
    rhs = 2.0 * np.trapezoid(b_vals, times)
    return float(abs(lhs - rhs))


@dataclass(frozen=True)
class RefinementStudy:
    """Cross-grid errors, weak residuals, and empirical orders of one ladder.

    e_l2_* are exact L2 distances of the piecewise-constant reconstructions
    between consecutive levels; their ratio is pinned near 2 (order one) by
    the representation error of any smooth profile, so the spatial order of
    the scheme itself is estimated from the shared-cell-center differences
    e_center_*, which are free of that floor.
    """

    datum: str
    ladder: tuple[int, ...]
    horizon: float
    window: tuple[float, float]
    comparison_times: tuple[float, ...]
    e_l2_rho: tuple[float, ...]
    e_l2_sqrt: tuple[float, ...]
    e_center_rho: tuple[float, ...]
    e_center_sqrt: tuple[float, ...]
    weak_residuals: tuple[float, ...]
    order_rho: float
    order_sqrt: float
    notes: dict = field(default_factory=dict)


def _fixed_run(rho0: Density, segment_ends: np.ndarray, dt_target: float, cfg: SolverConfig):
    """Chain of fixed-step runs hitting every segment end exactly."""
    state = rho0
    t = 0.0
    records: list[StepRecord] = []
    state_times: list[float] = []
    state_values: list[np.ndarray] = []
    hits: list[Density] = []
    for t_end in segment_ends:
        span = t_end - t
        steps = max(1, int(math.ceil(span / dt_target)))
        seg = simulate_fixed(state, span / steps, steps, cfg, t0=t)
        records.extend(seg.records)
        state_times.extend(seg.state_times)
        state_values.extend(v for v in seg.state_values)
        state = seg.final_density
        t = t_end
        hits.append(state)
    traj = Trajectory(
        grid=rho0.grid,
        initial=rho0,
        records=tuple(records),
        state_times=tuple(state_times),
        state_values=tuple(state_values),
        config=cfg,
    )
    return traj, hits


def _center_l2(coarse: Density, fine: Density) -> tuple[float, float]:
    """Mesh l2 differences at the shared cell centers of a nested level pair."""
    if fine.grid.n != 2 * coarse.grid.n:
        raise ValueError("center comparison needs consecutive doubling")
    d = coarse.grid.delta
    diff = coarse.values - fine.values[0::2]
    diff_sqrt = np.sqrt(coarse.values) - np.sqrt(fine.values[0::2])
    return (
        float(math.sqrt(d * np.sum(diff * diff))),
        float(math.sqrt(d * np.sum(diff_sqrt * diff_sqrt))),
    )


def study_initial(datum: ContinuousDatum, grid: GridSpec, lift: bool) -> Density:
    """Level initialization for refinement studies.

    Strictly positive data are discretized by exact cell averages (lift=False)
    so that levels agree to second order at shared centers; the positivity
    lift adds a level-dependent first-order offset that masks the scheme's
    spatial order and is only needed for data with vacuum.
    """
    if lift:
        return project_initial(datum, grid)
    avg = cell_averages(datum, grid)
    avg = avg / (grid.delta * np.sum(avg))
    if np.min(avg) <= 0.0:
        raise ValueError("cell-average initialization needs a strictly positive datum")
    return density_from_values(grid, avg)


def run_study(
    datum: ContinuousDatum,
    ladder: tuple[int, ...] = (32, 64, 128),
    dt0_factor: float = 1e-2,
    entropy_drop: float = 10.0,
    window_start: float = 0.2,
    n_compare: int = 9,
    wave_number: int = 1,
    lift_initial: bool = False,
    solver: SolverConfig | None = None,
) -> RefinementStudy:
    """Refinement study across a ladder of grids.

    The horizon T is where an adaptive run on the coarsest grid has lost the
    requested entropy factor; every level is then re-run at fixed step
    dt0_factor * delta^2 hitting the comparison times exactly.  Errors are
    averaged over the comparison window [window_start*T, T]; the empirical
    order of the scheme is log2 of the ratio of consecutive center-sampled
    errors.  The acceptance band for the order rests on the second-order
    consistency expansion of the flux, not on a proven rate.
    """
    if len(ladder) < 3:
        raise ValueError("need at least three ladder levels for an order estimate")
    if any(b != 2 * a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("ladder levels must double")
    base_cfg = solver or SolverConfig()

    from .functionals import entropy as _entropy

    coarse_grid = GridSpec(ladder[0])
    rho0_coarse = study_initial(datum, coarse_grid, lift_initial)
    h0 = _entropy(rho0_coarse)
    probe_cfg = SolverConfig(entropy_stop=h0 / entropy_drop, t_max=50.0)
    probe = simulate(rho0_coarse, probe_cfg)
    # Stationary data stop the probe immediately; any short horizon will do.
    horizon = probe.records[-1].t if probe.records else 0.01 * coarse_grid.delta

    t_lo = window_start * horizon
    compare = np.linspace(t_lo, horizon, n_compare)
    segment_ends = np.concatenate([[t_lo], compare[1:]])

    def run_level(n: int):
        grid = GridSpec(n)
        rho0 = study_initial(datum, grid, lift_initial)
        dt_target = dt0_factor * grid.delta**2
        cfg = SolverConfig(newton_tol=base_cfg.newton_tol, entropy_stop=0.0, t_max=np.inf)
        return _fixed_run(rho0, segment_ends, dt_target, cfg)

    # Levels are independent; results are gathered in ladder order.
    workers = _worker_count(len(ladder))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_level, ladder))
    else:
        results = [run_level(n) for n in ladder]
    trajectories = [traj for traj, _ in results]
    level_states = [hits for _, hits in results]

    e_rho, e_sqrt, ec_rho, ec_sqrt = [], [], [], []
    for lvl in range(len(ladder) - 1):
        pairs = list(zip(level_states[lvl], level_states[lvl + 1]))
        e_rho.append(float(np.mean([common_refinement_l2(a, b) for a, b in pairs])))
        e_sqrt.append(float(np.mean([sqrt_refinement_l2(a, b) for a, b in pairs])))
        centers = [_center_l2(a, b) for a, b in pairs]
        ec_rho.append(float(np.mean([c[0] for c in centers])))
        ec_sqrt.append(float(np.mean([c[1] for c in centers])))

    testfn = SpaceTimeTestFunction(k=wave_number, t_start=t_lo, t_end=horizon)
    residuals = [weak_residual(traj, testfn) for traj in trajectories]

    def _order(errs):
        return float(np.log2(errs[0] / errs[1])) if errs[1] > 0.0 else math.inf

    return RefinementStudy(
        datum=datum.name,
        ladder=tuple(ladder),
        horizon=float(horizon),
        window=(float(t_lo), float(horizon)),
        comparison_times=tuple(float(t) for t in compare),
        e_l2_rho=tuple(e_rho),
        e_l2_sqrt=tuple(e_sqrt),
        e_center_rho=tuple(ec_rho),
        e_center_sqrt=tuple(ec_sqrt),
        weak_residuals=tuple(float(r) for r in residuals),
        order_rho=_order(ec_rho),
        order_sqrt=_order(ec_sqrt),
        notes={
            "dt_rule": f"dt = {dt0_factor:g} * delta^2",
            "initialization": "lifted" if lift_initial else "cell-average",
            "order_band_heuristic": "second-order consistency expansion, not a proven rate",
            "order_reconstruction_rho": _order(e_rho),
            "order_reconstruction_sqrt": _order(e_sqrt),
            "reconstruction_floor": "piecewise-constant representation error caps the reconstruction-L2 order at one",
        },
    )
