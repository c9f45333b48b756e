"""Self-contained property oracles for the functional inequalities.

Each suite samples or scans its inequality and reports the worst signed
margin (nonnegative means the inequality held), the location of the worst
case for reproduction, and a pass flag at the suite's tolerance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .density import density_from_values, random_positive_density
from .flow import Trajectory
from .functionals import (
    entropy,
    fisher,
    ggs_potential,
    laplacian_sqrt_energy,
    scheme_flux_values,
)
from .grid import (
    GridFunction,
    GridSpec,
    forward_diff_values,
    laplacian_values,
    poincare_constant,
)

LOG_SOBOLEV_CONSTANT = 25.0 / (8.0 * math.pi**2)


def short_time_decay_constant(grid: GridSpec, r: float) -> float:
    """Constant of the short-time entropy bound: r / (4 C_P (r+1)^(r+1))."""
    return r / (4.0 * poincare_constant(grid) * (r + 1.0) ** (r + 1.0))


@dataclass
class InequalityReport:
    """Outcome of one sampled or scanned inequality."""

    name: str
    samples: int
    worst_margin: float
    worst_case: dict
    tolerance: float
    passed: bool
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _finish(name: str, samples: int, margins, cases, tolerance: float, notes=None) -> InequalityReport:
    margins = np.asarray(margins, dtype=float)
    k = int(np.argmin(margins))
    worst = float(margins[k])
    return InequalityReport(
        name=name,
        samples=int(margins.size),
        worst_margin=worst,
        worst_case=cases[k],
        tolerance=tolerance,
        passed=bool(worst >= -tolerance),
        notes=notes or {},
    )


def smoothed_noise(rng: np.random.Generator, n: int, spike_prob: float = 0.15) -> np.ndarray:
    """Test-function generator: 3-point averaged uniforms, sometimes spiked."""
    u = rng.uniform(-1.0, 1.0, size=n)
    v = (u + np.roll(u, 1) + np.roll(u, -1)) / 3.0 if n >= 5 else u
    if rng.uniform() < spike_prob:
        v[rng.integers(0, n)] += rng.uniform(-8.0, 8.0)
    return v


def poincare_suite(grid: GridSpec, samples: int = 400, seed: int = 0) -> InequalityReport:
    """Zero-mean l2 mass against gradient energy, plus sharpness of the constant.

    Margins are normalized by the right-hand side; the lowest Fourier mode
    must saturate the constant to 1e-10 relative (reported in the notes).
    """
    rng = np.random.default_rng(seed)
    c = poincare_constant(grid)
    d = grid.delta
    margins, cases = [], []
    for k in range(samples):
        f = smoothed_noise(rng, grid.n)
        f -= np.mean(f)
        lhs = d * np.sum(f * f)
        rhs = c * d * np.sum(forward_diff_values(f, d) ** 2)
        margins.append((rhs - lhs) / max(1.0, rhs))
        cases.append({"sample": k, "lhs": float(lhs), "rhs": float(rhs)})
    mode = np.cos(2.0 * np.pi * d * np.arange(grid.n))
    mode -= np.mean(mode)
    lhs = d * np.sum(mode * mode)
    rhs = c * d * np.sum(forward_diff_values(mode, d) ** 2)
    saturation_gap = abs(rhs - lhs) / lhs
    margins.append((rhs - lhs) / max(1.0, rhs))
    cases.append({"sample": "lowest-mode", "lhs": float(lhs), "rhs": float(rhs)})
    rep = _finish("poincare", samples + 1, margins, cases, 1e-12,
                  notes={"constant": float(c), "saturation_gap": float(saturation_gap), "seed": seed})
    rep.passed = bool(rep.passed and saturation_gap <= 1e-10)
    return rep


def lsi_suite(grid: GridSpec, samples: int = 400, seed: int = 0) -> InequalityReport:
    """Logarithmic Sobolev inequality, in the normalized-function and density forms."""
    rng = np.random.default_rng(seed)
    d = grid.delta
    margins, cases = [], []
    for k in range(samples):
        f = np.abs(smoothed_noise(rng, grid.n)) + rng.uniform(1e-4, 0.5)
        f = f / math.sqrt(d * np.sum(f * f))
        lhs = d * np.sum(f * f * np.log(f * f))
        rhs = (25.0 / (16.0 * math.pi**2)) * d * np.sum(forward_diff_values(f, d) ** 2)
        margins.append((rhs - lhs) / max(1.0, abs(rhs)))
        cases.append({"sample": k, "form": "function", "lhs": float(lhs), "rhs": float(rhs)})

        rho = random_positive_density(grid, seed * samples + k, min_value=1e-4)
        lhs2 = entropy(rho)
        rhs2 = LOG_SOBOLEV_CONSTANT * fisher(rho)
        margins.append((rhs2 - lhs2) / max(1.0, abs(rhs2)))
        cases.append({"sample": k, "form": "density", "lhs": float(lhs2), "rhs": float(rhs2)})
    return _finish("log-sobolev", 2 * samples, margins, cases, 1e-12,
                   notes={"constant": LOG_SOBOLEV_CONSTANT, "seed": seed})


def gns_suite(grid: GridSpec, p: float, samples: int = 400, seed: int = 0) -> InequalityReport:
    """Interpolation of the l^p norm between l^2 and the discrete H^1 norm."""
    if p < 2.0:
        raise ValueError("p must be >= 2")
    rng = np.random.default_rng(seed)
    d = grid.delta
    theta = (p - 2.0) / p
    margins, cases = [], []
    for k in range(samples):
        v = smoothed_noise(rng, grid.n)
        lp = (d * np.sum(np.abs(v) ** p)) ** (1.0 / p)
        l2 = math.sqrt(d * np.sum(v * v))
        h1 = math.sqrt(l2 * l2 + d * np.sum(forward_diff_values(v, d) ** 2))
        rhs = l2 ** (1.0 - theta) * h1**theta
        margins.append((rhs - lp) / max(1.0, rhs))
        cases.append({"sample": k, "lp": float(lp), "rhs": float(rhs)})
    return _finish(f"gagliardo-nirenberg-p{p:g}", samples, margins, cases, 1e-12,
                   notes={"theta": theta, "seed": seed})


def interpolation_suite(grid: GridSpec, samples: int = 400, seed: int = 0) -> InequalityReport:
    """Gradient pairing bounded by curvature energy times l2 mass."""
    rng = np.random.default_rng(seed)
    d = grid.delta
    margins, cases = [], []
    for k in range(samples):
        v = smoothed_noise(rng, grid.n)
        w = smoothed_noise(rng, grid.n)
        lhs = d * np.sum(forward_diff_values(v, d) * forward_diff_values(w, d))
        rhs = math.sqrt(d * np.sum(laplacian_values(v, d) ** 2)) * math.sqrt(d * np.sum(w * w))
        margins.append((rhs - lhs) / max(1.0, abs(rhs)))
        cases.append({"sample": k, "lhs": float(lhs), "rhs": float(rhs)})
    return _finish("gradient-interpolation", samples, margins, cases, 1e-12, notes={"seed": seed})


def monster_scan(umax: float = 10.0, step: float = 0.01) -> InequalityReport:
    """Dense scan of the two-variable entropy-production inequality.

    (uv-1) log(uv) + ((u-1)^3/(u+1) + (v-1)^3/(v+1))/2 >= (u+v-2)^2/4 over
    the open square (0, umax]^2.
    """
    u = np.arange(step, umax + 0.5 * step, step)
    worst = math.inf
    arg = (0.0, 0.0)
    for v0 in u:
        uv = u * v0
        lhs = (uv - 1.0) * np.log(uv) + 0.5 * ((u - 1.0) ** 3 / (u + 1.0) + (v0 - 1.0) ** 3 / (v0 + 1.0))
        rhs = 0.25 * (u + v0 - 2.0) ** 2
        m = lhs - rhs
        k = int(np.argmin(m))
        if m[k] < worst:
            worst = float(m[k])
            arg = (float(u[k]), float(v0))
    n = u.size * u.size
    return InequalityReport(
        name="entropy-production-scan",
        samples=n,
        worst_margin=worst,
        worst_case={"u": arg[0], "v": arg[1]},
        tolerance=1e-12,
        passed=bool(worst >= -1e-12),
        notes={"umax": umax, "step": step},
    )


def elementary_log_scan(umax: float = 10.0, step: float = 0.01) -> InequalityReport:
    """Dense scan of (u - 1/v)^2 + (v - 1/u)^2 >= 2 (log uv)^2 on (0, umax]^2."""
    u = np.arange(step, umax + 0.5 * step, step)
    worst = math.inf
    arg = (0.0, 0.0)
    for v0 in u:
        lhs = (u - 1.0 / v0) ** 2 + (v0 - 1.0 / u) ** 2
        rhs = 2.0 * np.log(u * v0) ** 2
        m = lhs - rhs
        k = int(np.argmin(m))
        if m[k] < worst:
            worst = float(m[k])
            arg = (float(u[k]), float(v0))
    n = u.size * u.size
    return InequalityReport(
        name="elementary-log-scan",
        samples=n,
        worst_margin=worst,
        worst_case={"u": arg[0], "v": arg[1]},
        tolerance=1e-12,
        passed=bool(worst >= -1e-12),
        notes={"umax": umax, "step": step},
    )


def decay_suite(traj: Trajectory, rs: tuple[float, ...] = (1.0, 3.0)) -> InequalityReport:
    """Universal decay bounds along a recorded trajectory.

    Entropy <= 4 C_LSI^2 / t, Fisher <= 8 C_LSI / t, the tail curvature
    dissipation <= 4 C_LSI^2 / t (trapezoid over the recorded horizon, hence
    partial), and the short-time entropy bound for each requested exponent.
    """
    c = LOG_SOBOLEV_CONSTANT
    t = traj.times[1:]
    if t.size == 0:
        return InequalityReport(
            name="decay-bounds", samples=0, worst_margin=math.inf,
            worst_case={}, tolerance=1e-9, passed=True,
            notes={"c_lsi": c, "comment": "stationary run, nothing to check"},
        )
    h = traj.series("entropy")[1:]
    f = traj.series("fisher")[1:]
    margins, cases = [], []
    for name, vals, bound in (
        ("entropy", h, 4.0 * c * c / t),
        ("fisher", f, 8.0 * c / t),
    ):
        m = bound - vals
        k = int(np.argmin(m))
        margins.append(float(m[k]))
        cases.append({"bound": name, "t": float(t[k]), "value": float(vals[k]), "limit": float(bound[k])})

    energy = np.array(
        [laplacian_sqrt_energy(density_from_values(traj.grid, v)) for v in traj.state_values]
    )
    st = np.asarray(traj.state_times)
    if st.size >= 2:
        # Tail integral from each stored time to the end of the horizon.
        seg = 0.5 * (energy[1:] + energy[:-1]) * np.diff(st)
        tails = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
        m = 4.0 * c * c / st - tails
        k = int(np.argmin(m))
        margins.append(float(m[k]))
        cases.append({"bound": "tail-dissipation", "t": float(st[k]), "value": float(tails[k])})

    for r in rs:
        cr = short_time_decay_constant(traj.grid, r)
        bound = (cr * t) ** (-1.0 / r)
        m = bound - h
        k = int(np.argmin(m))
        margins.append(float(m[k]))
        cases.append({"bound": f"short-time-r{r:g}", "t": float(t[k]), "value": float(h[k]), "limit": float(bound[k])})

    return _finish("decay-bounds", len(margins), margins, cases, 1e-9,
                   notes={"c_lsi": c, "horizon": float(t[-1]) if t.size else 0.0, "tail": "partial"})


def ggs_duality_suite(grid: GridSpec, samples: int = 50, seed: int = 0) -> InequalityReport:
    """Numerical Legendre-transform check of the dissipation-potential pair.

    For random densities and feasible fluxes, the primal potential must equal
    sup_xi (<xi, w> - dual potential), computed here by independent scalar
    maximization per cell.  The notes record the constant ratio between the
    duality-consistent primal potential and the plain eta-sum: the printed
    eta-sum misses a 4/delta^4 factor, which this suite flags rather than
    hides.
    """
    rng = np.random.default_rng(seed)
    d = grid.delta
    margins, cases = [], []
    for k in range(samples):
        rho = random_positive_density(grid, seed + 7919 * k, min_value=0.05)
        w = 0.5 * scheme_flux_values(rho.values, d) * rng.uniform(0.0, 1.0)
        wf = GridFunction(grid, w)
        primal = ggs_potential(rho, wf)

        total = 0.0
        lim = 10.0 / (d * d)
        for j in range(grid.n):
            rj, wj = float(rho.values[j]), float(w[j])
            c2 = 2.0 / (d * d)

            def neg(xi):
                return -(xi * wj - rj * c2 * (c2 * math.expm1(-0.5 * d * d * xi) + xi))

            res = minimize_scalar(neg, bounds=(-lim, lim), method="bounded",
                                  options={"xatol": 1e-10, "maxiter": 500})
            total += d * (-res.fun)
        gap = abs(primal - total) / max(1.0, abs(primal))
        margins.append(1e-8 - gap)
        cases.append({"sample": k, "primal": float(primal), "legendre": float(total)})
    eta_sum_ratio = 4.0 / d**4
    return _finish("ggs-duality", samples, margins, cases, 0.0,
                   notes={"seed": seed,
                          "printed_eta_sum_deficit_factor": eta_sum_ratio,
                          "comment": "primal potential = (4/delta^4) * eta-sum; "
                                     "the bare eta-sum is not the Legendre dual"})
