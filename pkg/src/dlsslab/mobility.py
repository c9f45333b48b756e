"""Three-point mobility built from the logarithmic and geometric means.

The mobility weighting the discrete flux is M(r0, r+, r-) = Lambda(r0, G(r+, r-)),
the logarithmic mean of the center value and the geometric mean of its
neighbors.  Near equal arguments the logarithmic mean is evaluated by a
quadratic expansion to avoid cancellation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .density import Density
from .grid import GridSpec, shift_minus, shift_plus

# Switch to the series branch when |log(a/b)| falls below this; the quadratic
# correction then carries an O(h^4) relative error ~ h^4/1920.
LOG_MEAN_SWITCH = 1e-8


def _as_broadcast(a, b):
    scalar = np.ndim(a) == 0 and np.ndim(b) == 0
    aa = np.atleast_1d(np.asarray(a, dtype=float))
    bb = np.atleast_1d(np.asarray(b, dtype=float))
    aa, bb = np.broadcast_arrays(aa, bb)
    return scalar, aa, bb


def geometric_mean(a, b):
    """sqrt(a*b), elementwise on arrays."""
    scalar, aa, bb = _as_broadcast(a, b)
    out = np.sqrt(aa * bb)
    return float(out[0]) if scalar else out


def logarithmic_mean(a, b):
    """(a-b)/(log a - log b), extended by a at a=b and by 0 on the boundary."""
    scalar, aa, bb = _as_broadcast(a, b)
    out = np.zeros(aa.shape)
    pos = (aa > 0.0) & (bb > 0.0)
    ap, bp = aa[pos], bb[pos]
    h = np.log(ap) - np.log(bp)
    vals = np.empty_like(h)
    near = np.abs(h) < LOG_MEAN_SWITCH
    m = np.sqrt(ap * bp)
    vals[near] = m[near] * (1.0 + h[near] ** 2 / 24.0)
    far = ~near
    vals[far] = (ap[far] - bp[far]) / h[far]
    out[pos] = vals
    return float(out[0]) if scalar else out


def mobility(r0, rp, rm):
    """Three-point mobility: logarithmic mean of r0 and the neighbor geometric mean.

    Zero whenever any argument is zero; equals r0 when r+ r- = r0^2.
    """
    scalar = np.ndim(r0) == 0 and np.ndim(rp) == 0 and np.ndim(rm) == 0
    r0a = np.atleast_1d(np.asarray(r0, dtype=float))
    rpa = np.atleast_1d(np.asarray(rp, dtype=float))
    rma = np.atleast_1d(np.asarray(rm, dtype=float))
    r0a, rpa, rma = np.broadcast_arrays(r0a, rpa, rma)
    g = np.where((rpa > 0.0) & (rma > 0.0), np.sqrt(rpa * rma), 0.0)
    out = np.asarray(logarithmic_mean(r0a, g))
    return float(out[0]) if scalar else out


def _log_mean_derivs(h):
    """d/da and d/db of the logarithmic mean, as functions of h = log(a/b).

    In closed form (h - 1 + exp(-h))/h^2 and (exp(h) - 1 - h)/h^2, with a
    cubic series below |h| = 1e-5.
    """
    h = np.asarray(h, dtype=float)
    da = np.empty_like(h)
    db = np.empty_like(h)
    near = np.abs(h) < 1e-5
    hn = h[near]
    da[near] = 0.5 - hn / 6.0 + hn**2 / 24.0 - hn**3 / 120.0
    db[near] = 0.5 + hn / 6.0 + hn**2 / 24.0 + hn**3 / 120.0
    hf = h[~near]
    da[~near] = (hf - 1.0 + np.exp(-hf)) / hf**2
    db[~near] = (np.exp(hf) - 1.0 - hf) / hf**2
    return da, db


def mobility_partials(r0, rp, rm):
    """Gradient of the mobility in (r0, r+, r-), for strictly positive arguments."""
    r0 = np.asarray(r0, dtype=float)
    rp = np.asarray(rp, dtype=float)
    rm = np.asarray(rm, dtype=float)
    if np.any(r0 <= 0.0) or np.any(rp <= 0.0) or np.any(rm <= 0.0):
        raise ValueError("mobility_partials needs strictly positive arguments")
    g = np.sqrt(rp * rm)
    da, db = _log_mean_derivs(np.log(r0) - np.log(g))
    dp = db * g / (2.0 * rp)
    dm = db * g / (2.0 * rm)
    return da, dp, dm


@dataclass(frozen=True)
class MobilityEval:
    """Per-cell mobility values M_k(rho) = M(rho_k, rho_{k-1}, rho_{k+1})."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)


def mobility_values(rho_values: np.ndarray) -> np.ndarray:
    return mobility(rho_values, shift_plus(rho_values), shift_minus(rho_values))


def mobility_field(rho: Density) -> MobilityEval:
    """Stencil application of the mobility over all cells of a density."""
    return MobilityEval(rho.grid, mobility_values(rho.values))


@dataclass
class AdmissibilityReport:
    """Sampled verification of the structural mobility properties."""

    samples: int
    seed: int
    worst: dict
    counterexamples: list
    passed: bool


def admissibility_report(samples: int = 2000, seed: int = 0) -> AdmissibilityReport:
    """Spot-check continuity, symmetry, bounds, homogeneity, concavity, comparison.

    Draws log-uniform triples over many scales plus boundary touches; any
    violation beyond 1e-12 (relative where the quantity scales) is recorded
    as a counterexample.
    """
    rng = np.random.default_rng(seed)
    tol = 1e-12
    worst = {
        "symmetry": 0.0,
        "bounds": np.inf,
        "homogeneity": np.inf,
        "concavity": np.inf,
        "comparison": np.inf,
        "finite": True,
    }
    bad: list = []

    triples = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), size=(samples, 3)))
    zero_rows = rng.uniform(size=samples) < 0.1
    zero_cols = rng.integers(0, 3, size=samples)
    triples[zero_rows, zero_cols[zero_rows]] = 0.0

    for r0, rp, rm in triples:
        m = mobility(r0, rp, rm)
        if not np.isfinite(m):
            worst["finite"] = False
            bad.append({"property": "finite", "triple": [r0, rp, rm]})
            continue
        sym_gap = abs(m - mobility(r0, rm, rp))
        worst["symmetry"] = max(worst["symmetry"], sym_gap)
        if sym_gap > 0.0:
            bad.append({"property": "symmetry", "triple": [r0, rp, rm], "gap": sym_gap})

        lo, hi = min(r0, rp, rm), max(r0, rp, rm)
        scale = max(1.0, hi)
        bmargin = min(m - lo, hi - m) / scale
        worst["bounds"] = min(worst["bounds"], bmargin)
        if bmargin < -tol:
            bad.append({"property": "bounds", "triple": [r0, rp, rm], "margin": bmargin})

        lam = rng.uniform(0.25, 4.0)
        hmargin = -abs(mobility(lam * r0, lam * rp, lam * rm) - lam * m) / max(1.0, lam * m)
        worst["homogeneity"] = min(worst["homogeneity"], hmargin)
        if hmargin < -tol:
            bad.append({"property": "homogeneity", "triple": [r0, rp, rm], "margin": hmargin})

        if r0 > 0.0 and rp > 0.0 and rm > 0.0:
            cmargin = (
                min(
                    m - logarithmic_mean(r0, min(rp, rm)),
                    logarithmic_mean(r0, max(rp, rm)) - m,
                )
                / scale
            )
            worst["comparison"] = min(worst["comparison"], cmargin)
            if cmargin < -tol:
                bad.append({"property": "comparison", "triple": [r0, rp, rm], "margin": cmargin})

    # Midpoint concavity on independent pairs of triples.
    pairs = rng.uniform(1e-3, 1e3, size=(samples, 2, 3))
    for r, s in pairs:
        mid = mobility(*(0.5 * (r + s)))
        avg = 0.5 * (mobility(*r) + mobility(*s))
        margin = (mid - avg) / max(1.0, abs(avg))
        worst["concavity"] = min(worst["concavity"], margin)
        if margin < -tol:
            bad.append({"property": "concavity", "r": list(r), "s": list(s), "margin": margin})

    passed = bool(worst["finite"]) and not bad
    worst = {k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v)) for k, v in worst.items()}
    return AdmissibilityReport(samples=samples, seed=seed, worst=worst, counterexamples=bad, passed=passed)
