#!/usr/bin/env python3
"""Render figure-style images from the harness CSV tables.

Two kinds:
  snapshots - log-scale solution profiles at selected times, from a states
              table (t, rho_1..rho_N per row);
  lyapunov  - semi-log decay of the four monitored functionals from a
              Lyapunov table (t, entropy, fisher, hellinger_uniform,
              heat_capacity), with a least-squares exponential-rate fit on
              the entropy tail.

The scripts are read-only over their inputs and deterministic.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

MONOTONE_TOL = 1e-9


def read_table(path: str):
    """CSV with an optional leading comment line; returns (header, data)."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"input table not found: {path}")
    header = None
    rows = []
    with open(p) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append([float(x) if x else np.nan for x in line.split(",")])
    if header is None or not rows:
        raise ValueError(f"input table is empty: {path}")
    return header, np.asarray(rows)


def pick_snapshot_rows(times_available: np.ndarray, requested) -> list[int]:
    if requested:
        return [int(np.argmin(np.abs(times_available - t))) for t in requested]
    # Default: initial time plus up to five snapshots log-spaced over t > 0.
    pos = np.flatnonzero(times_available > 0.0)
    picks = [0]
    if pos.size:
        targets = np.geomspace(times_available[pos[0]], times_available[pos[-1]], num=min(5, pos.size))
        picks += [int(np.argmin(np.abs(times_available - t))) for t in targets]
    return sorted(set(picks))


def plot_solution_snapshots(states_csv: str, times, out: str) -> str:
    header, data = read_table(states_csv)
    if header[0] != "t" or len(header) < 3:
        raise ValueError(f"{states_csv}: expected a states table with columns t,rho_1,...")
    t = data[:, 0]
    profiles = data[:, 1:]
    n = profiles.shape[1]
    x = (np.arange(n) + 0.0) / n
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for idx in pick_snapshot_rows(t, times):
        ax.semilogy(x, profiles[idx], lw=1.2, label=f"t={t[idx]:.3g}")
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.legend(fontsize=8, ncol=2)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def fit_exponential_rate(t: np.ndarray, h: np.ndarray, window=None) -> float:
    """Least-squares slope of log h over a time window.

    Default window: the final decade of decay, i.e. rows with h within a
    factor ten of the last positive value.
    """
    pos = h > 0.0
    t, h = t[pos], h[pos]
    if t.size < 3:
        raise ValueError("not enough positive entropy samples for a rate fit")
    if window is not None:
        lo, hi = window
        if not (t[0] <= lo < hi <= t[-1] + 1e-30):
            raise ValueError(f"fit window [{lo}, {hi}] outside data range [{t[0]}, {t[-1]}]")
        mask = (t >= lo) & (t <= hi)
    else:
        mask = h <= 10.0 * h[-1]
        if np.count_nonzero(mask) < 3:
            mask = np.zeros_like(mask)
            mask[-min(10, t.size):] = True
    tt, hh = t[mask], np.log(h[mask])
    if tt.size < 2:
        raise ValueError("fit window selects fewer than two samples")
    a = np.vstack([tt, np.ones_like(tt)]).T
    slope, _ = np.linalg.lstsq(a, hh, rcond=None)[0]
    return float(slope)


def assert_monotone(header, data) -> None:
    for col in range(1, data.shape[1]):
        series = data[:, col]
        rises = np.diff(series) - MONOTONE_TOL
        if np.any(rises > 0.0):
            k = int(np.argmax(rises > 0.0))
            raise ValueError(
                f"column {header[col]!r} increases at row {k + 1} "
                f"({series[k]:.6e} -> {series[k + 1]:.6e}); refusing to plot"
            )


def plot_lyapunov(diag_csv: str, out: str, fit_window=None):
    header, data = read_table(diag_csv)
    if header[0] != "t":
        raise ValueError(f"{diag_csv}: first column must be t")
    wanted = ["entropy", "fisher", "hellinger_uniform", "heat_capacity"]
    cols = [header.index(c) for c in wanted if c in header]
    if "entropy" not in header:
        raise ValueError(f"{diag_csv}: no entropy column")
    view = data[:, [0] + cols]
    assert_monotone(["t"] + [header[c] for c in cols], view)

    t = data[:, 0]
    rate = fit_exponential_rate(t, data[:, header.index("entropy")], fit_window)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for c in cols:
        series = data[:, c]
        mask = series > 0.0
        ax.semilogy(t[mask], series[mask], lw=1.2, label=header[c])
    ax.set_xlabel("t")
    ax.set_ylabel("value")
    ax.set_title(f"fitted entropy tail rate: {rate:.4g}")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out, rate


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--kind", choices=("snapshots", "lyapunov"), required=True)
    parser.add_argument("--in", dest="input", required=True, help="input CSV table")
    parser.add_argument("--times", type=float, nargs="*", help="snapshot times (nearest rows)")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--fit-window", type=float, nargs=2, metavar=("T0", "T1"),
                        help="time window for the exponential-rate fit")
    args = parser.parse_args(argv)
    try:
        if args.kind == "snapshots":
            plot_solution_snapshots(args.input, args.times, args.out)
            print(f"wrote {args.out}")
        else:
            _, rate = plot_lyapunov(args.input, args.out, tuple(args.fit_window) if args.fit_window else None)
            print(f"wrote {args.out}; fitted entropy tail rate {rate:.6g}")
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
