"""Command-line harness: simulate | convergence | metric | check | figures-data.

Configuration is a flat key=value text file, overridden by command-line
flags.  Every output file carries the artifact version and a hash of the
resolved configuration; floating-point fields are written with 17
significant digits so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .convergence import run_study
from .density import (
    ContinuousDatum,
    Density,
    bls_datum,
    density_from_values,
    hellinger,
    project_initial,
    random_positive_density,
    uniform_datum,
)
from .flow import SolverConfig, SolverError, simulate
from .grid import GridSpec
from .inequalities import (
    decay_suite,
    elementary_log_scan,
    ggs_duality_suite,
    gns_suite,
    interpolation_suite,
    lsi_suite,
    monster_scan,
    poincare_suite,
)
from .metric import MetricConfig, action, connecting_curve, distance_lower, geodesic
from .mobility import admissibility_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_SUITE = 4


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def parse_config_file(path: str) -> dict:
    out: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def resolve_options(args: argparse.Namespace, allowed: dict) -> dict:
    """Merge config file and flags; validate keys and types with named errors."""
    merged: dict[str, str] = {}
    if getattr(args, "config", None):
        for key, value in parse_config_file(args.config).items():
            if key not in allowed:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = value
    for key in allowed:
        flag = key.replace("-", "_")
        val = getattr(args, flag, None)
        if val is not None:
            merged[key] = str(val)
    out = {}
    for key, (caster, default) in allowed.items():
        raw = merged.get(key)
        if raw is None:
            out[key] = default
            continue
        try:
            out[key] = caster(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r}: invalid value {raw!r} ({exc})") from exc
    return out


def config_hash(options: dict) -> str:
    canon = "\n".join(f"{k}={_fmt(v)}" for k, v in sorted(options.items()))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _header_line(chash: str) -> str:
    return f"# dlsslab {__version__} config={chash}"


def write_csv(path: Path, header: list[str], rows, chash: str) -> None:
    with open(path, "w") as fh:
        fh.write(_header_line(chash) + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_json(path: Path, payload: dict, chash: str) -> None:
    body = {"artifact_version": __version__, "config_hash": chash}
    body.update(payload)
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _load_numeric_rows(path: str) -> np.ndarray:
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(x) for x in line.split(",")])
        except ValueError:
            continue  # header row
    if not rows:
        raise ConfigError(f"no numeric rows in {path!r}")
    return np.asarray(rows)


def parse_datum(spec: str, grid: GridSpec):
    """Initial-datum specifier: uniform | bls:m=INT,eps=REAL | csv:PATH."""
    if spec == "uniform":
        return project_initial(uniform_datum(), grid)
    if spec.startswith("bls:"):
        params = {}
        for item in spec[4:].split(","):
            if "=" not in item:
                raise ConfigError(f"datum: expected m=...,eps=..., got {spec!r}")
            k, v = item.split("=", 1)
            params[k.strip()] = v.strip()
        try:
            m = int(params.pop("m"))
            eps = float(params.pop("eps"))
        except KeyError as exc:
            raise ConfigError(f"datum: missing key {exc} in {spec!r}") from exc
        if params:
            raise ConfigError(f"datum: unknown keys {sorted(params)} in {spec!r}")
        return project_initial(bls_datum(m, eps), grid)
    if spec.startswith("csv:"):
        path = spec[4:]
        row = _load_numeric_rows(path)[-1]
        values = row[1:] if row.size == grid.n + 1 else row
        if values.size != grid.n:
            raise ConfigError(f"datum csv {path!r}: expected {grid.n} values, found {values.size}")
        return density_from_values(grid, values)
    raise ConfigError(f"datum: unrecognized specifier {spec!r}")


def continuous_datum_from_spec(spec: str) -> ContinuousDatum:
    if spec == "uniform":
        return uniform_datum()
    if spec.startswith("bls:"):
        params = dict(item.split("=", 1) for item in spec[4:].split(","))
        return bls_datum(int(params["m"]), float(params["eps"]))
    raise ConfigError(f"convergence needs a continuous datum, got {spec!r}")


def _solver_config(opt: dict) -> SolverConfig:
    return SolverConfig(
        dt0_factor=opt["dt0-factor"],
        newton_tol=opt["newton-tol"],
        newton_max_iter=opt["newton-max-iter"],
        shrink_threshold=opt["shrink-threshold"],
        grow_threshold=opt["grow-threshold"],
        grow_factor=opt["grow-factor"],
        shrink_factor=opt["shrink-factor"],
        entropy_stop=opt["entropy-stop"],
        t_max=opt["t-max"],
        positivity_floor=opt["positivity-floor"],
        store_stride=1,
    )


_SOLVER_KEYS = {
    "dt0-factor": (float, 1e-2),
    "newton-tol": (float, 1e-11),
    "newton-max-iter": (int, 25),
    "shrink-threshold": (int, 4),
    "grow-threshold": (int, 3),
    "grow-factor": (float, 1.05),
    "shrink-factor": (float, 0.5),
    "entropy-stop": (float, 1e-14),
    "t-max": (float, math.inf),
    "positivity-floor": (float, 1e-300),
}


def _thread_count(n_jobs: int) -> int:
    cap = os.environ.get("DLSSLAB_THREADS")
    if cap:
        try:
            return max(1, min(n_jobs, int(cap)))
        except ValueError as exc:
            raise ConfigError(f"DLSSLAB_THREADS: invalid value {cap!r}") from exc
    return max(1, min(n_jobs, os.cpu_count() or 1))


def _decay_rate_fit(times: np.ndarray, entropies: np.ndarray) -> float | None:
    """Least-squares slope of log entropy over the final decade of decay."""
    pos = entropies > 0.0
    t, h = times[pos], entropies[pos]
    if h.size < 3:
        return None
    h_final = h[-1]
    band = h <= 10.0 * h_final
    if np.count_nonzero(band) < 3:
        band = np.zeros_like(band)
        band[-min(10, h.size):] = True
    tt, hh = t[band], np.log(h[band])
    a = np.vstack([tt, np.ones_like(tt)]).T
    slope, _ = np.linalg.lstsq(a, hh, rcond=None)[0]
    return float(slope)


def _diagnostics_rows(traj):
    from .functionals import functional_values

    rows = []
    f0 = functional_values(traj.initial)
    rows.append([0.0, 0.0, 0, f0.mass, f0.entropy, f0.fisher, f0.heat_capacity, f0.min_density])
    for r in traj.records:
        f = r.functionals
        rows.append([r.t, r.dt, r.newton_iterations, f.mass, f.entropy, f.fisher, f.heat_capacity, f.min_density])
    return rows


def cmd_simulate(args: argparse.Namespace) -> int:
    allowed = {
        "n": (int, 64),
        "datum": (str, "bls:m=2,eps=0.001"),
        "seed": (int, 0),
        "state-stride": (int, 10),
        **_SOLVER_KEYS,
    }
    opt = resolve_options(args, allowed)
    chash = config_hash(opt)
    outdir = Path(args.out or "out-simulate")
    outdir.mkdir(parents=True, exist_ok=True)
    grid = GridSpec(opt["n"])
    rho0 = parse_datum(opt["datum"], grid)
    cfg = _solver_config(opt)
    traj = simulate(rho0, cfg)

    write_csv(
        outdir / "diagnostics.csv",
        ["t", "dt", "newton_iters", "mass", "entropy", "fisher", "heat_capacity", "min_rho"],
        _diagnostics_rows(traj),
        chash,
    )
    stride = max(1, opt["state-stride"])
    state_rows = [[0.0, *traj.initial.values]]
    for k, (t, v) in enumerate(zip(traj.state_times, traj.state_values)):
        if k % stride == 0 or k == len(traj.state_times) - 1:
            state_rows.append([t, *v])
    write_csv(
        outdir / "states.csv",
        ["t"] + [f"rho_{k + 1}" for k in range(grid.n)],
        state_rows,
        chash,
    )
    h = traj.series("entropy")
    summary = {
        "final_time": float(traj.times[-1]),
        "steps": len(traj.records),
        "min_newton_iterations": int(min((r.newton_iterations for r in traj.records), default=0)),
        "max_newton_iterations": int(max((r.newton_iterations for r in traj.records), default=0)),
        "entropy_initial": float(h[0]),
        "entropy_final": float(h[-1]),
        "decay_rate": _decay_rate_fit(traj.times, h),
        "stopped_on": "entropy" if h[-1] <= cfg.entropy_stop else "t_max",
    }
    write_json(outdir / "summary.json", summary, chash)
    print(f"simulate: {len(traj.records)} steps to t={traj.times[-1]:.6g}, outputs in {outdir}")
    return EXIT_OK


def cmd_convergence(args: argparse.Namespace) -> int:
    allowed = {
        "datum": (str, "bls:m=1,eps=0.001"),
        "ladder": (str, "32,64,128"),
        "dt0-factor": (float, 1e-2),
        "entropy-drop": (float, 10.0),
        "window-start": (float, 0.2),
        "n-compare": (int, 9),
        "wave-number": (int, 1),
        "lift-initial": (lambda s: s.lower() in ("1", "true", "yes"), False),
    }
    opt = resolve_options(args, allowed)
    chash = config_hash(opt)
    outdir = Path(args.out or "out-convergence")
    outdir.mkdir(parents=True, exist_ok=True)
    ladder = tuple(int(x) for x in str(opt["ladder"]).split(","))
    datum = continuous_datum_from_spec(opt["datum"])
    study = run_study(
        datum,
        ladder=ladder,
        dt0_factor=opt["dt0-factor"],
        entropy_drop=opt["entropy-drop"],
        window_start=opt["window-start"],
        n_compare=opt["n-compare"],
        wave_number=opt["wave-number"],
        lift_initial=opt["lift-initial"],
    )
    rows = []
    for i, n in enumerate(study.ladder):
        e_rho = study.e_l2_rho[i] if i < len(study.e_l2_rho) else ""
        e_sqrt = study.e_l2_sqrt[i] if i < len(study.e_l2_sqrt) else ""
        order = study.order_rho if i == 0 else ""
        rows.append([n, e_rho, e_sqrt, study.weak_residuals[i], order])
    write_csv(
        outdir / "study.csv",
        ["N", "e_l2_rho", "e_l2_sqrt", "weak_residual", "order_estimate"],
        rows,
        chash,
    )
    write_json(outdir / "study.json", asdict(study), chash)
    print(
        f"convergence: ladder {study.ladder}, order {study.order_rho:.3f} (sqrt {study.order_sqrt:.3f}), outputs in {outdir}"
    )
    return EXIT_OK


def cmd_metric(args: argparse.Namespace) -> int:
    allowed = {
        "n": (int, 8),
        "seed": (int, 0),
        "s-slices": (int, 32),
        "max-iterations": (int, 5000),
        "objective-tol": (float, 1e-8),
        "barrier-floor": (float, 1e-12),
        "min-value": (float, 0.05),
        "refine": (lambda s: s.lower() in ("1", "true", "yes"), False),
        "rho0-csv": (str, ""),
        "rho1-csv": (str, ""),
    }
    opt = resolve_options(args, allowed)
    chash = config_hash(opt)
    outdir = Path(args.out or "out-metric")
    outdir.mkdir(parents=True, exist_ok=True)
    grid = GridSpec(opt["n"])

    def load(path: str, fallback_seed: int) -> Density:
        if path:
            data = _load_numeric_rows(path)[-1]
            values = data[1:] if data.size == grid.n + 1 else data
            return density_from_values(grid, values)
        return random_positive_density(grid, fallback_seed, opt["min-value"])

    rho0 = load(opt["rho0-csv"], opt["seed"])
    rho1 = load(opt["rho1-csv"], opt["seed"] + 1000)
    cfg = MetricConfig(
        s_slices=opt["s-slices"],
        max_iterations=opt["max-iterations"],
        objective_tol=opt["objective-tol"],
        barrier_floor=opt["barrier-floor"],
    )
    lower = distance_lower(rho0, rho1)
    upper_construction = action(connecting_curve(rho0, rho1, cfg.s_slices))
    res = geodesic(rho0, rho1, cfg)
    payload = {
        "lower": lower,
        "upper_construction": upper_construction,
        "upper_optimized": res.value,
        "iterations": res.iterations,
        "converged": res.converged,
    }
    if opt["refine"]:
        res2 = geodesic(rho0, rho1, MetricConfig(
            s_slices=2 * cfg.s_slices,
            max_iterations=cfg.max_iterations,
            objective_tol=cfg.objective_tol,
            barrier_floor=cfg.barrier_floor,
        ))
        payload["upper_optimized_refined"] = res2.value
        payload["s_refined"] = 2 * cfg.s_slices
    write_json(outdir / "metric.json", payload, chash)
    print(
        f"metric: lower={lower:.6g} sqrt(optimized)={math.sqrt(max(res.value, 0.0)):.6g} "
        f"converged={res.converged}, outputs in {outdir}"
    )
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    allowed = {
        "ns": (str, "2,3,4,8,16,32,64,128"),
        "samples": (int, 200),
        "seed": (int, 0),
        "decay-n": (int, 32),
        "decay-m": (int, 2),
        "skip-decay": (lambda s: s.lower() in ("1", "true", "yes"), False),
    }
    opt = resolve_options(args, allowed)
    chash = config_hash(opt)
    outdir = Path(args.out or "out-check")
    outdir.mkdir(parents=True, exist_ok=True)
    ns = [int(x) for x in str(opt["ns"]).split(",")]
    samples, seed = opt["samples"], opt["seed"]

    grouped: dict[str, list] = {}

    def add(group: str, rep) -> None:
        grouped.setdefault(group, []).append(rep.to_dict() if hasattr(rep, "to_dict") else rep)

    for n in ns:
        grid = GridSpec(n)
        add("poincare", poincare_suite(grid, samples, seed))
        add("log_sobolev", lsi_suite(grid, samples, seed))
        add("interpolation", interpolation_suite(grid, samples, seed))
        for p in (3.0, 4.0, 6.0):
            add("gagliardo_nirenberg", gns_suite(grid, p, samples, seed))
    add("entropy_production_scan", monster_scan())
    add("elementary_log_scan", elementary_log_scan())
    add("ggs_duality", ggs_duality_suite(GridSpec(16), max(10, samples // 10), seed))

    mob = admissibility_report(samples=max(500, samples), seed=seed)
    grouped["mobility_admissibility"] = [{
        "name": "mobility-admissibility",
        "samples": mob.samples,
        "worst": mob.worst,
        "counterexamples": mob.counterexamples[:5],
        "passed": mob.passed,
    }]

    if not opt["skip-decay"]:
        rho0 = project_initial(bls_datum(opt["decay-m"], 1e-3), GridSpec(opt["decay-n"]))
        traj = simulate(rho0, SolverConfig(t_max=50.0))
        add("decay_bounds", decay_suite(traj))

    all_pass = True
    for group, reports in sorted(grouped.items()):
        group_pass = all(r.get("passed", False) for r in reports)
        all_pass &= group_pass
        worst = min((r.get("worst_margin", 0.0) for r in reports if "worst_margin" in r), default=None)
        write_json(outdir / f"check_{group}.json", {"suite": group, "passed": group_pass, "reports": reports}, chash)
        tail = f" worst_margin={worst:.3e}" if worst is not None else ""
        print(f"check {group}: {'PASS' if group_pass else 'FAIL'}{tail}")
    return EXIT_OK if all_pass else EXIT_SUITE


def cmd_figures_data(args: argparse.Namespace) -> int:
    allowed = {
        "n": (int, 128),
        "eps": (float, 1e-3),
        "ms": (str, "1,2,8,16"),
        "state-stride": (int, 10),
        **_SOLVER_KEYS,
    }
    opt = resolve_options(args, allowed)
    chash = config_hash(opt)
    outdir = Path(args.out or "out-figures-data")
    outdir.mkdir(parents=True, exist_ok=True)
    ms = [int(x) for x in str(opt["ms"]).split(",")]
    grid = GridSpec(opt["n"])
    cfg = _solver_config(opt)
    uniform = density_from_values(grid, np.ones(grid.n))

    def one(m: int):
        rho0 = project_initial(bls_datum(m, opt["eps"]), grid)
        return m, simulate(rho0, cfg)

    with ThreadPoolExecutor(max_workers=_thread_count(len(ms))) as pool:
        results = dict(pool.map(one, ms))

    summary = {}
    for m in ms:
        traj = results[m]
        stride = max(1, opt["state-stride"])
        rows = [[0.0, *traj.initial.values]]
        for k, (t, v) in enumerate(zip(traj.state_times, traj.state_values)):
            if k % stride == 0 or k == len(traj.state_times) - 1:
                rows.append([t, *v])
        write_csv(outdir / f"states_m{m}.csv", ["t"] + [f"rho_{k + 1}" for k in range(grid.n)], rows, chash)

        lyap_rows = []
        hell0 = hellinger(traj.initial, uniform)
        f0 = traj.series("entropy")[0], traj.series("fisher")[0], traj.series("heat_capacity")[0]
        lyap_rows.append([0.0, f0[0], f0[1], hell0, f0[2]])
        for rec, (t, v) in zip(traj.records, zip(traj.state_times, traj.state_values)):
            dens = density_from_values(grid, v)
            lyap_rows.append([
                rec.t,
                rec.functionals.entropy,
                rec.functionals.fisher,
                hellinger(dens, uniform),
                rec.functionals.heat_capacity,
            ])
        write_csv(
            outdir / f"lyapunov_m{m}.csv",
            ["t", "entropy", "fisher", "hellinger_uniform", "heat_capacity"],
            lyap_rows,
            chash,
        )
        summary[f"m{m}"] = {"steps": len(traj.records), "final_time": float(traj.times[-1])}
    write_json(outdir / "figures_data.json", summary, chash)
    print(f"figures-data: wrote state and Lyapunov tables for m in {ms} to {outdir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dlsslab",
        description="Structure-preserving discrete diffusion lab: simulate, verify, measure.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value configuration file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed")

    p = sub.add_parser("simulate", help="adaptive run with diagnostics and state dumps")
    common(p)
    p.add_argument("--n", type=int, help="cell count")
    p.add_argument("--datum", help="uniform | bls:m=INT,eps=REAL | csv:PATH")
    p.add_argument("--state-stride", type=int, dest="state_stride")
    for key in _SOLVER_KEYS:
        p.add_argument(f"--{key}", type=str, dest=key.replace("-", "_"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("convergence", help="mesh-refinement study")
    common(p)
    p.add_argument("--datum", help="uniform | bls:m=INT,eps=REAL")
    p.add_argument("--ladder", help="comma-separated doubling cell counts")
    p.add_argument("--dt0-factor", dest="dt0_factor")
    p.add_argument("--entropy-drop", dest="entropy_drop")
    p.add_argument("--n-compare", dest="n_compare")
    p.add_argument("--window-start", dest="window_start")
    p.add_argument("--wave-number", dest="wave_number")
    p.add_argument("--lift-initial", dest="lift_initial")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("metric", help="transport-distance bounds between two densities")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--s-slices", dest="s_slices")
    p.add_argument("--max-iterations", dest="max_iterations")
    p.add_argument("--objective-tol", dest="objective_tol")
    p.add_argument("--barrier-floor", dest="barrier_floor")
    p.add_argument("--min-value", dest="min_value")
    p.add_argument("--refine", dest="refine")
    p.add_argument("--rho0-csv", dest="rho0_csv")
    p.add_argument("--rho1-csv", dest="rho1_csv")
    p.set_defaults(func=cmd_metric)

    p = sub.add_parser("check", help="functional-inequality suites")
    common(p)
    p.add_argument("--ns", help="comma-separated grid sizes")
    p.add_argument("--samples", type=int)
    p.add_argument("--decay-n", dest="decay_n")
    p.add_argument("--decay-m", dest="decay_m")
    p.add_argument("--skip-decay", dest="skip_decay")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("figures-data", help="state and Lyapunov tables for the figure scripts")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--ms", help="comma-separated bump exponents")
    p.add_argument("--eps", dest="eps")
    p.add_argument("--state-stride", type=int, dest="state_stride")
    for key in _SOLVER_KEYS:
        p.add_argument(f"--{key}", type=str, dest=key.replace("-", "_"))
    p.set_defaults(func=cmd_figures_data)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
