"""Experiment recipes: validated plans of independent tasks, a worker pool,
and deterministic CSV merges.

Every task is a pure function of picklable inputs, so a run scatters tasks
across processes and gathers them in plan order; identical configs produce
byte-identical CSV bodies at any worker count.  Wall-clock times and
environment details live in the run manifest, never in the CSV rows.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .. import __version__
from ..arithmetic import DiophantineParams, diophantine_check, discrepancy, orbit_points
from ..dynamics import (
    QuadratureError,
    amplitude_table_direct,
    amplitude_table_parseval,
    evolve,
    fit_log_exponent,
    lyapunov_estimate,
    moment_series,
)
from ..greens import (
    ClassificationParams,
    bad_set,
    fit_sublinear_exponent,
    scan_boxes,
    scan_centers,
)
from ..operators import StateVector
from .config import (
    ConfigError,
    ConfigReader,
    ExperimentConfig,
    build_dynamics,
    build_operator,
    config_from_raw,
)


@dataclass(frozen=True)
class Task:
    key: tuple
    fn: str
    kwargs: dict


@dataclass
class RunResult:
    experiment: str
    config_hash: str
    files: list[Path]
    safety_flags: list[str]
    row_counts: dict[str, int]


# ---------------------------------------------------------------------------
# task bodies (module level so they pickle into worker processes)


def _task_evolve(spec, initial, times, radius, leakage_tol, prob_floor):
    phi = StateVector.delta(initial)
    res = evolve(spec, phi, times, radius, leakage_tol)
    rows = []
    for i, t in enumerate(res.times):
        for site, amp in zip(res.sites, res.amplitudes[i]):
            prob = abs(amp) ** 2
            if prob >= prob_floor:
                rows.append((t, *site, amp.real, amp.imag, prob))
    flags = ["leakage"] if res.flagged else []
    return {"main": rows, "flags": flags, "leakage": res.leakage}


def _task_moment_series(spec, initial, mode, p, times, horizons, radius,
                        leakage_tol, auto_double=False, max_doublings=2):
    phi = StateVector.delta(initial)
    fingerprint = spec.fingerprint()
    rows = []
    flags = []
    leakage = 0.0
    attempts = max_doublings + 1 if auto_double else 1
    if mode == "instantaneous":
        r = radius
        for attempt in range(attempts):
            series = moment_series(spec, phi, p, times, r, leakage_tol)
            if series.leakage <= leakage_tol or attempt == attempts - 1:
                break
            r *= 2  # truncation policy: double the box and retry
        leakage = series.leakage
        if leakage > leakage_tol:
            flags.append("leakage")
        for t, v in series.entries:
            rows.append((mode, p, t, v, r, series.leakage, fingerprint))
        fit_row = _fit_series(mode, p, series.times(), series.values())
    else:
        values = []
        for T in horizons:
            r = radius
            for attempt in range(attempts):
                if mode == "time-averaged-direct":
                    table = amplitude_table_direct(spec, phi, T, r, leakage_tol)
                else:
                    table = amplitude_table_parseval(spec, initial, T, r,
                                                     control_orders=(0.0, p))
                if not table.flagged or attempt == attempts - 1:
                    break
                r *= 2
            if table.flagged:
                flags.append("leakage")
            leakage = max(leakage, table.leakage)
            values.append(table.moment(p))
            rows.append((mode, p, T, values[-1], r, table.leakage, fingerprint))
        fit_row = _fit_series(mode, p, np.asarray(horizons), np.asarray(values))
    return {"main": rows, "fit": [fit_row], "flags": flags, "leakage": leakage}


def _fit_series(mode, p, times, values):
    try:
        fit = fit_log_exponent((times, values))
        return (mode, p, fit.gamma, fit.residual_rms, fit.poor_fit, "")
    except ValueError as exc:
        return (mode, p, float("nan"), float("nan"), False, str(exc))


def _task_box_scan(spec, size, sub_size, energy, eps, params, centers):
    rows = []
    z = complex(energy, eps)
    for center, shape_id, verdict in scan_boxes(
        spec, size, sub_size, z, params, centers=centers
    ):
        witness = verdict.witness
        rows.append(
            (
                size,
                sub_size,
                energy,
                eps,
                *center,
                shape_id,
                verdict.norm,
                witness.margin if witness is not None else float("-inf"),
                verdict.good,
                verdict.strongly_good,
            )
        )
    return {"main": rows, "flags": []}


def _task_bad_set(spec, size, sub_size, energy, eps, params, centers):
    report = bad_set(
        spec, size, sub_size, complex(energy, eps), params, centers=centers
    )
    partial = (energy, eps, size, sub_size, report.count, report.total_centers)
    return {"main": [], "partial": partial, "flags": []}


def _task_parseval_check(spec, source, p, T, radius, leakage_tol, rel_tol):
    phi = StateVector.delta(source)
    direct = amplitude_table_direct(spec, phi, T, radius, leakage_tol)
    try:
        parseval = amplitude_table_parseval(
            spec, source, T, radius, control_orders=(0.0, p), rel_tol=rel_tol
        )
    except QuadratureError as exc:
        return {"main": [], "summary": [], "flags": [f"quadrature: {exc}"]}
    entries = [
        (T, *site, dv, pv, abs(dv - pv))
        for site, dv, pv in zip(direct.sites, direct.values, parseval.values)
    ]
    d_m, p_m = direct.moment(p), parseval.moment(p)
    rel = abs(d_m - p_m) / d_m if d_m else 0.0
    summary = [
        (T, p, d_m, p_m, rel, direct.total(), parseval.total(), direct.leakage,
         direct.flagged)
    ]
    flags = ["leakage"] if direct.flagged else []
    return {"main": entries, "summary": summary, "flags": flags}


def _task_discrepancy(dynamics, n_points, phase, grid_resolution):
    run = dynamics if phase is None else type(dynamics)(
        dynamics.mode, dynamics.alpha, (phase,) * len(dynamics.phase)
    )
    pts = orbit_points(run, n_points)
    report = discrepancy(pts, grid_resolution)
    row = (
        report.torus_dim,
        n_points,
        *run.alpha,
        *run.phase,
        report.value,
        report.method,
        report.attained,
    )
    return {"main": [row], "flags": []}


def _task_diophantine(alpha, kappa, tau, k_max):
    params = DiophantineParams(kappa=kappa, tau=tau, k_max=k_max)
    report = diophantine_check(alpha, params)
    row = (
        len(alpha),
        kappa,
        tau,
        k_max,
        report.passed,
        *report.worst_k,
        report.margin,
    )
    return {"main": [row], "flags": []}


def _task_lyapunov(spec, energy, eps, length, phases):
    est = lyapunov_estimate(spec, complex(energy, eps), length, phases)
    row = (energy, eps, length, len(phases), est.value, est.stderr)
    return {"main": [row], "flags": []}


TASK_FUNCTIONS: dict[str, Callable] = {
    "evolve": _task_evolve,
    "moment_series": _task_moment_series,
    "box_scan": _task_box_scan,
    "bad_set": _task_bad_set,
    "parseval_check": _task_parseval_check,
    "discrepancy": _task_discrepancy,
    "diophantine": _task_diophantine,
    "lyapunov": _task_lyapunov,
}


def _run_task(payload):
    name, kwargs = payload
    return TASK_FUNCTIONS[name](**kwargs)


def execute_tasks(tasks: Sequence[Task], workers: int) -> list[dict]:
    payloads = [(t.fn, t.kwargs) for t in tasks]
    if workers <= 1 or len(payloads) <= 1:
        return [_run_task(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, payloads))


# ---------------------------------------------------------------------------
# recipes


@dataclass
class Plan:
    tasks: list[Task]
    files: dict[str, tuple[str, list[str]]]  # output key -> (suffix, header)
    context: dict[str, Any] = field(default_factory=dict)


def _coords_header(d: int) -> list[str]:
    return [f"n{i}" for i in range(d)]


def _plan_evolve(cfg: ExperimentConfig) -> Plan:
    r = ConfigReader(cfg.raw)
    spec = build_operator(r)
    radius = r.integer("evolve.radius", default=32, minimum=2)
    times = r.floats("evolve.times", required=True)
    initial = r.site("evolve.initial")
    tol = r.number("evolve.leakage_tol", default=1e-8, minimum=0.0)
    floor = r.number("evolve.prob_floor", default=1e-12, minimum=0.0)
    if times is not None and sorted(times) != list(times):
        r.issues.append("'evolve.times' must be sorted ascending")
    if spec is not None and times is not None:
        if 2 * max(abs(c) for c in initial) > radius:
            r.issues.append("'evolve.initial' must lie in [-R/2, R/2]^d")
    if r.issues:
        raise ConfigError(r.issues)
    task = Task(
        (0,),
        "evolve",
        dict(spec=spec, initial=initial, times=times, radius=radius,
             leakage_tol=tol, prob_floor=floor),
    )
    header = ["experiment", "config_hash", "t", *_coords_header(spec.dimension),
              "re", "im", "prob"]
    return Plan([task], {"main": ("snapshots", header)})


_MOMENT_MODES = (
    "instantaneous",
    "time-averaged-direct",
    "time-averaged-parseval",
)


def _plan_moments(cfg: ExperimentConfig) -> Plan:
    r = ConfigReader(cfg.raw)
    spec = build_operator(r)
    radius = r.integer("moments.radius", default=64, minimum=2)
    ps = r.floats("moments.p", default=(2.0,))
    modes = cfg.get("moments.modes", "instantaneous")
    modes = tuple(modes) if isinstance(modes, tuple) else (modes,)
    for m in modes:
        if m not in _MOMENT_MODES:
            r.issues.append(f"'moments.modes' entries must be in {_MOMENT_MODES}")
    times = r.floats("moments.times", default=None)
    horizons = r.floats("moments.horizons", default=None)
    if "instantaneous" in modes and times is None:
        r.issues.append("'moments.times' is required for instantaneous series")
    if any(m.startswith("time-averaged") for m in modes) and horizons is None:
        r.issues.append("'moments.horizons' is required for time-averaged series")
    times = times or ()  # an explicitly empty grid is a no-op, not an error
    horizons = horizons or ()
    if any(p <= 0 for p in ps or ()):
        r.issues.append("'moments.p' entries must be positive")
    initial = r.site("moments.initial")
    tol = r.number("moments.leakage_tol", default=1e-8, minimum=0.0)
    auto_double = r.flag("moments.auto_double", default=False)
    max_doublings = r.integer("moments.max_doublings", default=2, minimum=0)
    if r.issues:
        raise ConfigError(r.issues)
    tasks = [
        Task(
            (mi, pi),
            "moment_series",
            dict(spec=spec, initial=initial, mode=mode, p=p, times=times,
                 horizons=horizons, radius=radius, leakage_tol=tol,
                 auto_double=auto_double, max_doublings=max_doublings),
        )
        for mi, mode in enumerate(modes)
        for pi, p in enumerate(ps)
    ]
    header = ["experiment", "config_hash", "mode", "p", "t_or_T", "value",
              "radius", "leakage", "model"]
    fit_header = ["experiment", "config_hash", "mode", "p", "gamma",
                  "residual_rms", "poor_fit", "note"]
    return Plan(tasks, {"main": ("moments", header), "fit": ("fits", fit_header)})


def _scan_setup(r: ConfigReader, cfg: ExperimentConfig):
    spec = build_operator(r)
    sizes = cfg.get("scan.sizes")
    if sizes is None:
        r.issues.append("missing required key 'scan.sizes'")
        sizes = ()
    sizes = tuple(int(n) for n in (sizes if isinstance(sizes, tuple) else (sizes,)))
    sub_exp = r.number("scan.sub_exponent", default=0.3, minimum=0.0, maximum=1.0)
    sub_fixed = r.integer("scan.sub_size", default=None, minimum=1)
    energies = r.floats("scan.energies", default=(0.0,))
    horizon = r.number("scan.horizon", default=None, minimum=0.0)
    eps = r.number("scan.epsilon", default=None, minimum=0.0)
    if eps is None:
        eps = 1.0 / horizon if horizon else 1e-3
    params = None
    if spec is not None:
        overrides = {}
        for name in ("c2", "sigma", "xi", "varsigma"):
            v = r.number(f"class.{name}", default=None)
            if v is not None:
                overrides[name] = float(v)
        try:
            params = ClassificationParams.for_spec(spec, **overrides)
        except ValueError as exc:
            r.issues.append(f"classification: {exc}")
    pairs = []
    for n in sizes:
        sub = sub_fixed if sub_fixed is not None else math.ceil(n**sub_exp)
        if sub >= n:
            r.issues.append(f"sub-box size {sub} must be smaller than N={n}")
        pairs.append((n, sub))
    return spec, pairs, energies, float(eps), params


SCAN_CHUNK = 64  # centers per task; fixed so plans don't depend on workers


def _center_chunks(size: int, d: int) -> list[list[tuple[int, ...]]]:
    centers = list(scan_centers(size, d))
    return [centers[i : i + SCAN_CHUNK] for i in range(0, len(centers), SCAN_CHUNK)]


def _plan_box_scan(cfg: ExperimentConfig) -> Plan:
    r = ConfigReader(cfg.raw)
    spec, pairs, energies, eps, params = _scan_setup(r, cfg)
    if r.issues:
        raise ConfigError(r.issues)
    tasks = [
        Task(
            (ni, ei, ci),
            "box_scan",
            dict(spec=spec, size=n, sub_size=sub, energy=e, eps=eps,
                 params=params, centers=chunk),
        )
        for ni, (n, sub) in enumerate(pairs)
        for ei, e in enumerate(energies)
        for ci, chunk in enumerate(_center_chunks(n, spec.dimension))
    ]
    header = ["experiment", "config_hash", "N", "N1", "E", "eps",
              *_coords_header(spec.dimension), "shapeId", "norm",
              "worstPairDecayMargin", "good", "stronglyGood"]
    return Plan(tasks, {"main": ("scan", header)})


def _plan_sublinear(cfg: ExperimentConfig) -> Plan:
    r = ConfigReader(cfg.raw)
    spec, pairs, energies, eps, params = _scan_setup(r, cfg)
    if len({n for n, _ in pairs}) < 3:
        r.issues.append("'scan.sizes' needs at least three scales for the fit")
    if r.issues:
        raise ConfigError(r.issues)
    tasks = [
        Task(
            (ei, ni, ci),
            "bad_set",
            dict(spec=spec, size=n, sub_size=sub, energy=e, eps=eps,
                 params=params, centers=chunk),
        )
        for ei, e in enumerate(energies)
        for ni, (n, sub) in enumerate(pairs)
        for ci, chunk in enumerate(_center_chunks(n, spec.dimension))
    ]
    header = ["experiment", "config_hash", "N", "N1", "E", "eps", "badCount",
              "totalCenters", "fraction"]
    fit_header = ["experiment", "config_hash", "E", "eps", "delta", "slope",
                  "slopeStderr", "residualRms", "noBadBoxes"]
    return Plan(
        tasks,
        {"main": ("counts", header), "fit": ("fit", fit_header)},
        context={"energies": energies, "eps": eps, "pairs": pairs},
    )


def _aggregate_sublinear(context, results):
    """Sum per-chunk bad counts into per-(E, N) rows plus per-E fits."""
    sums: dict[tuple[float, int], list[int]] = {}
    subs: dict[int, int] = {}
    for res in results:
        e, eps, n, sub, count, total = res["partial"]
        key = (e, n)
        sums.setdefault(key, [0, 0])
        sums[key][0] += count
        sums[key][1] += total
        subs[n] = sub
    count_rows = []
    fit_rows = []
    for e in context["energies"]:
        per_scale = []
        for n, sub in context["pairs"]:
            count, total = sums[(e, n)]
            per_scale.append((n, count))
            count_rows.append(
                (n, sub, e, context["eps"], count, total, count / total)
            )
        fit = fit_sublinear_exponent(per_scale)
        fit_rows.append(
            (e, context["eps"], fit.delta, fit.slope, fit.slope_stderr,
             fit.residual_rms, fit.no_bad_boxes)
        )
    return count_rows, fit_rows


def _plan_parseval(cfg: ExperimentConfig) -> Plan:
    r = ConfigReader(cfg.raw)
    spec = build_operator(r)
    radius = r.integer("parseval.radius", default=64, minimum=2)
    horizons = r.floats("parseval.horizons", required=True)
    p = r.number("parseval.p", default=2.0, minimum=0.0)
    source = r.site("parseval.source")
    tol = r.number("parseval.leakage_tol", default=1e-8, minimum=0.0)
    rel_tol = r.number("parseval.rel_tol", default=1e-9, minimum=0.0)
    if horizons is not None and any(T <= 0 for T in horizons):
        r.issues.append("'parseval.horizons' must be positive")
    if r.issues:
        raise ConfigError(r.issues)
    tasks = [
        Task(
            (i,),
            "parseval_check",
            dict(spec=spec, source=source, p=float(p), T=T, radius=radius,
                 leakage_tol=tol, rel_tol=rel_tol),
        )
        for i, T in enumerate(horizons)
    ]
    d = spec.dimension
    header = ["experiment", "config_hash", "T", *_coords_header(d),
              "aDirect", "aParseval", "absDeviation"]
    summary = ["experiment", "config_hash", "T", "p", "momentDirect",
               "momentParseval", "relDeviation", "totalDirect", "totalParseval",
               "leakage", "flaggedLeakage"]
    return Plan(tasks, {"main": ("entries", header), "summary": ("summary", summary)})


def _plan_discrepancy(cfg: ExperimentConfig) -> Plan:
    r = ConfigReader(cfg.raw)
    dynamics = build_dynamics(r, prefix="orbit")
    sizes = r.floats("disc.sizes", required=True)
    samples = r.integer("disc.phase_samples", default=0, minimum=0)
    resolution = r.integer("disc.grid_resolution", default=32, minimum=2)
    if dynamics is not None and not dynamics.lattice_dim_compatible(1):
        r.issues.append("orbit dynamics must be driven by a single index")
    if sizes is not None and any(n < 1 for n in sizes):
        r.issues.append("'disc.sizes' must be positive")
    if r.issues:
        raise ConfigError(r.issues)
    rng = np.random.default_rng(cfg.seed)
    phases: list[float | None] = [None]
    phases += [float(x) for x in rng.random(samples)]
    tasks = [
        Task(
            (ni, pi),
            "discrepancy",
            dict(dynamics=dynamics, n_points=int(n), phase=phase,
                 grid_resolution=resolution),
        )
        for ni, n in enumerate(sizes)
        for pi, phase in enumerate(phases)
    ]
    b = dynamics.torus_dim
    header = ["experiment", "config_hash", "b", "N",
              *[f"alpha{i}" for i in range(b)], *[f"x{i}" for i in range(b)],
              "D_N", "method", "attained"]
    return Plan(tasks, {"main": ("discrepancy", header)})


def _plan_diophantine(cfg: ExperimentConfig) -> Plan:
    r = ConfigReader(cfg.raw)
    alpha = r.floats("dio.alpha", required=True)
    kappa = r.number("dio.kappa", default=1.01, minimum=1.0)
    tau = r.number("dio.tau", default=0.3, minimum=0.0)
    k_max = r.integer("dio.kmax", default=10**6, minimum=1)
    if tau is not None and tau <= 0:
        r.issues.append("'dio.tau' must be positive")
    if r.issues:
        raise ConfigError(r.issues)
    task = Task(
        (0,),
        "diophantine",
        dict(alpha=alpha, kappa=float(kappa), tau=float(tau), k_max=k_max),
    )
    b = len(alpha)
    header = ["experiment", "config_hash", "b", "kappa", "tau", "kmax", "passed",
              *[f"k{i}" for i in range(b)], "margin"]
    return Plan([task], {"main": ("diophantine", header)})


def _plan_lyapunov(cfg: ExperimentConfig) -> Plan:
    r = ConfigReader(cfg.raw)
    spec = build_operator(r)
    energies = r.floats("lyapunov.energies", required=True)
    eps = r.number("lyapunov.epsilon", default=0.0, minimum=0.0)
    length = r.integer("lyapunov.length", default=10000, minimum=10)
    n_phases = r.integer("lyapunov.phase_samples", default=8, minimum=1)
    if spec is not None and (spec.dimension != 1 or spec.kernel.row_sum() != 2.0):
        r.issues.append("lyapunov needs a 1-d nearest-neighbour model")
    if r.issues:
        raise ConfigError(r.issues)
    rng = np.random.default_rng(cfg.seed)
    phases = tuple(float(x) for x in rng.random(n_phases))
    tasks = [
        Task(
            (i,),
            "lyapunov",
            dict(spec=spec, energy=float(e), eps=float(eps), length=length,
                 phases=phases),
        )
        for i, e in enumerate(energies)
    ]
    header = ["experiment", "config_hash", "E", "eps", "length", "nPhases",
              "value", "stderr"]
    return Plan(tasks, {"main": ("lyapunov", header)})


RECIPES: dict[str, Callable[[ExperimentConfig], Plan]] = {
    "evolve": _plan_evolve,
    "moment-growth": _plan_moments,
    "bad-set-scan": _plan_box_scan,
    "sublinear": _plan_sublinear,
    "parseval-crosscheck": _plan_parseval,
    "discrepancy-sweep": _plan_discrepancy,
    "diophantine": _plan_diophantine,
    "lyapunov-map": _plan_lyapunov,
}


# ---------------------------------------------------------------------------
# running and writing


def _format_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])


def _collect(cfg: ExperimentConfig, plan: Plan, results: list[dict]):
    tagged: dict[str, list[tuple]] = {key: [] for key in plan.files}
    flags: list[str] = []
    for task, res in zip(plan.tasks, results):
        for key in plan.files:
            for row in res.get(key, []):
                tagged[key].append((cfg.experiment, cfg.hash, *row))
        flags.extend(res.get("flags", []))
    if cfg.experiment == "sublinear":
        count_rows, fit_rows = _aggregate_sublinear(plan.context, results)
        tagged["main"] = [(cfg.experiment, cfg.hash, *row) for row in count_rows]
        tagged["fit"] = [(cfg.experiment, cfg.hash, *row) for row in fit_rows]
    return tagged, flags


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | Path,
    workers: int = 1,
    prefix: str | None = None,
) -> RunResult:
    """Plan, execute, and persist one experiment; see RECIPES for names."""
    if cfg.experiment not in RECIPES:
        raise ConfigError(
            [f"unknown experiment '{cfg.experiment}'; choose from "
             f"{sorted(RECIPES)}"]
        )
    start = time.time()
    plan = RECIPES[cfg.experiment](cfg)
    results = execute_tasks(plan.tasks, workers)
    tagged, flags = _collect(cfg, plan, results)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = prefix or str(cfg.get("output.prefix", cfg.experiment))
    files = []
    counts = {}
    for key, (suffix, header) in plan.files.items():
        path = out / f"{stem}_{suffix}.csv"
        _write_csv(path, header, tagged[key])
        files.append(path)
        counts[path.name] = len(tagged[key])
    manifest = {
        "experiment": cfg.experiment,
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "outputs": [f.name for f in files],
        "row_counts": counts,
        "safety_flags": flags,
        "versions": _versions(),
        "wall_time_s": time.time() - start,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    manifest_path = out / f"{stem}_manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    files.append(manifest_path)
    return RunResult(cfg.experiment, cfg.hash, files, flags, counts)


def _versions() -> dict[str, str]:
    import scipy

    return {
        "qpdyn": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def run_sweep(
    cfg: ExperimentConfig,
    out_dir: str | Path,
    workers: int = 1,
) -> RunResult:
    """Cartesian-product dispatch of a recipe over config axes.

    ``sweep.axes`` lists dotted keys that must already exist in the config;
    ``sweep.values.<axis>`` supplies each axis grid.  The merged CSVs carry
    the axis values as leading columns, ordered by axis tuple regardless of
    worker count.
    """
    recipe = cfg.get("sweep.recipe", cfg.get("experiment"))
    if recipe in (None, "sweep"):
        raise ConfigError(["sweep needs 'sweep.recipe' naming a recipe"])
    if recipe not in RECIPES:
        raise ConfigError([f"unknown sweep recipe '{recipe}'"])
    axes = cfg.get("sweep.axes")
    if axes is None:
        raise ConfigError(["missing required key 'sweep.axes'"])
    axes = tuple(axes) if isinstance(axes, tuple) else (axes,)
    issues = []
    grids = []
    for axis in axes:
        if axis not in cfg.raw:
            issues.append(f"sweep axis '{axis}' does not exist in the config")
            continue
        values = cfg.get(f"sweep.values.{axis}")
        if values is None:
            issues.append(f"missing 'sweep.values.{axis}'")
            continue
        grids.append(tuple(values) if isinstance(values, tuple) else (values,))
    if issues:
        raise ConfigError(issues)

    import itertools as it

    start = time.time()
    combos = list(it.product(*grids))
    sub_plans = []
    all_tasks: list[Task] = []
    for ci, combo in enumerate(combos):
        raw = dict(cfg.raw)
        raw["experiment"] = recipe
        for axis, value in zip(axes, combo):
            raw[axis] = value
        sub_cfg = config_from_raw(raw, recipe, seed=cfg.seed)
        plan = RECIPES[recipe](sub_cfg)
        sub_plans.append((combo, sub_cfg, plan))
        for t in plan.tasks:
            all_tasks.append(Task((ci, *t.key), t.fn, t.kwargs))
    results = execute_tasks(all_tasks, workers)

    # regroup results by sub-plan, in plan order
    merged: dict[str, list[tuple]] = {}
    headers: dict[str, tuple[str, list[str]]] = {}
    flags: list[str] = []
    pos = 0
    for combo, sub_cfg, plan in sub_plans:
        chunk = results[pos : pos + len(plan.tasks)]
        pos += len(plan.tasks)
        tagged, sub_flags = _collect(sub_cfg, plan, chunk)
        flags.extend(sub_flags)
        for key, (suffix, header) in plan.files.items():
            headers[key] = (suffix, ["axis." + a for a in axes] + header)
            merged.setdefault(key, []).extend(
                (*combo, *row) for row in tagged[key]
            )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = str(cfg.get("output.prefix", f"sweep_{recipe}"))
    files = []
    counts = {}
    for key, (suffix, header) in headers.items():
        path = out / f"{stem}_{suffix}.csv"
        _write_csv(path, header, merged[key])
        files.append(path)
        counts[path.name] = len(merged[key])
    manifest = {
        "experiment": f"sweep:{recipe}",
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "axes": list(axes),
        "combos": len(combos),
        "outputs": [f.name for f in files],
        "row_counts": counts,
        "safety_flags": flags,
        "versions": _versions(),
        "wall_time_s": time.time() - start,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    manifest_path = out / f"{stem}_manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    files.append(manifest_path)
    return RunResult(f"sweep:{recipe}", cfg.hash, files, flags, counts)
