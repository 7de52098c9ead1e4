"""Experiment pipelines behind ``fpkernel run``.

Each pipeline computes everything in memory and returns an :class:`Outcome`;
nothing touches the output directory until the whole experiment succeeded.
"""
from dataclasses import dataclass, field
import math
from pathlib import Path
import time

import numpy as np
from scipy import stats
from scipy.integrate import simpson

from . import io
from .baselines import cross_validate_bandwidth, predictor
from .checks import PropertyResult, run_suite
from .density import (
    embed_snapshot_estimator,
    kme_combined,
    kme_risk,
    mass_and_negativity_report,
    renormalize,
)
from .dynamics import SdeSpec, evolve, gaussian_bump, project, sample_evolved, simulate_paths, synth_measurements
from .errors import ConfigError
from .kernels import Family
from .regression import assemble, empirical_risk, fit, fit_with_initial
from .snapshots import Snapshot, SnapshotSet

BOUNDARY_TOL = 1e-9


@dataclass
class Outcome:
    """Metrics, property results and deferred file writers of one run."""

    metrics: dict
    properties: list = field(default_factory=list)
    writers: dict = field(default_factory=dict)

    @property
    def failed(self):
        return [p for p in self.properties if not p.passed]


# -- data ----------------------------------------------------------------------


def build_truth(cfg, model):
    """``(truth(x, t), spectral_function)``; both ``None`` without a truth section."""
    tc = cfg.truth
    if tc is None:
        return None, None
    if not model.is_spectral:
        return (lambda x, t: gaussian_bump(x, np.asarray(t) - tc.time, model.diffusion)), None
    sf = project(model, tc.profile.function(), tc.n_terms, tc.quad_nodes)
    return (lambda x, t: evolve(sf, float(t) - tc.time, x)), sf


def measure(snap_cfg, stream, truth, seed):
    """Measurements described by one snapshot section."""
    if snap_cfg.points is not None:
        pts = np.asarray(snap_cfg.points, dtype=float).reshape(-1, 2)
        source = lambda x, t: pts[:, 1]  # noqa: E731
        x = pts[:, 0]
    else:
        x = snap_cfg.sensors.array()
        if snap_cfg.profile is not None:
            g = snap_cfg.profile.function()
            source = lambda x, t: g(x)  # noqa: E731
        else:
            source = truth
    err = snap_cfg.error
    error = {"none": None, "gaussian": err.sd, "function": err.profile.function() if err.profile else None}[err.kind]
    return synth_measurements(source, x, snap_cfg.t, error, seed, stream=(stream,))


def build_data(cfg, base_dir, truth, sf):
    """The experiment's snapshots, numbered from 1 (0 is the initial condition)."""
    if cfg.snapshot_csv is not None:
        path = Path(base_dir) / cfg.snapshot_csv
        try:
            return io.read_snapshots(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"snapshot_csv: {exc}") from None
    snaps = []
    for k, snap_cfg in enumerate(cfg.snapshots, start=1):
        if snap_cfg.sample_size is not None:
            x = sample_evolved(sf, snap_cfg.t - cfg.truth.time, snap_cfg.sample_size, cfg.seed, stream=(k,))
            snaps.append(Snapshot(snap_cfg.t, x))
        else:
            snaps.append(measure(snap_cfg, k, truth, cfg.seed))
    return SnapshotSet(snaps)


def x_range(cfg, model, data=None):
    lo, hi = cfg.grid.lo, cfg.grid.hi
    if model.bounded:
        dlo, dhi = model.domain
    elif data is not None and data.total:
        dlo, dhi = float(data.positions.min()), float(data.positions.max())
    else:
        dlo, dhi = -3.0 * model.length_scale, 3.0 * model.length_scale
    return (dlo if lo is None else lo), (dhi if hi is None else hi)


def grid_rows(times, xs, values, truth=None):
    rows = []
    for t in times:
        v = values(xs, t)
        if truth is None:
            rows.extend(zip([t] * xs.size, xs, v))
        else:
            rows.extend(zip([t] * xs.size, xs, v, truth(xs, t)))
    return rows


def fit_rows(result, snapshot_offset):
    return list(
        io.coefficient_rows(
            result.center_snapshot + snapshot_offset,
            result.center_index + 1,
            result.centers,
            result.center_times,
            result.coefficients,
        )
    )


def _coefficient_metrics(result, snapshot_offset):
    return {
        f"coefficient_s{int(k) + snapshot_offset}_i{int(i) + 1}": float(a)
        for k, i, a in zip(result.center_snapshot, result.center_index, result.coefficients)
    }


def _rmse(a, b):
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def _risk_vs_truth(result, data, truth):
    per = [np.mean((result.predict(s.x, s.t) - truth(s.x, s.t)) ** 2) for s in data]
    return float(np.mean(per))


def _truth_metrics(cfg, model, result, data, truth, label_offset=1):
    out = {}
    lo, hi = x_range(cfg, model, data)
    xs = np.linspace(lo, hi, cfg.grid.count)
    for k, snap in enumerate(data, start=label_offset):
        out[f"rmse_truth_t{k}"] = _rmse(result.predict(xs, snap.t), truth(xs, snap.t))
    out["risk_vs_truth"] = _risk_vs_truth(result, data, truth)
    return out


def _boundary(model, result, times):
    """Largest ``|f|`` at the domain ends over ``times`` (bounded domains only)."""
    ends = np.array(model.domain, dtype=float)
    return max(float(np.max(np.abs(result.predict(ends, t)))) for t in times)


# -- pipelines -----------------------------------------------------------------


def _regression_outputs(cfg, model, data, result, truth, snapshot_offset, extra_times=()):
    outputs = cfg.outputs
    lo, hi = x_range(cfg, model, data)
    xs = np.linspace(lo, hi, cfg.grid.count)
    times = list(cfg.grid.times) or [*data.times, *extra_times]
    rows = grid_rows(times, xs, result.predict, truth)
    coef = fit_rows(result, snapshot_offset)
    return {
        outputs.coefficients: lambda p: io.write_coefficients(p, coef),
        outputs.grid: lambda p: io.write_grid(p, rows, truth is not None),
        outputs.snapshots: lambda p: io.write_snapshots(p, data),
    }


def _boundary_property(model, result, data, metrics):
    if model.family is not Family.DIRICHLET_HEAT:
        return []
    worst = _boundary(model, result, data.times)
    metrics["boundary_max_abs"] = worst
    return [PropertyResult("dirichlet_boundary", worst <= BOUNDARY_TOL, worst, BOUNDARY_TOL)]


def run_regress(cfg, base_dir):
    model = cfg.kernel.build()
    truth, sf = build_truth(cfg, model)
    data = build_data(cfg, base_dir, truth, sf)
    start = time.perf_counter()
    result = fit(assemble(model, data), cfg.solver.rtol)
    elapsed = time.perf_counter() - start
    metrics = {
        "n_snapshots": len(data),
        "n_samples": data.total,
        "rank": result.rank,
        "residual_norm": result.residual_norm,
        "empirical_risk": empirical_risk(result, data),
        "runtime_fit_seconds": elapsed,
    }
    if truth is not None:
        metrics.update(_truth_metrics(cfg, model, result, data, truth))
    props = _boundary_property(model, result, data, metrics)
    metrics.update(_coefficient_metrics(result, 1))
    return Outcome(metrics, props, _regression_outputs(cfg, model, data, result, truth, 1))


def run_regress_with_initial(cfg, base_dir):
    model = cfg.kernel.build()
    truth, sf = build_truth(cfg, model)
    data = build_data(cfg, base_dir, truth, sf)
    initial = measure(cfg.initial, 0, truth, cfg.seed)
    sol = cfg.solver
    start = time.perf_counter()
    result = fit_with_initial(model, data, initial, sol.t_epsilon, sol.initial_weight, sol.rtol)
    elapsed = time.perf_counter() - start
    metrics = {
        "n_snapshots": len(data),
        "n_samples": data.total,
        "n_initial": len(initial),
        "t_epsilon": sol.t_epsilon,
        "rank": result.rank,
        "residual_norm": result.residual_norm,
        "empirical_risk": empirical_risk(result, data),
        "runtime_fit_seconds": elapsed,
    }
    if truth is not None:
        metrics.update(_truth_metrics(cfg, model, result, data, truth))
        per_snapshot = [fit(assemble(model, SnapshotSet([s])), sol.rtol) for s in data]
        metrics["interpolation_risk_vs_truth"] = float(
            np.mean([np.mean((f.predict(s.x, s.t) - truth(s.x, s.t)) ** 2) for f, s in zip(per_snapshot, data)])
        )
    props = _boundary_property(model, result, data, metrics)
    if truth is not None:
        ratio = metrics["risk_vs_truth"] / max(metrics["interpolation_risk_vs_truth"], np.finfo(float).tiny)
        props.append(PropertyResult("initial_condition_improves_risk", ratio < 1.0, ratio, 1.0))
    metrics.update(_coefficient_metrics(result, 0))
    return Outcome(metrics, props, _regression_outputs(cfg, model, data, result, truth, 0))


def run_predict_compare(cfg, base_dir):
    model = cfg.kernel.build()
    truth, sf = build_truth(cfg, model)
    data = build_data(cfg, base_dir, truth, sf)
    base = cfg.baseline
    start = time.perf_counter()
    result = fit(assemble(model, data), cfg.solver.rtol)
    metrics = {
        "n_snapshots": len(data),
        "n_samples": data.total,
        "rank": result.rank,
        "residual_norm": result.residual_norm,
        "empirical_risk": empirical_risk(result, data),
        "runtime_fit_seconds": time.perf_counter() - start,
        "baseline_bandwidth": base.bandwidth,
    }
    baseline = predictor(base.method)
    if base.method == "nadaraya_watson":
        def predict_base(x, t):
            return baseline(data, base.bandwidth, x, t)
    else:
        def predict_base(x, t):
            return baseline(data, base.bandwidth, x, t, cfg.solver.rtol)
    if base.cv_grid:
        metrics["cv_bandwidth"] = cross_validate_bandwidth(
            data, base.cv_grid, base.folds, cfg.seed, base.fold_by, base.method
        )
    lo, hi = x_range(cfg, model, data)
    xs = np.linspace(lo, hi, cfg.predict.query_count)
    props = []
    for j, tp in enumerate(cfg.predict.times, start=len(data) + 1):
        exact = truth(xs, tp)
        pde = _rmse(result.predict(xs, tp), exact)
        idw = _rmse(predict_base(xs, tp), exact)
        metrics[f"rmse_pde_t{j}"] = pde
        metrics[f"rmse_idw_t{j}"] = idw
        props.append(PropertyResult(f"pde_beats_baseline_t{j}", pde < idw, pde / idw, 1.0))
    props += _boundary_property(model, result, data, metrics)
    writers = _regression_outputs(cfg, model, data, result, truth, 1, cfg.predict.times)
    gx = np.linspace(lo, hi, cfg.grid.count)
    times = list(cfg.grid.times) or [*data.times, *cfg.predict.times]
    base_rows = grid_rows(times, gx, predict_base, truth)
    writers[_sibling(cfg.outputs.grid, "baseline")] = lambda p: io.write_grid(p, base_rows, True)
    return Outcome(metrics, props, writers)


def _sibling(name, tag):
    p = Path(name)
    return f"{p.stem}_{tag}{p.suffix}"


def _ise(estimate, truth, t, z):
    return float(simpson((estimate.evaluate(z, t) - truth(z, t)) ** 2, x=z))


def run_density_combine(cfg, base_dir):
    model = cfg.kernel.build()
    truth, sf = build_truth(cfg, model)
    data = build_data(cfg, base_dir, truth, sf)
    if data.labelled:
        raise ConfigError("density-combine needs unlabelled samples (snapshot,t,x)")
    dc = cfg.density
    start = time.perf_counter()
    combined = kme_combined(model, data, cfg.solver.rtol, cfg.solver.clamp_tol)
    elapsed = time.perf_counter() - start
    singles = [embed_snapshot_estimator(model, data, k) for k in range(len(data))]
    metrics = {"n_snapshots": len(data), "n_samples": data.total, "runtime_fit_seconds": elapsed}
    risk = kme_risk(combined, data)
    single_risks = [kme_risk(s, data) for s in singles]
    metrics["kme_risk_combined"] = risk
    for k, r in enumerate(single_risks, start=1):
        metrics[f"kme_risk_single_{k}"] = r
    gap = risk - min(single_risks)
    props = [PropertyResult("combined_risk_optimal", gap <= 1e-10, gap, 1e-10)]
    lo, hi = x_range(cfg, model, data)
    z = np.linspace(lo, hi, dc.ise_nodes)
    renorm = {}
    for j, t in enumerate(dc.eval_times, start=len(data) + 1):
        ise_c = _ise(combined, truth, t, z)
        ise_s = [_ise(s, truth, t, z) for s in singles]
        metrics[f"ise_combined_t{j}"] = ise_c
        for k, v in enumerate(ise_s, start=1):
            metrics[f"ise_single_{k}_t{j}"] = v
        ratio = ise_c / max(min(ise_s), np.finfo(float).tiny)
        props.append(PropertyResult(f"combined_ise_t{j}", ratio <= dc.ise_factor, ratio, dc.ise_factor))
        if model.bounded:
            mass, low = mass_and_negativity_report(combined, t)
            metrics[f"mass_combined_t{j}"] = mass
            metrics[f"min_combined_t{j}"] = low
            if dc.renormalize:
                renorm[t] = renormalize(combined, t)
    times = [*data.times, *dc.eval_times]
    xs = np.linspace(lo, hi, cfg.grid.count)
    outputs = cfg.outputs
    rows = grid_rows(times, xs, lambda x, t: combined.evaluate(x, t), truth)
    coef = list(
        io.coefficient_rows(
            data.snapshot_index + 1, data.sample_index + 1, data.positions, data.sample_times, combined.coefficients
        )
    )
    writers = {
        outputs.coefficients: lambda p: io.write_coefficients(p, coef),
        outputs.grid: lambda p: io.write_grid(p, rows, True),
        outputs.snapshots: lambda p: io.write_snapshots(p, data),
    }
    for k, single in enumerate(singles, start=1):
        srows = grid_rows(times, xs, lambda x, t, s=single: s.evaluate(x, t), truth)
        writers[_sibling(outputs.grid, f"single_{k}")] = lambda p, r=srows: io.write_grid(p, r, True)
    if renorm:
        rrows = []
        for t, est in renorm.items():
            rrows += grid_rows([t], xs, lambda x, t, e=est: e.evaluate(x, t), truth)
        writers[_sibling(outputs.grid, "renormalized")] = lambda p: io.write_grid(p, rrows, True)
    return Outcome(metrics, props, writers)


def run_kernel_check(cfg, base_dir=None):
    model = cfg.kernel.build()
    results, seconds = run_suite(model, cfg.seed)
    metrics = {
        "family": model.family.value,
        "n_properties": len(results),
        "n_failed": sum(not r.passed for r in results),
        "n_skipped": sum(r.skipped is not None for r in results),
        "suite_seconds": seconds,
    }
    return Outcome(metrics, results, {})


def transition_density(model, x0, t):
    """Density at time ``t`` of the process started at ``x0``: ``exp(Phi(x0)) K_t(x0, .)``."""
    scale = math.exp(float(model.potential(np.float64(x0))))
    return lambda x: scale * model.evaluate(t, x0, x)


def _expected_moments(model, x0, t, density, lo, hi):
    if model.family is Family.ORNSTEIN_UHLENBECK:
        s2 = model.length_scale**2
        return 1.0, x0 * math.exp(-model.theta * t), s2 * (1.0 - math.exp(-2.0 * model.theta * t))
    if model.family is Family.GAUSSIAN_HEAT:
        return 1.0, x0, 2.0 * model.diffusion * t
    z = np.linspace(lo, hi, 4001)
    p = density(z)
    mass = float(simpson(p, x=z))
    mean = float(simpson(z * p, x=z)) / mass
    var = float(simpson((z - mean) ** 2 * p, x=z)) / mass
    return mass, mean, var


def _bin_probabilities(model, density, edges, mean, var):
    if model.bounded:
        probs = []
        for a, b in zip(edges[:-1], edges[1:]):
            z = np.linspace(a, b, 101)
            probs.append(float(simpson(density(z), x=z)))
        return np.array(probs)
    return np.diff(stats.norm.cdf(edges, loc=mean, scale=math.sqrt(var)))


def run_simulate(cfg, base_dir=None):
    model = cfg.kernel.build()
    sc = cfg.simulate
    spec = SdeSpec.from_model(model)
    if sc.boundary != "auto":
        spec = SdeSpec(spec.drift, spec.diffusion, sc.boundary, spec.domain)
    t_final = sc.dt * sc.n_steps
    start = time.perf_counter()
    x = simulate_paths(spec, sc.x0, sc.dt, sc.n_steps, sc.n_paths, cfg.seed, keep_paths=False)
    elapsed = time.perf_counter() - start
    lo, hi = model.domain
    absorbed = (x <= lo) | (x >= hi) if spec.boundary == "absorb" else np.zeros(x.size, dtype=bool)
    alive = x[~absorbed]
    density = transition_density(model, sc.x0, t_final)
    mass, mean, var = _expected_moments(model, sc.x0, t_final, density, lo, hi)
    metrics = {
        "t_final": t_final,
        "n_paths": sc.n_paths,
        "boundary": spec.boundary,
        "runtime_seconds": elapsed,
        "expected_mean": mean,
        "expected_variance": var,
    }
    props = []
    if alive.size >= 2:
        se = float(alive.std(ddof=1) / math.sqrt(alive.size))
        z = (alive.mean() - mean) / se if se > 0 else math.inf
        metrics.update(mean=float(alive.mean()), variance=float(alive.var(ddof=1)), standard_error=se, mean_z=float(z))
        props.append(PropertyResult("mean_within_3se", abs(z) <= 3.0, abs(z), 3.0))
    if spec.boundary == "absorb":
        metrics["absorbed_fraction"] = float(absorbed.mean())
        metrics["expected_absorbed_fraction"] = 1.0 - mass
    if model.bounded:
        edges = np.linspace(lo, hi, sc.bins + 1)
    else:
        sd = math.sqrt(var)
        edges = np.concatenate([[-np.inf], np.linspace(mean - 4 * sd, mean + 4 * sd, sc.bins - 1), [np.inf]])
    probs = _bin_probabilities(model, density, edges, mean, var)
    counts = np.histogram(alive, bins=edges)[0].astype(float)
    if spec.boundary == "absorb":
        probs = np.append(probs, 1.0 - mass)
        counts = np.append(counts, absorbed.sum())
    probs = probs / probs.sum()
    expected = probs * x.size
    keep = expected > 0
    chi2 = float(np.sum((counts[keep] - expected[keep]) ** 2 / expected[keep]))
    dof = int(keep.sum()) - 1
    pval = float(stats.chi2.sf(chi2, dof))
    metrics.update(chi2=chi2, chi2_dof=dof, chi2_p_value=pval)
    props.append(PropertyResult("occupation_chi2", pval >= sc.alpha, pval, sc.alpha))
    finite = np.isfinite(edges[:-1]) & np.isfinite(edges[1:])
    centers = 0.5 * (edges[:-1] + edges[1:])[finite]
    widths = np.diff(edges)[finite]
    emp = np.histogram(alive, bins=edges)[0][finite] / (x.size * widths)
    rows = list(zip([t_final] * centers.size, centers, emp, density(centers)))
    samples = SnapshotSet([Snapshot(t_final, x)])
    outputs = cfg.outputs
    writers = {
        outputs.grid: lambda p: io.write_grid(p, rows, True),
        outputs.snapshots: lambda p: io.write_snapshots(p, samples),
    }
    return Outcome(metrics, props, writers)


PIPELINES = {
    "regress": run_regress,
    "regress-with-initial": run_regress_with_initial,
    "predict-compare": run_predict_compare,
    "density-combine": run_density_combine,
    "kernel-check": run_kernel_check,
    "simulate": run_simulate,
}


def run(cfg, base_dir="."):
    return PIPELINES[cfg.experiment](cfg, base_dir)
