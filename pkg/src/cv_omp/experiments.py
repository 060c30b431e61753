"""Monte Carlo harness for the CV stopping studies, desk scale by default.

Five named experiments:

  cv_distribution   empirical vs model distribution of CV residuals and of
                    their differences, for fixed recovered signals, with KL
                    divergence of the model against the binned empirical law
  ratio_bound       recovery error of the CV-selected iterate over the best
                    iterate, checked against the isometry-driven ratio bound
                    across CV block sizes and noise levels
  cv_size_sweep     reconstruction error as CV measurements are added at a
                    fixed reconstruction size
  split_tradeoff    splitting a fixed measurement budget between
                    reconstruction and CV
  noise_sweep       CV stopping vs residual-threshold stopping (known noise)
                    vs a no-prior-knowledge stop, across noise powers

Every trial's randomness derives from (seed, point, trial), and aggregation
runs in trial order in the parent process, so the worker count never changes
a result.  CSV outputs carry the full effective configuration in a leading
comment line; wall time lives only in the JSON metadata sidecar, keeping
reruns byte-identical.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
import hashlib
import json
import math
import os
import time

import numpy as np

from . import theory
from .problems import get_ensemble, generate_problem, sample_cv_block
from .pursuit import StoppingRule, cv_residuals, run_omp

EXPERIMENT_NAMES = ("cv_distribution", "ratio_bound", "cv_size_sweep",
                    "split_tradeoff", "noise_sweep")

RESAMPLE_BATCH = 512      # fixed batch split; independent of worker count
_MAX_OMP_RETRIES = 50

QUANTILES = (0.841, 0.977, 0.992, 0.997)


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat configuration; unused fields are ignored by a given experiment."""

    name: str
    seed: int = 0
    trials: int = 500
    resamples: int = 10_000
    bins: int = 100
    workers: int = 1
    ensemble: str = "gaussian"
    n: int = 1000
    m: int = 400
    m_cv: int = 48
    k: int = 50
    d: int = 150
    sigma_n: float = 0.1
    total_m: int = 400
    z0: float = 4.0
    decorrelation: float = 0.0376
    m_cv_grid: tuple = ()
    sigma_n_grid: tuple = ()
    noise_power_grid: tuple = ()


def default_config(name: str, scale: str = "desk", seed: int = 0,
                   workers: int = 1) -> ExperimentConfig:
    """Experiment defaults; desk scale runs in minutes on one core, paper
    scale uses the full trial and resample counts."""
    if name not in EXPERIMENT_NAMES:
        raise ValueError(f"unknown experiment {name!r}, expected one of {EXPERIMENT_NAMES}")
    if scale not in ("desk", "paper"):
        raise ValueError(f"scale must be 'desk' or 'paper', got {scale!r}")
    desk = scale == "desk"
    base = dict(name=name, seed=seed, workers=workers,
                trials=500 if desk else 1000,
                resamples=10_000 if desk else 100_000)
    if name == "cv_distribution":
        return ExperimentConfig(**base, n=512, m=96, m_cv=48, k=50, d=50,
                                sigma_n=0.1, bins=100)
    if name == "ratio_bound":
        return ExperimentConfig(**{**base, "trials": 500 if desk else 5000},
                                n=1000, m=400, k=50, d=150,
                                m_cv_grid=(48, 64, 80, 96),
                                sigma_n_grid=(0.05, 0.1),
                                z0=4.0, decorrelation=0.0376)
    if name == "cv_size_sweep":
        return ExperimentConfig(**base, n=1000, m=360, k=50, d=150,
                                sigma_n=math.sqrt(0.1),
                                m_cv_grid=tuple(range(10, 81, 10)))
    if name == "split_tradeoff":
        return ExperimentConfig(**base, n=1000, total_m=400, k=50, d=150,
                                sigma_n=math.sqrt(0.1),
                                m_cv_grid=tuple(range(100, 9, -10)))
    return ExperimentConfig(**base, n=1000, total_m=400, m_cv=48, k=50, d=150,
                            noise_power_grid=tuple(round(0.02 * i, 10)
                                                   for i in range(1, 11)))


def validate_config(config: ExperimentConfig) -> None:
    if config.name not in EXPERIMENT_NAMES:
        raise ValueError(f"unknown experiment {config.name!r}")
    if config.seed < 0:
        raise ValueError("seed must be nonnegative")
    if config.trials < 1 or config.resamples < 1 or config.bins < 1 or config.workers < 1:
        raise ValueError("trials, resamples, bins and workers must be at least 1")
    get_ensemble(config.ensemble)
    if config.name == "ratio_bound" and not (config.m_cv_grid and config.sigma_n_grid):
        raise ValueError("ratio_bound needs m_cv_grid and sigma_n_grid")
    if config.name in ("cv_size_sweep", "split_tradeoff") and not config.m_cv_grid:
        raise ValueError(f"{config.name} needs m_cv_grid")
    if config.name == "noise_sweep" and not config.noise_power_grid:
        raise ValueError("noise_sweep needs noise_power_grid")


@dataclass(frozen=True)
class ExperimentResult:
    name: str
    point_keys: tuple
    rows: tuple                 # ((point values...), statistic, value, trials)
    config: ExperimentConfig
    wall_time: float
    extras: dict

    def value(self, point, statistic):
        point = tuple(point)
        for pt, stat, val, _ in self.rows:
            if pt == point and stat == statistic:
                return val
        raise KeyError(f"no row for point={point}, statistic={statistic!r}")

    def series(self, statistic):
        """point tuple -> value for one statistic."""
        return {pt: val for pt, stat, val, _ in self.rows if stat == statistic}

    def csv_text(self) -> str:
        cfg = json.dumps(asdict(self.config), sort_keys=True)
        lines = [f"# config={cfg}"]
        lines.append(",".join(list(self.point_keys) + ["statistic", "value", "trials"]))
        for pt, stat, val, trials in self.rows:
            cells = [_fmt(v) for v in pt] + [stat, _fmt(val), str(int(trials))]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def metadata(self) -> dict:
        cfg = asdict(self.config)
        canon = json.dumps(cfg, sort_keys=True)
        return {
            "experiment": self.name,
            "config": cfg,
            "config_sha256": hashlib.sha256(canon.encode()).hexdigest(),
            "wall_time_s": self.wall_time,
            "rows": len(self.rows),
            "extras": self.extras,
        }

    def save(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, f"{self.name}.csv")
        meta_path = os.path.join(out_dir, f"{self.name}.meta.json")
        with open(csv_path, "w") as fh:
            fh.write(self.csv_text())
        with open(meta_path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return csv_path, meta_path


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from integer parts via the seeding machinery."""
    seq = np.random.SeedSequence([int(p) for p in parts])
    a, b = seq.generate_state(2)
    return (int(a) << 32) | int(b)


def _rng(*parts) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(p) for p in parts]))


def _map_tasks(fn, tasks, workers: int):
    """Order-preserving map, optionally over a process pool."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


# ---------------------------------------------------------------------------
# histograms and KL divergence

def bin_edges(approx: theory.GaussianApprox, bins: int) -> np.ndarray:
    """Equal-width bins spanning the model mean +/- 5 standard deviations."""
    if bins < 1:
        raise ValueError("bins must be at least 1")
    if approx.variance <= 0:
        raise theory.DegenerateDistributionError("zero-variance model has no histogram span")
    half = 5.0 * approx.std
    return np.linspace(approx.mean - half, approx.mean + half, bins + 1)


def histogram_counts(samples, edges: np.ndarray) -> np.ndarray:
    """Counts per bin; samples beyond the span land in the edge bins."""
    clipped = np.clip(np.asarray(samples, dtype=float), edges[0], edges[-1])
    counts, _ = np.histogram(clipped, bins=edges)
    return counts


def kl_divergence(counts, edges: np.ndarray, approx: theory.GaussianApprox) -> float:
    """KL(model || empirical) in nats over the binned support.

    Model tail mass beyond the span folds into the edge bins, mirroring the
    clipping of samples; empirical masses get add-one smoothing.
    """
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total < 1:
        raise ValueError("histogram is empty")
    if approx.variance <= 0:
        raise theory.DegenerateDistributionError("zero-variance model")
    std = approx.std
    cdf = np.array([theory.phi((e - approx.mean) / std) for e in edges])
    p_model = np.diff(cdf)
    p_model[0] += cdf[0]
    p_model[-1] += 1.0 - cdf[-1]
    p_emp = (counts + 1.0) / (total + counts.size)
    return float(np.sum(p_model * (np.log(p_model) - np.log(p_emp))))


# ---------------------------------------------------------------------------
# CV-block resampling with fixed error vectors

def _resample_batch(args):
    (seed, index, count, dx_mat, sigma_n, m, m_cv, kind) = args
    ens = get_ensemble(kind)
    rng = _rng(seed, 11, index)
    nvec, u = dx_mat.shape
    a = ens.draw(rng, count * m_cv, u, m)
    noise = sigma_n * rng.standard_normal(count * m_cv) / math.sqrt(m)
    proj = a @ dx_mat.T + noise[:, None]
    per = proj.reshape(count, m_cv, nvec)
    return np.einsum("bmv,bmv->bv", per, per)


def resample_cv_errors(delta_xs, sigma_n: float, m: int, m_cv: int, ensemble,
                       resamples: int, seed: int, workers: int = 1) -> np.ndarray:
    """Empirical CV residuals of fixed error vectors over fresh CV blocks.

    One shared block (matrix and noise) per resample serves every vector, so
    differences across vectors are the paired quantities the comparison
    theory talks about.  Returns shape (len(delta_xs), resamples).
    """
    ens = get_ensemble(ensemble)
    stack = np.stack([np.asarray(dx, dtype=float) for dx in delta_xs])
    active = np.flatnonzero(np.any(stack != 0.0, axis=0))
    dx_mat = stack[:, active]           # only columns that matter get drawn
    tasks = []
    index = 0
    left = int(resamples)
    while left > 0:
        count = min(RESAMPLE_BATCH, left)
        tasks.append((seed, index, count, dx_mat, float(sigma_n), int(m), int(m_cv), ens.kind))
        index += 1
        left -= count
    parts = _map_tasks(_resample_batch, tasks, workers)
    return np.concatenate(parts, axis=0).T


# ---------------------------------------------------------------------------
# cv_distribution

def run_cv_distribution(config: ExperimentConfig) -> ExperimentResult:
    validate_config(config)
    t0 = time.perf_counter()
    ens = get_ensemble(config.ensemble)
    dims = (config.n, config.m, config.m_cv, config.k)
    d = config.d
    if d < 2:
        raise ValueError("cv_distribution needs d >= 2 to form an iterate pair")

    retries = 0
    trace = None
    prob = None
    for attempt in range(_MAX_OMP_RETRIES):
        prob = generate_problem(dims, config.sigma_n, ens,
                                seed=derive_seed(config.seed, 1, attempt))
        trace = run_omp(prob, StoppingRule.max_iterations(d))
        if trace.depth == d:
            break
        retries += 1
    else:
        raise theory.DegenerateDistributionError(
            f"no non-degenerate pursuit run in {_MAX_OMP_RETRIES} attempts")

    x = prob.signal.values
    rec_p, rec_q = trace.record(d), trace.record(d - 1)
    dx_p = x - rec_p.dense(config.n)
    dx_q = x - rec_q.dense(config.n)
    gamma = ens.entry_sq_variance(config.m)
    model_one = theory.generalized_cv_distribution(
        dx_p, config.sigma_n, config.m, config.m_cv, gamma)
    model_diff = theory.generalized_cv_diff_distribution(
        dx_p, dx_q, config.sigma_n, config.m, config.m_cv, gamma)
    pair = theory.generalized_error_pair(x, rec_p.dense(config.n), rec_q.dense(config.n),
                                         config.sigma_n)

    samples = resample_cv_errors([dx_p, dx_q], config.sigma_n, config.m, config.m_cv,
                                 ens, config.resamples, derive_seed(config.seed, 2),
                                 workers=config.workers)
    targets = (
        ("cv_residual", samples[0], model_one),
        ("cv_residual_diff", samples[0] - samples[1], model_diff),
    )
    rows = []
    for label, data, model in targets:
        edges = bin_edges(model, config.bins)
        counts = histogram_counts(data, edges)
        kl = kl_divergence(counts, edges, model)
        point = (label,)
        rows.append((point, "kl", kl, config.resamples))
        rows.append((point, "emp_mean", float(np.mean(data)), config.resamples))
        rows.append((point, "emp_var", float(np.var(data, ddof=1)), config.resamples))
        rows.append((point, "model_mean", model.mean, config.resamples))
        rows.append((point, "model_var", model.variance, config.resamples))
        masses = counts / counts.sum()
        for b in range(config.bins):
            rows.append((point, f"hist_{b:03d}", float(masses[b]), config.resamples))
    extras = {
        "omp_retries": retries,
        "pair_err_p": pair.err_p,
        "pair_err_q": pair.err_q,
        "pair_rho": pair.rho,
    }
    return ExperimentResult(name=config.name, point_keys=("target",), rows=tuple(rows),
                            config=config, wall_time=time.perf_counter() - t0,
                            extras=extras)


# ---------------------------------------------------------------------------
# ratio_bound

def _ratio_bound_trial(args):
    (config, sigma_idx, trial) = args
    sigma_n = config.sigma_n_grid[sigma_idx]
    pseed = derive_seed(config.seed, 1, sigma_idx, trial)
    prob = generate_problem((config.n, config.m, config.m_cv_grid[0], config.k),
                            sigma_n, config.ensemble, seed=pseed)
    trace = run_omp(prob, StoppingRule.max_iterations(config.d))
    if trace.degenerate or trace.depth < config.d:
        return None
    rec_o = trace.record(trace.selected_oracle)
    eligible = set(prob.signal.support) <= set(rec_o.support)
    err_o = rec_o.recovery_error + sigma_n ** 2
    ratios = []
    for i, v in enumerate(config.m_cv_grid):
        block_seed = derive_seed(config.seed, 2, sigma_idx, trial, i)
        a_cv, y_cv = sample_cv_block(prob, block_seed, m_cv=v)
        curve = cv_residuals(trace, a_cv, y_cv)
        chosen = trace.record(int(np.argmin(curve)) + 1)
        ratios.append((chosen.recovery_error + sigma_n ** 2) / err_o)
    return eligible, ratios


def _quantile_with_se(sorted_vals: np.ndarray, q: float):
    """Quantile plus a standard error from the order-statistic interval."""
    npts = sorted_vals.size
    est = float(np.quantile(sorted_vals, q))
    spread = 2.0 * math.sqrt(npts * q * (1.0 - q))
    lo = min(max(int(math.floor(npts * q - spread)), 0), npts - 1)
    hi = min(max(int(math.ceil(npts * q + spread)), 0), npts - 1)
    return est, float(sorted_vals[hi] - sorted_vals[lo]) / 4.0


def run_ratio_bound(config: ExperimentConfig) -> ExperimentResult:
    validate_config(config)
    t0 = time.perf_counter()
    confidence_floor = 1.0 - (config.d - config.k) * (1.0 - theory.phi(config.z0))
    rows = []
    degenerate_total = 0
    for sigma_idx, sigma_n in enumerate(config.sigma_n_grid):
        tasks = [(config, sigma_idx, t) for t in range(config.trials)]
        outcomes = _map_tasks(_ratio_bound_trial, tasks, config.workers)
        degenerate = sum(1 for o in outcomes if o is None)
        degenerate_total += degenerate
        kept = [o for o in outcomes if o is not None]
        for i, v in enumerate(config.m_cv_grid):
            point = (sigma_n, v)
            bound = theory.worst_ratio_bound(config.z0, v, config.decorrelation)
            ratios = np.array([o[1][i] for o in kept if o[0]])
            n_eligible = ratios.size
            rows.append((point, "ratio_bound", bound, config.trials))
            rows.append((point, "confidence_floor", confidence_floor, config.trials))
            rows.append((point, "eligible_trials", float(n_eligible), config.trials))
            rows.append((point, "degenerate_trials", float(degenerate), config.trials))
            if n_eligible:
                frac = float(np.mean(ratios <= bound))
                db = np.sort(10.0 * np.log10(ratios))
                rows.append((point, "frac_within_bound", frac, n_eligible))
                for q in QUANTILES:
                    est, se = _quantile_with_se(db, q)
                    tag = f"q{q * 1000:.0f}"
                    rows.append((point, f"{tag}_db", est, n_eligible))
                    rows.append((point, f"{tag}_db_se", se, n_eligible))
            else:
                rows.append((point, "frac_within_bound", math.nan, 0))
                for q in QUANTILES:
                    tag = f"q{q * 1000:.0f}"
                    rows.append((point, f"{tag}_db", math.nan, 0))
                    rows.append((point, f"{tag}_db_se", math.nan, 0))
    extras = {"degenerate_trials_total": degenerate_total}
    return ExperimentResult(name=config.name, point_keys=("sigma_n", "m_cv"),
                            rows=tuple(rows), config=config,
                            wall_time=time.perf_counter() - t0, extras=extras)


# ---------------------------------------------------------------------------
# sweeps

def _rule_stop_error(trace, tau: float):
    """Recovery error at the first iterate with residual power below tau;
    falls back to the last iterate when the threshold is never crossed."""
    for rec in trace.records:
        if rec.residual_sq < tau:
            return rec.recovery_error, True
    return trace.records[-1].recovery_error, False


def _cv_size_trial(args):
    (config, trial) = args
    pseed = derive_seed(config.seed, 1, trial)
    prob = generate_problem((config.n, config.m, config.m_cv_grid[0], config.k),
                            config.sigma_n, config.ensemble, seed=pseed)
    trace = run_omp(prob, StoppingRule.max_iterations(config.d))
    if trace.degenerate or not trace.records:
        return None
    errs = []
    for i, v in enumerate(config.m_cv_grid):
        a_cv, y_cv = sample_cv_block(prob, derive_seed(config.seed, 2, trial, i), m_cv=v)
        curve = cv_residuals(trace, a_cv, y_cv)
        errs.append(trace.record(int(np.argmin(curve)) + 1).recovery_error)
    base_err, crossed = _rule_stop_error(trace, config.sigma_n ** 2)
    return errs, base_err, crossed


def _mean_and_stderr(vals: np.ndarray):
    mean = float(np.mean(vals))
    if vals.size < 2:
        return mean, math.nan
    return mean, float(np.std(vals, ddof=1) / math.sqrt(vals.size))


def run_cv_size_sweep(config: ExperimentConfig) -> ExperimentResult:
    validate_config(config)
    t0 = time.perf_counter()
    tasks = [(config, t) for t in range(config.trials)]
    outcomes = [o for o in _map_tasks(_cv_size_trial, tasks, config.workers) if o is not None]
    n_kept = len(outcomes)
    base = np.array([o[1] for o in outcomes])
    base_mean, base_se = _mean_and_stderr(base)
    never_crossed = sum(1 for o in outcomes if not o[2])
    rows = []
    for i, v in enumerate(config.m_cv_grid):
        point = (v,)
        errs = np.array([o[0][i] for o in outcomes])
        mean, se = _mean_and_stderr(errs)
        rows.append((point, "cv_mean_error", mean, n_kept))
        rows.append((point, "cv_stderr", se, n_kept))
        rows.append((point, "residual_rule_mean_error", base_mean, n_kept))
        rows.append((point, "residual_rule_stderr", base_se, n_kept))
    extras = {"degenerate_trials": config.trials - n_kept,
              "threshold_never_crossed": never_crossed}
    return ExperimentResult(name=config.name, point_keys=("m_cv",), rows=tuple(rows),
                            config=config, wall_time=time.perf_counter() - t0,
                            extras=extras)


def _tradeoff_trial(args):
    (config, point_idx, trial) = args
    v = config.m_cv_grid[point_idx]
    m = config.total_m - v
    pseed = derive_seed(config.seed, 1, trial)   # same signal at every split
    prob = generate_problem((config.n, m, v, config.k), config.sigma_n,
                            config.ensemble, seed=pseed)
    d = min(config.d, m)
    trace = run_omp(prob, StoppingRule.max_iterations(d))
    if trace.degenerate or not trace.records:
        return None
    cv_err = trace.record(trace.selected_cv).recovery_error
    rule_err, crossed = _rule_stop_error(trace, config.sigma_n ** 2)
    return cv_err, rule_err, crossed


def _tradeoff_ref_trial(args):
    (config, trial) = args
    pseed = derive_seed(config.seed, 1, trial)
    prob = generate_problem((config.n, config.total_m, 1, config.k), config.sigma_n,
                            config.ensemble, seed=pseed)
    trace = run_omp(prob, StoppingRule.residual_threshold(config.sigma_n ** 2))
    if not trace.records:
        return None
    return trace.records[-1].recovery_error


def run_split_tradeoff(config: ExperimentConfig) -> ExperimentResult:
    validate_config(config)
    t0 = time.perf_counter()
    if max(config.m_cv_grid) >= config.total_m:
        raise ValueError("every split must leave at least one reconstruction measurement")
    ref_tasks = [(config, t) for t in range(config.trials)]
    ref = np.array([r for r in _map_tasks(_tradeoff_ref_trial, ref_tasks, config.workers)
                    if r is not None])
    ref_mean, ref_se = _mean_and_stderr(ref)
    rows = []
    dropped = config.trials - ref.size
    never_crossed = 0
    for point_idx, v in enumerate(config.m_cv_grid):
        tasks = [(config, point_idx, t) for t in range(config.trials)]
        outcomes = [o for o in _map_tasks(_tradeoff_trial, tasks, config.workers)
                    if o is not None]
        never_crossed += sum(1 for o in outcomes if not o[2])
        dropped += config.trials - len(outcomes)
        cv = np.array([o[0] for o in outcomes])
        rule = np.array([o[1] for o in outcomes])
        cv_mean, cv_se = _mean_and_stderr(cv)
        rule_mean, rule_se = _mean_and_stderr(rule)
        point = (v,)
        rows.append((point, "cv_mean_error", cv_mean, cv.size))
        rows.append((point, "cv_stderr", cv_se, cv.size))
        rows.append((point, "residual_rule_mean_error", rule_mean, rule.size))
        rows.append((point, "residual_rule_stderr", rule_se, rule.size))
        rows.append((point, "full_m_mean_error", ref_mean, ref.size))
        rows.append((point, "full_m_stderr", ref_se, ref.size))
    extras = {"dropped_trials": dropped, "threshold_never_crossed": never_crossed}
    return ExperimentResult(name=config.name, point_keys=("m_cv",), rows=tuple(rows),
                            config=config, wall_time=time.perf_counter() - t0,
                            extras=extras)


def _noise_trial(args):
    (config, point_idx, trial) = args
    noise_power = config.noise_power_grid[point_idx]
    sigma_n = math.sqrt(noise_power)
    pseed = derive_seed(config.seed, 1, trial)   # same signal and matrices across powers
    m_rec = config.total_m - config.m_cv
    cv_prob = generate_problem((config.n, m_rec, config.m_cv, config.k), sigma_n,
                               config.ensemble, seed=pseed)
    cv_trace = run_omp(cv_prob, StoppingRule.max_iterations(min(config.d, m_rec)))
    if cv_trace.degenerate or not cv_trace.records:
        return None
    cv_err = cv_trace.record(cv_trace.selected_cv).recovery_error

    base_prob = generate_problem((config.n, config.total_m, 1, config.k), sigma_n,
                                 config.ensemble, seed=pseed)
    base_trace = run_omp(base_prob, StoppingRule.relative_residual(1e-5))
    if not base_trace.records:
        return None
    no_prior_err = base_trace.records[-1].recovery_error
    rule_err, crossed = _rule_stop_error(base_trace, noise_power)
    return cv_err, rule_err, no_prior_err, crossed


def run_noise_sweep(config: ExperimentConfig) -> ExperimentResult:
    validate_config(config)
    t0 = time.perf_counter()
    if config.m_cv >= config.total_m:
        raise ValueError("m_cv must leave at least one reconstruction measurement")
    rows = []
    dropped = 0
    never_crossed = 0
    for point_idx, noise_power in enumerate(config.noise_power_grid):
        tasks = [(config, point_idx, t) for t in range(config.trials)]
        outcomes = [o for o in _map_tasks(_noise_trial, tasks, config.workers)
                    if o is not None]
        dropped += config.trials - len(outcomes)
        never_crossed += sum(1 for o in outcomes if not o[3])
        cv = np.array([o[0] for o in outcomes])
        rule = np.array([o[1] for o in outcomes])
        noprior = np.array([o[2] for o in outcomes])
        point = (noise_power,)
        for label, vals in (("cv", cv), ("residual_rule", rule), ("no_prior", noprior)):
            mean, se = _mean_and_stderr(vals)
            rows.append((point, f"{label}_mean_error", mean, vals.size))
            rows.append((point, f"{label}_stderr", se, vals.size))
    extras = {"dropped_trials": dropped, "threshold_never_crossed": never_crossed}
    return ExperimentResult(name=config.name, point_keys=("noise_power",), rows=tuple(rows),
                            config=config, wall_time=time.perf_counter() - t0,
                            extras=extras)


_RUNNERS = {
    "cv_distribution": run_cv_distribution,
    "ratio_bound": run_ratio_bound,
    "cv_size_sweep": run_cv_size_sweep,
    "split_tradeoff": run_split_tradeoff,
    "noise_sweep": run_noise_sweep,
}


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    validate_config(config)
    return _RUNNERS[config.name](config)
