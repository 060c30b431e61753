"""Command line interface.

Subcommands:
  generate    draw a sensing problem and write it as a JSON bundle
  recover     pursuit with CV stopping on a bundle, report + interval
  theory      closed-form calculators printing JSON
  rip         restricted isometry diagnostics for a concrete matrix
  experiment  Monte Carlo runners writing CSV plus a metadata sidecar

Exit codes: 0 success, 2 bad configuration or usage, 3 numerical
degeneracy (partial output is still written, flagged).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys

import numpy as np

from . import experiments, problems, pursuit, rip, theory
from .solver import DegenerateSupportError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(Exception):
    """Bad flag or config-file input caught before any computation."""


def _clean(value):
    """JSON-safe scalars: swap non-finite floats for None."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _emit(payload, out=None):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# generate

def _cmd_generate(args) -> int:
    dims = problems.ProblemDims(n=args.n, m=args.m, m_cv=args.m_cv, k=args.k)
    problem = problems.generate_problem(
        dims, sigma_n=args.sigma_n, ensemble=args.ensemble, seed=args.seed,
        normalize_columns=args.normalize_columns)
    problems.save_problem(problem, args.out)
    _emit({
        "written": args.out,
        "n": dims.n, "m": dims.m, "m_cv": dims.m_cv, "k": dims.k,
        "sigma_n": args.sigma_n, "ensemble": args.ensemble,
        "seed": args.seed, "normalize_columns": bool(args.normalize_columns),
    })
    return EXIT_OK


# ---------------------------------------------------------------------------
# recover

def _cmd_recover(args) -> int:
    problem = problems.load_problem(args.bundle)
    dims = problem.dims
    d = args.d if args.d is not None else min(dims.m, dims.n)
    estimate, trace = pursuit.run_omp_cv(problem, d)
    rec = trace.record(trace.selected_cv)
    noise_hat = pursuit.estimate_noise_power(problem.a, problem.y, estimate)

    interval = None
    interval_note = None
    try:
        box = theory.estimation_interval(rec.cv_residual, args.z, dims.m,
                                         dims.m_cv, noise_power=noise_hat)
        interval = {"lower": box.lower, "upper": box.upper,
                    "confidence": box.confidence, "z": box.z}
    except theory.InfeasibleConfidenceError as exc:
        interval_note = str(exc)

    payload = {
        "config": {
            "bundle": args.bundle, "d": d, "z": args.z,
            "n": dims.n, "m": dims.m, "m_cv": dims.m_cv,
            "sigma_n": problem.sigma_n, "ensemble": problem.ensemble.kind,
            "seed": problem.seed,
        },
        "selected_iteration": trace.selected_cv,
        "support": [int(j) for j in rec.support],
        "coefficients": [float(c) for c in rec.coefficients],
        "eps_cv": rec.cv_residual,
        "noise_power_estimate": noise_hat,
        "interval": interval,
        "interval_note": interval_note,
        "iterations": trace.depth,
        "stop_reason": trace.stop_reason,
        "degenerate": trace.degenerate,
        "recovery_error": rec.recovery_error,
        "oracle_iteration": trace.selected_oracle,
    }
    if args.trace_out:
        pursuit.trace_to_csv(trace, args.trace_out)
    _emit(payload, args.out)
    return EXIT_NUMERICAL if trace.degenerate else EXIT_OK


# ---------------------------------------------------------------------------
# theory calculators

def _calc_interval(args) -> dict:
    box = theory.estimation_interval(args.eps_cv, args.z, args.m, args.m_cv,
                                     noise_power=args.sigma_n_sq)
    lo_scale, hi_scale = theory.interval_scale_factors(args.z, args.m,
                                                       args.m_cv)
    return {"lower": box.lower, "upper": box.upper,
            "confidence": box.confidence, "z": box.z,
            "scale_lower": lo_scale, "scale_upper": hi_scale}


def _calc_comparison(args) -> dict:
    pair = theory.GeneralizedErrorPair(args.err_p, args.err_q, args.rho)
    z, prob = theory.comparison_success(pair, args.m_cv)
    return {"z": z, "probability": prob}


def _calc_min_ratio(args) -> dict:
    if args.decorrelation is not None and args.rho is not None:
        raise ConfigError("give either --rho or --decorrelation, not both")
    if args.decorrelation is not None:
        ratio = theory.worst_ratio_bound(args.z0, args.m_cv,
                                         args.decorrelation)
        spread = {"decorrelation": args.decorrelation}
    else:
        rho = 0.0 if args.rho is None else args.rho
        ratio = theory.min_ratio_for_confidence(args.z0, args.m_cv, rho)
        spread = {"rho": rho}
    return {"ratio": ratio, "z0": args.z0, "m_cv": args.m_cv,
            "confidence": theory.phi(args.z0), **spread}


def _uniform_eta(delta: float, eta) -> float:
    if eta is not None:
        return eta
    return theory.block_correction_bound(delta, p=1, q=2, missing=0)


def _calc_constants(args) -> dict:
    eta = _uniform_eta(args.delta, args.eta)
    consts = theory.ric_bound_constants(args.delta, eta)
    return {"delta": args.delta, **dataclasses.asdict(consts)}


def _calc_correction_bound(args) -> dict:
    eta = theory.block_correction_bound(args.delta, p=args.p, q=args.q,
                                        missing=args.missing)
    return {"eta": eta, "delta": args.delta, "p": args.p, "q": args.q,
            "missing": args.missing}


def _calc_distribution(args) -> dict:
    approx = theory.cv_residual_distribution(args.eps_x, args.sigma_n,
                                             args.m, args.m_cv)
    return {"mean": approx.mean, "variance": approx.variance,
            "std": approx.std}


def _calc_diff_distribution(args) -> dict:
    pair = theory.GeneralizedErrorPair(args.err_p, args.err_q, args.rho)
    approx = theory.cv_diff_distribution(pair, args.m, args.m_cv)
    return {"mean": approx.mean, "variance": approx.variance,
            "std": approx.std}


def _calc_separation(args) -> dict:
    eta = _uniform_eta(args.delta, args.eta)
    consts = theory.ric_bound_constants(args.delta, eta)
    g = theory.correlation_floor(args.snr, consts)
    z = theory.separation_z(args.snr, args.m_cv, consts)
    prob = theory.phi(z)
    return {"correlation_floor": g, "z": z, "probability": prob,
            "miss_probability": 1.0 - prob}


_CALCULATORS = {
    "interval": _calc_interval,
    "comparison": _calc_comparison,
    "min-ratio": _calc_min_ratio,
    "constants": _calc_constants,
    "correction-bound": _calc_correction_bound,
    "distribution": _calc_distribution,
    "diff-distribution": _calc_diff_distribution,
    "separation": _calc_separation,
}


def _cmd_theory(args) -> int:
    payload = _CALCULATORS[args.calc](args)
    _emit({k: _clean(v) for k, v in payload.items()}, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# rip

def _rip_matrix(args) -> tuple[np.ndarray, dict]:
    if args.bundle:
        problem = problems.load_problem(args.bundle)
        return problem.a, {"bundle": args.bundle,
                           "rows": problem.dims.m, "cols": problem.dims.n}
    if args.rows is None or args.cols is None:
        raise ConfigError("need --bundle, or --rows and --cols")
    ensemble = problems.get_ensemble(args.ensemble)
    rng = np.random.default_rng(args.seed)
    a = ensemble.draw(rng, args.rows, args.cols, args.rows)
    return a, {"rows": args.rows, "cols": args.cols,
               "ensemble": args.ensemble, "seed": args.seed}


def _cmd_rip(args) -> int:
    a, source = _rip_matrix(args)
    estimates = rip.ric_profile(a, args.max_order, mode=args.mode,
                                samples=args.samples, seed=args.seed,
                                cap=args.cap)
    advisory = any(e.mode != "exhaustive" for e in estimates)
    report = None
    if args.trials > 0:
        report = rip.check_ric_consequences(a, [e.delta for e in estimates],
                                            trials=args.trials,
                                            seed=args.seed)
    if args.format == "json":
        payload = {
            "matrix": source,
            "max_order": args.max_order,
            "advisory": advisory,
            "ric": [dataclasses.asdict(e) for e in estimates],
        }
        if report is not None:
            payload["checks"] = [
                {k: _clean(v) for k, v in dataclasses.asdict(c).items()}
                for c in report.checks]
            payload["total_violations"] = report.total_violations
        _emit(payload, args.out)
    else:
        lines = [f"# config={json.dumps({**source, 'advisory': advisory}, sort_keys=True)}"]
        lines.append("order,delta,mode,supports_checked")
        for e in estimates:
            lines.append(f"{e.order},{e.delta!r},{e.mode},{e.supports_checked}")
        if report is not None:
            lines.append("")
            lines.append("check,attempted,checked,skipped,violations,"
                         "min_slack,max_slack")
            for c in report.checks:
                lines.append(f"{c.name},{c.attempted},{c.checked},{c.skipped},"
                             f"{c.violations},{c.min_slack!r},{c.max_slack!r}")
        text = "\n".join(lines) + "\n"
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiment

_INT_KEYS = ("seed", "trials", "resamples", "bins", "workers", "n", "m",
             "m_cv", "k", "d", "total_m")
_FLOAT_KEYS = ("sigma_n", "z0", "decorrelation")
_STR_KEYS = ("ensemble",)
_INT_TUPLE_KEYS = ("m_cv_grid",)
_FLOAT_TUPLE_KEYS = ("sigma_n_grid", "noise_power_grid")


def _parse_config_value(key: str, text: str):
    text = text.strip()
    try:
        if key in _INT_KEYS:
            return int(text)
        if key in _FLOAT_KEYS:
            return float(text)
        if key in _STR_KEYS:
            return text
        if key in _INT_TUPLE_KEYS:
            return tuple(int(v) for v in text.split(",") if v.strip())
        if key in _FLOAT_TUPLE_KEYS:
            return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None
    if key == "name":
        raise ConfigError("experiment name is given positionally, not as a key")
    raise ConfigError(f"unknown config key {key!r}")


def _read_config_file(path: str) -> dict:
    overrides = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip()
            overrides[key] = _parse_config_value(key, value)
    return overrides


def _parse_set_overrides(pairs) -> dict:
    overrides = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"--set needs key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        key = key.strip()
        overrides[key] = _parse_config_value(key, value)
    return overrides


def _cmd_experiment(args) -> int:
    config = experiments.default_config(args.name, scale=args.scale)
    overrides = {}
    if args.config:
        overrides.update(_read_config_file(args.config))
    overrides.update(_parse_set_overrides(args.set))
    for flag in ("seed", "trials", "resamples", "workers"):
        value = getattr(args, flag)
        if value is not None:
            overrides[flag] = value
    if overrides:
        config = dataclasses.replace(config, **overrides)
    experiments.validate_config(config)
    result = experiments.run_experiment(config)
    csv_path, meta_path = result.save(args.out_dir)
    _emit({
        "experiment": result.name,
        "csv": csv_path,
        "metadata": meta_path,
        "rows": len(result.rows),
        "wall_time_s": result.wall_time,
    })
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser wiring

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cv-omp",
        description="Sparse recovery with cross-validation stopping: "
                    "solvers, calculators and Monte Carlo experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a sensing problem bundle")
    gen.add_argument("--out", required=True, help="output bundle path (JSON)")
    gen.add_argument("--n", type=int, required=True, help="signal length")
    gen.add_argument("--m", type=int, required=True,
                     help="reconstruction measurements")
    gen.add_argument("--m-cv", type=int, required=True,
                     help="cross validation measurements")
    gen.add_argument("--k", type=int, required=True, help="sparsity")
    gen.add_argument("--sigma-n", type=float, default=0.1,
                     help="noise scale (noise power is sigma_n^2)")
    gen.add_argument("--ensemble", default="gaussian",
                     choices=("gaussian", "rademacher"))
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--normalize-columns", action="store_true",
                     help="rescale columns to expected unit norm")
    gen.set_defaults(func=_cmd_generate)

    rec = sub.add_parser("recover", help="run the CV-stopped pursuit")
    rec.add_argument("bundle", help="problem bundle path")
    rec.add_argument("--d", type=int, default=None,
                     help="pursuit depth (default min(m, n))")
    rec.add_argument("--z", type=float, default=3.0,
                     help="standard normal quantile multiple for the interval")
    rec.add_argument("--trace-out", default=None,
                     help="write the per-iteration trace CSV here")
    rec.add_argument("--out", default=None,
                     help="write the JSON report here instead of stdout")
    rec.set_defaults(func=_cmd_recover)

    theo = sub.add_parser("theory", help="closed-form calculators")
    calc = theo.add_subparsers(dest="calc", required=True)

    p = calc.add_parser("interval", help="recovery error interval from eps_cv")
    p.add_argument("--eps-cv", type=float, required=True)
    p.add_argument("--z", type=float, default=3.0)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--m-cv", type=int, required=True)
    p.add_argument("--sigma-n-sq", type=float, default=0.0)

    p = calc.add_parser("comparison", help="odds the worse candidate shows "
                                           "the larger CV residual")
    p.add_argument("--err-p", type=float, required=True,
                   help="generalized error of the worse candidate")
    p.add_argument("--err-q", type=float, required=True)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--m-cv", type=int, required=True)

    p = calc.add_parser("min-ratio", help="smallest detectable error ratio")
    p.add_argument("--z0", type=float, required=True)
    p.add_argument("--m-cv", type=int, required=True)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--decorrelation", type=float, default=None,
                   help="1 - rho^2, if given instead of --rho")

    p = calc.add_parser("constants", help="iterate-separation constants from "
                                          "a uniform isometry constant")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--eta", type=float, default=None,
                   help="block correction bound override")

    p = calc.add_parser("correction-bound", help="block coefficient "
                                                 "correction bound")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--missing", type=int, default=0)

    p = calc.add_parser("distribution", help="CV residual distribution")
    p.add_argument("--eps-x", type=float, required=True)
    p.add_argument("--sigma-n", type=float, default=0.0)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--m-cv", type=int, required=True)

    p = calc.add_parser("diff-distribution",
                        help="CV residual difference distribution")
    p.add_argument("--err-p", type=float, required=True)
    p.add_argument("--err-q", type=float, required=True)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--m-cv", type=int, required=True)

    p = calc.add_parser("separation", help="guaranteed comparison score at a "
                                           "missing signal-to-noise ratio")
    p.add_argument("--snr", type=float, required=True)
    p.add_argument("--m-cv", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--eta", type=float, default=None)

    for sp in calc.choices.values():
        sp.add_argument("--out", default=None)
        sp.set_defaults(func=_cmd_theory)

    rp = sub.add_parser("rip", help="restricted isometry diagnostics")
    rp.add_argument("--bundle", default=None,
                    help="take the matrix from a problem bundle")
    rp.add_argument("--rows", type=int, default=None)
    rp.add_argument("--cols", type=int, default=None)
    rp.add_argument("--ensemble", default="gaussian",
                    choices=("gaussian", "rademacher"))
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("--max-order", type=int, default=4)
    rp.add_argument("--mode", default="auto",
                    choices=("auto", "exhaustive", "sampled"))
    rp.add_argument("--samples", type=int, default=2000,
                    help="supports per order in sampled mode")
    rp.add_argument("--cap", type=int, default=rip.EXHAUSTIVE_CAP,
                    help="exhaustive enumeration cap")
    rp.add_argument("--trials", type=int, default=1000,
                    help="consequence-check draws (0 to skip)")
    rp.add_argument("--format", default="json", choices=("json", "csv"))
    rp.add_argument("--out", default=None)
    rp.set_defaults(func=_cmd_rip)

    exp = sub.add_parser("experiment", help="run a Monte Carlo experiment")
    exp.add_argument("name", choices=experiments.EXPERIMENT_NAMES)
    exp.add_argument("--scale", default="desk", choices=("desk", "paper"))
    exp.add_argument("--config", default=None,
                     help="flat key = value override file")
    exp.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="single config override (repeatable)")
    exp.add_argument("--seed", type=int, default=None)
    exp.add_argument("--trials", type=int, default=None)
    exp.add_argument("--resamples", type=int, default=None)
    exp.add_argument("--workers", type=int, default=None)
    exp.add_argument("--out-dir", default="runs")
    exp.set_defaults(func=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return args.func(args)
    except (DegenerateSupportError, theory.DegenerateDistributionError) as exc:
        print(f"numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
