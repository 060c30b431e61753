"""Orthogonal matching pursuit with per-iteration traces and CV selection.

Each iteration greedily adds the column most correlated with the residual
(ties go to the smallest index), refits by least squares, and records the
iterate: support, coefficients, ||residual||^2, the CV residual against the
held-out block, and the recovery error when ground truth is attached.

The CV stopping rule never looks at ground truth: it returns the iterate
whose CV residual is smallest (ties go to the earliest iteration).
"""

from __future__ import annotations

from dataclasses import dataclass
import csv
import io

import numpy as np

from .problems import SensingProblem
from .solver import DegenerateSupportError, GrowingSolve, SupportSolve, extend_support_solve, least_squares_on_support

# residual below this fraction of ||y||^2 counts as exactly fitted
ZERO_RESIDUAL_RTOL = 1e-26

STOP_RULE = "rule"
STOP_ZERO = "zero_residual"
STOP_DEGENERATE = "degenerate"


@dataclass(frozen=True)
class StoppingRule:
    """Halting test for the pursuit loop.

    kinds: max_iterations (run exactly d steps), residual_threshold (stop once
    ||residual||^2 < tau), relative_residual (stop once ||residual|| <
    rho_rel * ||y||).  Iterations never exceed the number of measurements.
    """

    kind: str
    d: int | None = None
    tau: float | None = None
    rho_rel: float | None = None

    @classmethod
    def max_iterations(cls, d: int) -> "StoppingRule":
        return cls(kind="max_iterations", d=int(d))

    @classmethod
    def residual_threshold(cls, tau: float) -> "StoppingRule":
        return cls(kind="residual_threshold", tau=float(tau))

    @classmethod
    def relative_residual(cls, rho_rel: float, d: int | None = None) -> "StoppingRule":
        return cls(kind="relative_residual", rho_rel=float(rho_rel),
                   d=None if d is None else int(d))

    def limit(self, m: int) -> int:
        """Largest iteration count this rule allows on m measurements."""
        if self.kind == "max_iterations":
            if self.d is None or self.d < 1:
                raise ValueError("max_iterations rule needs d >= 1")
            if self.d > m:
                raise ValueError(f"d={self.d} exceeds the measurement count m={m}")
            return self.d
        if self.kind == "residual_threshold":
            if self.tau is None or self.tau < 0:
                raise ValueError("residual_threshold rule needs tau >= 0")
            return m
        if self.kind == "relative_residual":
            if self.rho_rel is None or self.rho_rel < 0:
                raise ValueError("relative_residual rule needs rho_rel >= 0")
            d = m if self.d is None else self.d
            if d < 1 or d > m:
                raise ValueError(f"iteration cap {d} must be in [1, m={m}]")
            return d
        raise ValueError(f"unknown stopping rule kind {self.kind!r}")

    def satisfied(self, p: int, residual_sq: float, y_sq: float, limit: int) -> bool:
        if p >= limit:
            return True
        if self.kind == "residual_threshold":
            return residual_sq < self.tau
        if self.kind == "relative_residual":
            return residual_sq < (self.rho_rel ** 2) * y_sq
        return False


@dataclass(frozen=True)
class IterationRecord:
    """State after iteration p (1-based)."""

    p: int
    support: tuple
    coefficients: np.ndarray
    residual_sq: float
    cv_residual: float | None
    recovery_error: float | None

    def dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        out[list(self.support)] = self.coefficients
        return out


@dataclass(frozen=True)
class OmpTrace:
    """Full pursuit history plus the CV and oracle selections."""

    records: tuple
    n: int
    y_sq: float
    stop_reason: str
    selected_cv: int | None
    selected_oracle: int | None

    @property
    def degenerate(self) -> bool:
        return self.stop_reason == STOP_DEGENERATE

    @property
    def depth(self) -> int:
        return len(self.records)

    def record(self, p: int) -> IterationRecord:
        return self.records[p - 1]

    def residual_curve(self) -> np.ndarray:
        return np.array([r.residual_sq for r in self.records])

    def cv_curve(self) -> np.ndarray:
        return np.array([np.nan if r.cv_residual is None else r.cv_residual
                         for r in self.records])

    def recovery_curve(self) -> np.ndarray:
        return np.array([np.nan if r.recovery_error is None else r.recovery_error
                         for r in self.records])


def _argmin_first(values) -> int:
    """Index of the minimum, earliest on ties."""
    return int(np.argmin(np.asarray(values)))


def omp_step(a: np.ndarray, y: np.ndarray, solve: SupportSolve | None = None):
    """One greedy step: returns (chosen index, extended solve).

    The residual must be nonzero; a numerically exhausted residual means the
    pursuit has terminated naturally.
    """
    if solve is None:
        solve = least_squares_on_support(a, y, ())
    y_sq = float(np.dot(y, y))
    if solve.residual_sq <= ZERO_RESIDUAL_RTOL * y_sq:
        raise ValueError("residual is numerically zero; pursuit has terminated")
    corr = np.abs(a.T @ solve.residual)
    if solve.support:
        corr[list(solve.support)] = -1.0
    j = int(np.argmax(corr))
    return j, extend_support_solve(solve, a, j)


def run_omp(problem: SensingProblem, rule: StoppingRule) -> OmpTrace:
    """Run the pursuit on a problem under a stopping rule.

    Degeneracy and an exactly fitted residual both end the loop early; the
    partial trace is still returned with the reason flagged.
    """
    a, y = problem.a, problem.y
    m = problem.dims.m
    limit = rule.limit(m)
    y_sq = float(y @ y)

    engine = GrowingSolve(a, y, capacity=limit, a_cv=problem.a_cv, y_cv=problem.y_cv,
                          x_true=problem.signal)
    records = []
    stop_reason = STOP_RULE
    support_mask = np.zeros(problem.dims.n, dtype=bool)

    for p in range(1, limit + 1):
        if engine.residual_sq <= ZERO_RESIDUAL_RTOL * y_sq:
            stop_reason = STOP_ZERO
            break
        corr = np.abs(a.T @ engine.residual)
        corr[support_mask] = -1.0
        j = int(np.argmax(corr))
        try:
            engine.add_column(j)
        except DegenerateSupportError:
            stop_reason = STOP_DEGENERATE
            break
        support_mask[j] = True
        records.append(IterationRecord(
            p=p,
            support=tuple(engine.support),
            coefficients=engine.coefficients(),
            residual_sq=engine.residual_sq,
            cv_residual=engine.cv_residual_sq(),
            recovery_error=engine.recovery_error() if problem.signal is not None else None,
        ))
        if rule.satisfied(p, engine.residual_sq, y_sq, limit):
            break

    selected_cv = None
    selected_oracle = None
    if records:
        selected_cv = _argmin_first([r.cv_residual for r in records]) + 1
        if problem.signal is not None:
            selected_oracle = _argmin_first([r.recovery_error for r in records]) + 1
    return OmpTrace(records=tuple(records), n=problem.dims.n, y_sq=y_sq,
                    stop_reason=stop_reason, selected_cv=selected_cv,
                    selected_oracle=selected_oracle)


def run_omp_cv(problem: SensingProblem, d: int):
    """Pursuit for d iterations, then pick the iterate with smallest CV residual.

    Returns (dense estimate, trace).  Selection only sees CV residuals.
    """
    trace = run_omp(problem, StoppingRule.max_iterations(d))
    if not trace.records:
        raise DegenerateSupportError("no iterations completed; nothing to select")
    chosen = trace.record(trace.selected_cv)
    return chosen.dense(problem.dims.n), trace


def estimate_noise_power(a: np.ndarray, y: np.ndarray, x_hat: np.ndarray) -> float:
    """Residual power ||y - A x_hat||^2 / m of a candidate estimate."""
    r = y - a @ x_hat
    return float(r @ r) / a.shape[0]


def cv_residuals(trace: OmpTrace, a_cv: np.ndarray, y_cv: np.ndarray) -> np.ndarray:
    """CV residual curve of a recorded trace against another CV block."""
    out = np.empty(trace.depth)
    for i, rec in enumerate(trace.records):
        diff = y_cv - a_cv[:, list(rec.support)] @ rec.coefficients
        out[i] = diff @ diff
    return out


def trace_to_csv(trace: OmpTrace, path=None) -> str | None:
    """One row per iteration: p, residual_sq, cv_residual, recovery_error."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["p", "residual_sq", "cv_residual", "recovery_error"])
    for rec in trace.records:
        writer.writerow([
            rec.p,
            repr(rec.residual_sq),
            "" if rec.cv_residual is None else repr(rec.cv_residual),
            "" if rec.recovery_error is None else repr(rec.recovery_error),
        ])
    text = buf.getvalue()
    if path is None:
        return text
    with open(path, "w") as fh:
        fh.write(text)
    return None
