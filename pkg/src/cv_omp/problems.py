"""Synthetic sparse recovery problems with a held-out cross-validation block.

The measurement model is y = A x + sigma_n * a_n where the entries of A and of
the noise direction a_n are i.i.d. with mean 0 and variance 1/m, so the
expected noise energy is E||sigma_n * a_n||^2 = sigma_n^2 regardless of m.
The CV block (A_cv, y_cv) uses the same entry variance 1/m (not 1/m_cv), which
makes the expected squared norm of a CV column m_cv/m.

Randomness is split into fixed named streams derived from one seed, so the
signal depends only on (seed, n, k) and the reconstruction matrix only on
(seed, m, n).  Harnesses rely on this to reuse draws across CV-block sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
import json

import numpy as np

ENSEMBLE_KINDS = ("gaussian", "rademacher")

_STREAM_SIGNAL = 0
_STREAM_MATRIX = 1
_STREAM_NOISE = 2
_STREAM_CV_MATRIX = 3
_STREAM_CV_NOISE = 4

_BUNDLE_FORMAT = "cv-omp-problem"
_BUNDLE_VERSION = 1


def _stream(seed, stream_id: int) -> np.random.Generator:
    """Independent generator for one named stream of a seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream_id,)))


@dataclass(frozen=True)
class MatrixEnsemble:
    """Entry distribution for sensing matrices, scaled to variance 1/m."""

    kind: str

    def __post_init__(self):
        if self.kind not in ENSEMBLE_KINDS:
            raise ValueError(f"unknown ensemble {self.kind!r}, expected one of {ENSEMBLE_KINDS}")

    def draw(self, rng: np.random.Generator, rows: int, cols: int, m: int) -> np.ndarray:
        """Draw a (rows, cols) matrix with i.i.d. entries of variance 1/m."""
        scale = 1.0 / np.sqrt(m)
        if self.kind == "gaussian":
            return rng.standard_normal((rows, cols)) * scale
        # rademacher: +/- 1/sqrt(m) with equal probability
        return (2.0 * rng.integers(0, 2, size=(rows, cols)) - 1.0) * scale

    def entry_sq_variance(self, m: int) -> float:
        """Variance of a squared entry; 2/m^2 for gaussian, exactly 0 for rademacher."""
        if self.kind == "gaussian":
            return 2.0 / float(m) ** 2
        return 0.0


GAUSSIAN = MatrixEnsemble("gaussian")
RADEMACHER = MatrixEnsemble("rademacher")


def get_ensemble(kind) -> MatrixEnsemble:
    if isinstance(kind, MatrixEnsemble):
        return kind
    return MatrixEnsemble(str(kind))


@dataclass(frozen=True)
class ProblemDims:
    """Dimensions (n, m, m_cv, k): ambient, reconstruction rows, CV rows, sparsity."""

    n: int
    m: int
    m_cv: int
    k: int

    def __post_init__(self):
        if not (self.n > 0 and self.m > 0 and self.m_cv > 0):
            raise ValueError(f"dimensions must be positive, got {self}")
        if not (0 < self.k <= self.n):
            raise ValueError(f"need 0 < k <= n, got k={self.k}, n={self.n}")

    @classmethod
    def of(cls, dims) -> "ProblemDims":
        if isinstance(dims, cls):
            return dims
        return cls(*dims)


@dataclass(frozen=True)
class SparseSignal:
    """Dense vector that is exactly zero off its support."""

    values: np.ndarray
    support: tuple

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "support", tuple(int(j) for j in self.support))
        if len(set(self.support)) != len(self.support):
            raise ValueError("support indices must be distinct")
        if any(j < 0 or j >= vals.size for j in self.support):
            raise ValueError("support index out of range")
        off = np.ones(vals.size, dtype=bool)
        off[list(self.support)] = False
        if vals.size and np.any(vals[off] != 0.0):
            raise ValueError("values must be exactly zero off the support")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def k(self) -> int:
        return len(self.support)

    def energy(self) -> float:
        return float(self.values @ self.values)


def draw_signal(rng: np.random.Generator, n: int, k: int) -> SparseSignal:
    """k-sparse signal: uniform support, standard normal amplitudes."""
    support = np.sort(rng.choice(n, size=k, replace=False))
    values = np.zeros(n)
    values[support] = rng.standard_normal(k)
    return SparseSignal(values=values, support=tuple(int(j) for j in support))


@dataclass(frozen=True)
class SensingProblem:
    """One sensing instance plus its held-out CV block.

    Arrays are treated as immutable once constructed.  `signal` may be None
    for problems loaded from external bundles without ground truth.
    """

    dims: ProblemDims
    a: np.ndarray
    a_cv: np.ndarray
    y: np.ndarray
    y_cv: np.ndarray
    signal: SparseSignal | None
    sigma_n: float
    ensemble: MatrixEnsemble
    seed: object = None

    def __post_init__(self):
        object.__setattr__(self, "ensemble", get_ensemble(self.ensemble))
        d = self.dims
        if self.a.shape != (d.m, d.n):
            raise ValueError(f"A must be {(d.m, d.n)}, got {self.a.shape}")
        if self.a_cv.shape != (d.m_cv, d.n):
            raise ValueError(f"A_cv must be {(d.m_cv, d.n)}, got {self.a_cv.shape}")
        if self.y.shape != (d.m,):
            raise ValueError(f"y must be {(d.m,)}, got {self.y.shape}")
        if self.y_cv.shape != (d.m_cv,):
            raise ValueError(f"y_cv must be {(d.m_cv,)}, got {self.y_cv.shape}")
        if self.sigma_n < 0:
            raise ValueError("sigma_n must be nonnegative")


def generate_problem(dims, sigma_n: float, ensemble="gaussian", seed=0,
                     normalize_columns: bool = False) -> SensingProblem:
    """Generate a problem from one seed.

    normalize_columns rescales each column of A to exactly unit norm and each
    column of A_cv to exactly sqrt(m_cv/m); off by default, where columns only
    have these norms in expectation.
    """
    d = ProblemDims.of(dims)
    ens = get_ensemble(ensemble)
    if sigma_n < 0:
        raise ValueError("sigma_n must be nonnegative")

    signal = draw_signal(_stream(seed, _STREAM_SIGNAL), d.n, d.k)
    a = ens.draw(_stream(seed, _STREAM_MATRIX), d.m, d.n, d.m)
    noise = sigma_n * _stream(seed, _STREAM_NOISE).standard_normal(d.m) / np.sqrt(d.m)
    a_cv = ens.draw(_stream(seed, _STREAM_CV_MATRIX), d.m_cv, d.n, d.m)
    cv_noise = sigma_n * _stream(seed, _STREAM_CV_NOISE).standard_normal(d.m_cv) / np.sqrt(d.m)

    if normalize_columns:
        a = _rescale_columns(a, 1.0)
        a_cv = _rescale_columns(a_cv, np.sqrt(d.m_cv / d.m))

    y = a @ signal.values + noise
    y_cv = a_cv @ signal.values + cv_noise
    return SensingProblem(dims=d, a=a, a_cv=a_cv, y=y, y_cv=y_cv, signal=signal,
                          sigma_n=float(sigma_n), ensemble=ens, seed=seed)


def _rescale_columns(a: np.ndarray, target: float) -> np.ndarray:
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0.0):
        raise ValueError("cannot normalize a zero column")
    return a * (target / norms)


def sample_cv_block(problem: SensingProblem, seed, m_cv: int | None = None):
    """Fresh (a_cv, y_cv) draw for an existing problem.

    The reconstruction side is untouched; only the CV matrix and CV noise are
    redrawn from the given seed.  m_cv overrides the block height (entry
    variance stays 1/m).  Requires the true signal.
    """
    if problem.signal is None:
        raise ValueError("sample_cv_block needs the true signal")
    d = problem.dims
    rows = d.m_cv if m_cv is None else int(m_cv)
    if rows <= 0:
        raise ValueError("m_cv must be positive")
    a_cv = problem.ensemble.draw(_stream(seed, _STREAM_CV_MATRIX), rows, d.n, d.m)
    cv_noise = (problem.sigma_n
                * _stream(seed, _STREAM_CV_NOISE).standard_normal(rows) / np.sqrt(d.m))
    y_cv = a_cv @ problem.signal.values + cv_noise
    return a_cv, y_cv


def problem_to_dict(problem: SensingProblem) -> dict:
    """JSON-ready bundle; matrices row-major nested lists."""
    d = problem.dims
    sig = None
    if problem.signal is not None:
        sig = {
            "support": list(problem.signal.support),
            "values_on_support": [float(problem.signal.values[j]) for j in problem.signal.support],
        }
    return {
        "format": _BUNDLE_FORMAT,
        "version": _BUNDLE_VERSION,
        "n": d.n, "m": d.m, "m_cv": d.m_cv, "k": d.k,
        "sigma_n": problem.sigma_n,
        "ensemble": problem.ensemble.kind,
        "seed": problem.seed,
        "a": problem.a.tolist(),
        "a_cv": problem.a_cv.tolist(),
        "y": problem.y.tolist(),
        "y_cv": problem.y_cv.tolist(),
        "signal": sig,
    }


def problem_from_dict(data: dict) -> SensingProblem:
    if data.get("format") != _BUNDLE_FORMAT:
        raise ValueError(f"not a problem bundle (format={data.get('format')!r})")
    if data.get("version") != _BUNDLE_VERSION:
        raise ValueError(f"unsupported bundle version {data.get('version')!r}")
    dims = ProblemDims(n=int(data["n"]), m=int(data["m"]), m_cv=int(data["m_cv"]), k=int(data["k"]))
    signal = None
    if data.get("signal") is not None:
        support = [int(j) for j in data["signal"]["support"]]
        values = np.zeros(dims.n)
        values[support] = data["signal"]["values_on_support"]
        signal = SparseSignal(values=values, support=tuple(support))
    return SensingProblem(
        dims=dims,
        a=np.asarray(data["a"], dtype=float),
        a_cv=np.asarray(data["a_cv"], dtype=float),
        y=np.asarray(data["y"], dtype=float),
        y_cv=np.asarray(data["y_cv"], dtype=float),
        signal=signal,
        sigma_n=float(data["sigma_n"]),
        ensemble=get_ensemble(data["ensemble"]),
        seed=data.get("seed"),
    )


def save_problem(problem: SensingProblem, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(problem), fh)


def load_problem(path) -> SensingProblem:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))
