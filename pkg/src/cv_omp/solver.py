"""Incremental least squares over a growing column support.

A thin QR factorization of A[:, support] is grown one column at a time with
modified Gram-Schmidt plus one reorthogonalization pass.  Extending a solve
never touches y directly: for the new orthonormal direction q, q'y equals
q'residual because q is orthogonal to the span already fitted.  A new pivot
below 1e-10 times the largest pivot seen (or the candidate's own norm)
declares the extension degenerate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_RTOL = 1e-10


class DegenerateSupportError(Exception):
    """Candidate column is numerically dependent on the current support."""


@dataclass(frozen=True)
class QrState:
    """Frozen thin QR of the support columns plus Q'y."""

    q: np.ndarray        # (m, t), orthonormal columns
    r: np.ndarray        # (t, t), upper triangular
    qty: np.ndarray      # (t,)
    max_pivot: float

    @property
    def t(self) -> int:
        return self.q.shape[1]


@dataclass(frozen=True)
class SupportSolve:
    """Least squares solution of min ||y - A[:, support] c||."""

    support: tuple
    coefficients: np.ndarray
    residual: np.ndarray
    state: QrState

    @property
    def residual_sq(self) -> float:
        return float(self.residual @ self.residual)

    def dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        out[list(self.support)] = self.coefficients
        return out


def _orthogonalize(q: np.ndarray, t: int, col: np.ndarray):
    """Remove the span of q[:, :t] from col; returns (direction, coeffs, pivot)."""
    v = col.astype(float, copy=True)
    h = np.zeros(t)
    for _ in range(2):  # second pass mops up cancellation
        if t:
            c = q[:, :t].T @ v
            v -= q[:, :t] @ c
            h += c
    return v, h, float(np.linalg.norm(v))


def _solve_upper(r: np.ndarray, b: np.ndarray) -> np.ndarray:
    if r.shape[0] == 0:
        return np.zeros(0)
    return np.linalg.solve(r, b)


def _normalize_support(support) -> list:
    if isinstance(support, (set, frozenset)):
        idx = sorted(int(j) for j in support)
    else:
        idx = [int(j) for j in support]
    if len(set(idx)) != len(idx):
        raise ValueError("support indices must be distinct")
    return idx


def _check_index(j: int, n: int):
    if not (0 <= j < n):
        raise ValueError(f"column index {j} out of range for n={n}")


def least_squares_on_support(a: np.ndarray, y: np.ndarray, support) -> SupportSolve:
    """Direct solve on a support, built by incremental extension from empty.

    Sets iterate in sorted order; sequences keep their given order, which is
    how pursuit supports record selection order.
    """
    idx = _normalize_support(support)
    m = a.shape[0]
    t = len(idx)
    q = np.empty((m, t))
    r = np.zeros((t, t))
    qty = np.empty(t)
    residual = np.asarray(y, dtype=float).copy()
    max_pivot = 0.0
    for pos, j in enumerate(idx):
        _check_index(j, a.shape[1])
        col = a[:, j]
        v, h, pivot = _orthogonalize(q, pos, col)
        max_pivot_ref = max(max_pivot, float(np.linalg.norm(col)))
        if max_pivot_ref == 0.0 or pivot <= PIVOT_RTOL * max_pivot_ref:
            raise DegenerateSupportError(
                f"column {j} is dependent on {tuple(idx[:pos])} (pivot {pivot:.3e})")
        v /= pivot
        q[:, pos] = v
        r[:pos, pos] = h
        r[pos, pos] = pivot
        qt_r = float(v @ residual)
        qty[pos] = qt_r
        residual -= qt_r * v
        max_pivot = max(max_pivot, pivot)
    coefficients = _solve_upper(r, qty)
    state = QrState(q=q, r=r, qty=qty, max_pivot=max_pivot)
    return SupportSolve(support=tuple(idx), coefficients=coefficients,
                        residual=residual, state=state)


def extend_support_solve(solve: SupportSolve, a: np.ndarray, new_index: int) -> SupportSolve:
    """One-column extension of an existing solve; O(m t) instead of a fresh solve."""
    j = int(new_index)
    _check_index(j, a.shape[1])
    if j in solve.support:
        raise ValueError(f"column {j} already in support")
    st = solve.state
    t = st.t
    col = a[:, j]
    v, h, pivot = _orthogonalize(st.q, t, col)
    ref = max(st.max_pivot, float(np.linalg.norm(col)))
    if ref == 0.0 or pivot <= PIVOT_RTOL * ref:
        raise DegenerateSupportError(
            f"column {j} is dependent on {solve.support} (pivot {pivot:.3e})")
    v = v / pivot

    q = np.column_stack([st.q, v]) if t else v.reshape(-1, 1)
    r = np.zeros((t + 1, t + 1))
    r[:t, :t] = st.r
    r[:t, t] = h
    r[t, t] = pivot
    qt_r = float(v @ solve.residual)
    qty = np.append(st.qty, qt_r)
    residual = solve.residual - qt_r * v
    state = QrState(q=q, r=r, qty=qty, max_pivot=max(st.max_pivot, pivot))
    coefficients = _solve_upper(r, qty)
    return SupportSolve(support=solve.support + (j,), coefficients=coefficients,
                        residual=residual, state=state)


def project_orthogonal(a: np.ndarray, support, v: np.ndarray) -> np.ndarray:
    """Component of v orthogonal to span(A[:, support]).

    Numerically dependent columns add nothing to the span and are skipped.
    """
    idx = _normalize_support(support)
    m = a.shape[0]
    q = np.empty((m, len(idx)))
    t = 0
    max_pivot = 0.0
    for j in idx:
        _check_index(j, a.shape[1])
        col = a[:, j]
        w, _, pivot = _orthogonalize(q, t, col)
        ref = max(max_pivot, float(np.linalg.norm(col)))
        if ref == 0.0 or pivot <= PIVOT_RTOL * ref:
            continue
        q[:, t] = w / pivot
        t += 1
        max_pivot = max(max_pivot, pivot)
    out = np.asarray(v, dtype=float).copy()
    for _ in range(2):
        if t:
            out -= q[:, :t] @ (q[:, :t].T @ out)
    return out


class GrowingSolve:
    """Mutable engine behind the pursuit loop: preallocated QR plus running
    coefficients, CV prediction and recovery error.

    Coefficients are maintained through the inverse triangular factor: when a
    column with pivot d and projection coefficients h joins, the inverse gains
    the column w = [-W h / d; 1/d], and the solution updates by qty_new * w.
    The CV prediction tracks A_cv[:, support] c the same way, so every iterate
    costs O(m + m_cv + t^2) instead of a fresh solve.
    """

    def __init__(self, a, y, capacity, a_cv=None, y_cv=None, x_true=None):
        self.a = a
        self.y = np.asarray(y, dtype=float)
        m = a.shape[0]
        cap = int(capacity)
        self.q = np.empty((m, cap))
        self.r = np.zeros((cap, cap))
        self.w = np.zeros((cap, cap))      # inverse of r, same growing layout
        self.qty = np.empty(cap)
        self.coef = np.zeros(cap)
        self.support: list = []
        self.residual = self.y.copy()
        self.residual_sq = float(self.residual @ self.residual)
        self.max_pivot = 0.0

        self.a_cv = a_cv
        self.y_cv = None if y_cv is None else np.asarray(y_cv, dtype=float)
        if a_cv is not None:
            self.b_cv = np.empty((a_cv.shape[0], cap))   # A_cv[:, support] @ W
            self.cv_pred = np.zeros(a_cv.shape[0])

        self.x_true = x_true
        if x_true is not None:
            self.x_vals = x_true.values
            self.missing = {int(j): float(x_true.values[j]) ** 2 for j in x_true.support}

    @property
    def t(self) -> int:
        return len(self.support)

    def add_column(self, j: int) -> None:
        t = self.t
        col = self.a[:, j]
        v, h, pivot = _orthogonalize(self.q, t, col)
        ref = max(self.max_pivot, float(np.linalg.norm(col)))
        if ref == 0.0 or pivot <= PIVOT_RTOL * ref:
            raise DegenerateSupportError(
                f"column {j} is dependent on the current support (pivot {pivot:.3e})")
        v /= pivot
        qt_r = float(v @ self.residual)

        self.q[:, t] = v
        self.r[:t, t] = h
        self.r[t, t] = pivot
        self.qty[t] = qt_r
        if t:
            w_top = -(self.w[:t, :t] @ h) / pivot
            self.w[:t, t] = w_top
            self.coef[:t] += qt_r * w_top
        self.w[t, t] = 1.0 / pivot
        self.coef[t] = qt_r / pivot

        self.residual -= qt_r * v
        self.residual_sq = float(self.residual @ self.residual)
        self.max_pivot = max(self.max_pivot, pivot)

        if self.a_cv is not None:
            cv_col = self.a_cv[:, j]
            if t:
                b_new = (cv_col - self.b_cv[:, :t] @ h) / pivot
            else:
                b_new = cv_col / pivot
            self.b_cv[:, t] = b_new
            self.cv_pred += qt_r * b_new

        if self.x_true is not None:
            self.missing.pop(j, None)

        self.support.append(j)

    def coefficients(self) -> np.ndarray:
        return self.coef[:self.t].copy()

    def cv_residual_sq(self) -> float:
        diff = self.y_cv - self.cv_pred
        return float(diff @ diff)

    def recovery_error(self) -> float:
        """||x_true - x_hat||^2 without cancellation: exact zeros stay exact."""
        c = self.coef[:self.t]
        xs = self.x_vals[self.support]
        diff = xs - c
        return float(sum(self.missing.values()) + diff @ diff)

    def snapshot(self) -> SupportSolve:
        t = self.t
        state = QrState(q=self.q[:, :t].copy(), r=self.r[:t, :t].copy(),
                        qty=self.qty[:t].copy(), max_pivot=self.max_pivot)
        return SupportSolve(support=tuple(self.support), coefficients=self.coefficients(),
                            residual=self.residual.copy(), state=state)
