"""Dense two-phase simplex for  min c.x  s.t.  A x = b, x >= 0.

Columns enter by Bland's rule (smallest index). The leaving row uses a
two-pass ratio test that prefers large pivots, with ties to the smallest
basic index, and the tableau is rebuilt from the data every few hundred
pivots. Intended for the small transport and post-processing
problems in this package (a few hundred rows and columns).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import qr

from . import _kernels
from .errors import SolverFailure

FEAS_TOL = 1e-7
# reduced costs below -_COST_TOL enter; ratio-test entries must exceed _PIVOT_TOL
# (rows are scaled to unit max-norm first)
_COST_TOL = 1e-11
_PIVOT_TOL = 1e-9
# relative cutoff on the pivoted-QR diagonal when discarding dependent rows
_RANK_TOL = 1e-10

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LPResult:
    status: str
    x: Optional[np.ndarray]
    fun: float
    duals: Optional[np.ndarray]
    iterations: int
    certified: bool

    @property
    def success(self) -> bool:
        return self.status == OPTIMAL


# pivots between rebuilds of the tableau from the original data
_REFACTOR_EVERY = 200


def _refactor(tab, basis, M, rhs, cost):
    """Recompute the tableau B^-1 [M | rhs] and its reduced-cost row from scratch."""
    m = len(basis)
    B = M[:, basis]
    body = np.linalg.solve(B, np.column_stack((M, rhs)))
    # basic values are nonnegative in exact arithmetic
    body[:, -1] = np.maximum(body[:, -1], 0.0)
    tab[:m] = body
    cb = cost[basis]
    tab[m, :-1] = cost - cb @ body[:, :-1]
    tab[m, -1] = -cb @ body[:, -1]


def _run(tab, basis, n_enter, max_iter, M, rhs, cost):
    _refactor(tab, basis, M, rhs, cost)
    done = 0
    while done < max_iter:
        chunk = min(_REFACTOR_EVERY, max_iter - done)
        status, iters = _kernels.simplex_run(tab, basis, n_enter, chunk, _COST_TOL, _PIVOT_TOL)
        done += iters
        if iters == 0:
            return status, done
        # continue on the rebuilt tableau until it confirms the outcome
        _refactor(tab, basis, M, rhs, cost)
    raise SolverFailure(f"simplex hit the iteration limit ({max_iter})")


def _residual(A, b, sign, x) -> float:
    """Max violation of the original (unscaled) equalities."""
    return float(np.abs((A @ x - b) / sign).max(initial=0.0))


def _independent_rows(A) -> np.ndarray:
    """Indices of a maximal set of linearly independent rows (pivoted QR)."""
    if A.shape[0] == 0:
        return np.arange(0)
    _, R, piv = qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > _RANK_TOL * diag[0])) if diag.size and diag[0] > 0 else 0
    return np.sort(piv[:rank])


def solve_lp(c, A_eq, b_eq, max_iter: int | None = None, feas_tol: float = FEAS_TOL) -> LPResult:
    c = np.asarray(c, dtype=float)
    A = np.array(A_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("shape mismatch between c, A_eq and b_eq")
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000

    # flip rows to make b >= 0 and scale each row to unit max-norm
    norms = np.abs(A).max(axis=1)
    norms[norms == 0.0] = 1.0
    sign = np.where(b < 0.0, -1.0, 1.0) / norms
    A *= sign[:, None]
    b *= sign
    A_all, b_all, sign_all, m_all = A, b, sign, m
    independent = _independent_rows(A)
    A, b, sign = A[independent], b[independent], sign[independent]
    m = len(independent)

    # phase 1: artificials on every row
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = A
    tab[:m, n:n + m] = np.eye(m)
    tab[:m, -1] = b
    tab[m, :n] = -A.sum(axis=0)
    tab[m, -1] = -b.sum()
    basis = np.arange(n, n + m, dtype=np.int64)
    M1 = tab[:m, :-1].copy()
    cost1 = np.concatenate((np.zeros(n), np.ones(m)))
    _, it1 = _run(tab, basis, n + m, max_iter, M1, b, cost1)
    infeas = -tab[m, -1]
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    if infeas > feas_tol * scale:
        return LPResult(INFEASIBLE, None, float("nan"), None, it1, False)
    bscale = max(1.0, float(np.abs(np.asarray(b_eq, dtype=float)).max(initial=0.0)))
    x1 = np.zeros(n + m)
    x1[basis] = tab[:m, -1]
    if _residual(A_all, b_all, sign_all, x1[:n]) > feas_tol * bscale:
        # a discarded row is inconsistent with the kept ones
        return LPResult(INFEASIBLE, None, float("nan"), None, it1, False)

    # drive zero-level artificials out of the basis, largest pivots first
    while True:
        art = np.flatnonzero(basis >= n)
        if art.size == 0:
            break
        sub = np.abs(tab[np.ix_(art, np.arange(n))])
        k, j = np.unravel_index(np.argmax(sub), sub.shape)
        if sub[k, j] <= _PIVOT_TOL:
            raise SolverFailure("could not remove an artificial variable from the basis")
        r = art[k]
        tab[r] /= tab[r, j]
        factor = tab[:, j].copy()
        factor[r] = 0.0
        tab -= np.outer(factor, tab[r])
        basis[r] = j

    # phase 2 on the original columns
    tab2 = np.zeros((m + 1, n + 1))
    tab2[:-1, :n] = tab[:m, :n]
    tab2[:-1, -1] = tab[:m, -1]
    basis2 = basis.copy()
    cb = c[basis2]
    tab2[-1, :n] = c - cb @ tab2[:-1, :n]
    tab2[-1, -1] = -cb @ tab2[:-1, -1]
    status, it2 = _run(tab2, basis2, n, max_iter, A, b, c)
    if status == _kernels.SIMPLEX_UNBOUNDED:
        return LPResult(UNBOUNDED, None, float("-inf"), None, it1 + it2, False)

    x = np.zeros(n)
    x[basis2] = np.maximum(tab2[:-1, -1], 0.0)
    fun = float(c @ x)

    duals = np.zeros(m_all)
    B = A[:, basis2]
    try:
        y = np.linalg.solve(B.T, c[basis2])
    except np.linalg.LinAlgError:
        y = np.linalg.lstsq(B.T, c[basis2], rcond=None)[0]
    duals[independent] = y
    reduced = c - A_all.T @ duals
    cscale = max(1.0, float(np.abs(c).max(initial=0.0)))
    primal_ok = _residual(A_all, b_all, sign_all, x) <= feas_tol * bscale
    dual_ok = float(reduced.min(initial=0.0)) >= -feas_tol * cscale
    gap_ok = abs(fun - float(b_all @ duals)) <= feas_tol * max(cscale, scale)
    return LPResult(OPTIMAL, x, fun, duals * sign_all, it1 + it2, bool(primal_ok and dual_ok and gap_ok))


def find_feasible(A_eq, b_eq, feas_tol: float = FEAS_TOL) -> Optional[np.ndarray]:
    """A nonnegative solution of A x = b, or None."""
    A = np.asarray(A_eq, dtype=float)
    res = solve_lp(np.zeros(A.shape[1]), A, b_eq, feas_tol=feas_tol)
    return res.x if res.success else None
