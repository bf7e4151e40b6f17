"""Hot numeric loops.

Every kernel exists twice: a numba ``@njit`` version written as explicit
loops, and a vectorized numpy version with the same signature and semantics.
The module-level names point at the numba versions unless numba is missing
or ``DPOPT_DISABLE_NUMBA`` is set to a truthy value before import.

Kernels
-------
column_min(loss, joint)
    For each column y, min over rows w of sum_x loss[w, x] * joint[x, y];
    ties go to the lowest w.
dp_tightness(rows, points)
    max over input pairs of max_y |ln(rows[i,y] / rows[j,y])| / |p_i - p_j|.
envelope_integrals(A, B, eps, h)
    Per cell c, the integral over s in [0, h[c]] of
    min_w A[c,w] exp(-eps s) + B[c,w] exp(-eps (h[c] - s)).
clip_adjacent(logc, bound)
    In place: walk down the rows and clip each entry to within ``bound``
    of the entry above it.
simplex_run(tab, basis, n_enter, max_iter, tol, pivot_tol)
    Primal simplex on a dense tableau, in place. The entering column is the
    lowest-index one with reduced cost below -tol (Bland). The leaving row
    comes from a two-pass ratio test: among rows whose ratio is within a
    small slack of the minimum, take the largest pivot entry (ties to the
    lowest basic index). Entries at or below pivot_tol never pivot.
"""
from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("DPOPT_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _FLAG in {"1", "true", "yes", "on"}

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USING_NUMBA = HAVE_NUMBA and not DISABLED_BY_ENV

SIMPLEX_OPTIMAL = 0
SIMPLEX_UNBOUNDED = 1
SIMPLEX_ITERATION_LIMIT = 2

# relative slack when two pivot candidates count as tied
_RATIO_TIE = 1e-12
# primal slack of the two-pass (Harris) ratio test
_HARRIS_SLACK = 1e-10


# --------------------------------------------------------------------------
# numpy versions
# --------------------------------------------------------------------------

def np_column_min(loss, joint):
    scores = loss @ joint
    arg = np.argmin(scores, axis=0)
    return scores[arg, np.arange(scores.shape[1])], arg.astype(np.int64)


def np_dp_tightness(rows, points):
    n = rows.shape[0]
    zero = rows == 0.0
    with np.errstate(divide="ignore"):
        logs = np.log(rows)
    worst = 0.0
    for i in range(n - 1):
        zi = zero[i]
        zj = zero[i + 1:]
        if np.any(zi ^ zj):
            return np.inf
        with np.errstate(invalid="ignore"):
            diff = np.abs(logs[i + 1:] - logs[i])
        diff[zi & zj] = 0.0
        dist = np.abs(points[i + 1:] - points[i])
        top = diff.max(axis=1) if diff.shape[1] else np.zeros(len(dist))
        if np.any((dist == 0.0) & (top > 0.0)):
            return np.inf
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(dist > 0.0, top / np.where(dist > 0.0, dist, 1.0), 0.0)
        if ratio.size:
            worst = max(worst, float(ratio.max()))
    return worst


def _np_cell_envelope(a, b, eps, h):
    da = a[:, None] - a[None, :]
    db = b[:, None] - b[None, :]
    iu = np.triu_indices(len(a), 1)
    da = da[iu]
    db = db[iu]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = -da * np.exp(eps * h) / db
    ok = (db != 0.0) & (r > 0.0)
    s = np.log(r[ok]) / (2.0 * eps)
    s = s[(s > 0.0) & (s < h)]
    pts = np.unique(np.concatenate(([0.0], s, [h])))
    lo = pts[:-1]
    hi = pts[1:]
    mid = 0.5 * (lo + hi)
    vals = a[:, None] * np.exp(-eps * mid) + b[:, None] * np.exp(-eps * (h - mid))
    w = np.argmin(vals, axis=0)
    width = hi - lo
    left = a[w] * np.exp(-eps * lo) * (-np.expm1(-eps * width)) / eps
    right = b[w] * np.exp(-eps * (h - hi)) * (-np.expm1(-eps * width)) / eps
    return float(np.sum(left + right))


def np_envelope_integrals(A, B, eps, h):
    out = np.empty(A.shape[0])
    for c in range(A.shape[0]):
        out[c] = _np_cell_envelope(A[c], B[c], eps, h[c]) if h[c] > 0.0 else 0.0
    return out


def np_clip_adjacent(logc, bound):
    for k in range(1, logc.shape[0]):
        np.clip(logc[k], logc[k - 1] - bound, logc[k - 1] + bound, out=logc[k])
    return logc


def np_simplex_run(tab, basis, n_enter, max_iter, tol, pivot_tol):
    m = tab.shape[0] - 1
    rhs = tab.shape[1] - 1
    it = 0
    while it < max_iter:
        cand = np.flatnonzero(tab[m, :n_enter] < -tol)
        if cand.size == 0:
            return SIMPLEX_OPTIMAL, it
        j = cand[0]
        col = tab[:m, j]
        rows = np.flatnonzero(col > pivot_tol)
        if rows.size == 0:
            return SIMPLEX_UNBOUNDED, it
        # Harris: widest step allowed with slack, then the largest pivot within it
        a = col[rows]
        bound = np.min((tab[rows, rhs] + _HARRIS_SLACK) / a)
        ok = rows[tab[rows, rhs] / a <= bound]
        best = col[ok].max()
        tied = ok[col[ok] >= best * (1.0 - _RATIO_TIE)]
        r = tied[np.argmin(basis[tied])]
        tab[r] /= tab[r, j]
        factor = tab[:, j].copy()
        factor[r] = 0.0
        tab -= np.outer(factor, tab[r])
        np.maximum(tab[:m, rhs], 0.0, out=tab[:m, rhs])
        basis[r] = j
        it += 1
    return SIMPLEX_ITERATION_LIMIT, it


# --------------------------------------------------------------------------
# numba versions (plain loops; compiled lazily on first call)
# --------------------------------------------------------------------------

def _loop_column_min(loss, joint):
    nw, nx = loss.shape
    ny = joint.shape[1]
    best = np.empty(ny)
    arg = np.empty(ny, np.int64)
    for y in range(ny):
        b = np.inf
        a = 0
        for w in range(nw):
            s = 0.0
            for x in range(nx):
                s += loss[w, x] * joint[x, y]
            if s < b:
                b = s
                a = w
        best[y] = b
        arg[y] = a
    return best, arg


def _loop_dp_tightness(rows, points):
    n, m = rows.shape
    worst = 0.0
    for i in range(n - 1):
        for j in range(i + 1, n):
            top = 0.0
            for y in range(m):
                a = rows[i, y]
                b = rows[j, y]
                if a == 0.0 and b == 0.0:
                    continue
                if a == 0.0 or b == 0.0:
                    return np.inf
                d = abs(np.log(a) - np.log(b))
                if d > top:
                    top = d
            dist = abs(points[i] - points[j])
            if dist == 0.0:
                if top > 0.0:
                    return np.inf
                continue
            if top / dist > worst:
                worst = top / dist
    return worst


def _loop_envelope_integrals(A, B, eps, h):
    ncell, nw = A.shape
    out = np.zeros(ncell)
    npair = nw * (nw - 1) // 2
    pts = np.empty(npair + 2)
    for c in range(ncell):
        hc = h[c]
        if hc <= 0.0:
            continue
        grow = np.exp(eps * hc)
        k = 0
        pts[k] = 0.0
        k += 1
        for u in range(nw):
            for v in range(u + 1, nw):
                db = B[c, u] - B[c, v]
                if db == 0.0:
                    continue
                r = -(A[c, u] - A[c, v]) * grow / db
                if r <= 0.0:
                    continue
                s = np.log(r) / (2.0 * eps)
                if s > 0.0 and s < hc:
                    pts[k] = s
                    k += 1
        pts[k] = hc
        k += 1
        p = np.sort(pts[:k])
        total = 0.0
        for q in range(k - 1):
            lo = p[q]
            hi = p[q + 1]
            if hi <= lo:
                continue
            mid = 0.5 * (lo + hi)
            best = np.inf
            wb = 0
            for w in range(nw):
                v = A[c, w] * np.exp(-eps * mid) + B[c, w] * np.exp(-eps * (hc - mid))
                if v < best:
                    best = v
                    wb = w
            shrink = -np.expm1(-eps * (hi - lo)) / eps
            total += A[c, wb] * np.exp(-eps * lo) * shrink
            total += B[c, wb] * np.exp(-eps * (hc - hi)) * shrink
        out[c] = total
    return out


def _loop_clip_adjacent(logc, bound):
    n, m = logc.shape
    for k in range(1, n):
        for y in range(m):
            lo = logc[k - 1, y] - bound
            hi = logc[k - 1, y] + bound
            if logc[k, y] < lo:
                logc[k, y] = lo
            elif logc[k, y] > hi:
                logc[k, y] = hi
    return logc


def _loop_simplex_run(tab, basis, n_enter, max_iter, tol, pivot_tol):
    m = tab.shape[0] - 1
    ncol = tab.shape[1]
    rhs = ncol - 1
    it = 0
    while it < max_iter:
        j = -1
        for c in range(n_enter):
            if tab[m, c] < -tol:
                j = c
                break
        if j < 0:
            return SIMPLEX_OPTIMAL, it
        bound = np.inf
        for i in range(m):
            a = tab[i, j]
            if a > pivot_tol:
                q = (tab[i, rhs] + _HARRIS_SLACK) / a
                if q < bound:
                    bound = q
        if bound == np.inf:
            return SIMPLEX_UNBOUNDED, it
        best = 0.0
        for i in range(m):
            a = tab[i, j]
            if a > pivot_tol and tab[i, rhs] / a <= bound and a > best:
                best = a
        r = -1
        for i in range(m):
            a = tab[i, j]
            if a > pivot_tol and tab[i, rhs] / a <= bound and a >= best * (1.0 - _RATIO_TIE):
                if r < 0 or basis[i] < basis[r]:
                    r = i
        piv = tab[r, j]
        for c in range(ncol):
            tab[r, c] /= piv
        for i in range(m + 1):
            if i == r:
                continue
            f = tab[i, j]
            if f != 0.0:
                for c in range(ncol):
                    tab[i, c] -= f * tab[r, c]
        for i in range(m):
            if tab[i, rhs] < 0.0:
                tab[i, rhs] = 0.0
        basis[r] = j
        it += 1
    return SIMPLEX_ITERATION_LIMIT, it


NUMPY_KERNELS = {
    "column_min": np_column_min,
    "dp_tightness": np_dp_tightness,
    "envelope_integrals": np_envelope_integrals,
    "clip_adjacent": np_clip_adjacent,
    "simplex_run": np_simplex_run,
}

if HAVE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)
    NUMBA_KERNELS = {
        "column_min": _jit(_loop_column_min),
        "dp_tightness": _jit(_loop_dp_tightness),
        "envelope_integrals": _jit(_loop_envelope_integrals),
        "clip_adjacent": _jit(_loop_clip_adjacent),
        "simplex_run": _jit(_loop_simplex_run),
    }
else:  # pragma: no cover
    NUMBA_KERNELS = None

_ACTIVE = NUMBA_KERNELS if USING_NUMBA else NUMPY_KERNELS

column_min = _ACTIVE["column_min"]
dp_tightness = _ACTIVE["dp_tightness"]
envelope_integrals = _ACTIVE["envelope_integrals"]
clip_adjacent = _ACTIVE["clip_adjacent"]
simplex_run = _ACTIVE["simplex_run"]


def backend() -> str:
    return "numba" if USING_NUMBA else "numpy"
