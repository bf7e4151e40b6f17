"""Loss functions, the uncertainty Y_l and expected posterior loss.

An adversary who sees output y picks the guess w minimizing the expected
loss under the posterior on x, so the expected loss of a prior/channel pair
is sum_y min_w sum_x l(w, x) J[x, y].
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from . import _kernels
from .errors import (EmptyGuessSet, EvaluationFailure, IllegalLoss, NegativeEntry,
                     QuadratureNonconvergence, SupportMismatch)
from .mechanisms import TruncatedLaplace
from .pixelate import NStepMechanism, PiecewisePrior, RestrictedMechanism, pixelate_prior
from .prob import (TOL_SUPPORT, Channel, DiscreteDist, grid_points, hyper_of_channel,
                   nfloor_index, push_joint, same_support)

QUAD_TOL = 1e-8
# Gauss-Legendre order for the inner x-integrals (exact for polynomial pieces
# up to degree 31; the smooth exponential factor is resolved far below QUAD_TOL)
_GL_ORDER = 16
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)


@dataclass(frozen=True, eq=False)
class LossFunction:
    """l(w, x) >= 0 over a finite guess set.

    ``guesses`` are the points theta(w) in [0, 1]; ``None`` means the guess
    set is the support the loss is evaluated on. A loss is either given by a
    vectorized ``kernel(theta, x)`` or by a ``table`` of values at the points
    of U_grid_n, looked up at floor(grid_n x) / grid_n.
    """

    name: str
    guesses: Optional[np.ndarray] = None
    kernel: Optional[Callable] = None
    kappa: Optional[float] = None
    monotone: Optional[Callable] = None
    table: Optional[np.ndarray] = None
    grid_n: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.guesses is not None:
            g = np.array(self.guesses, dtype=float)
            if g.ndim != 1 or g.size == 0:
                raise EmptyGuessSet(f"loss {self.name!r} has an empty guess set")
            g.setflags(write=False)
            object.__setattr__(self, "guesses", g)
        if (self.kernel is None) == (self.table is None):
            raise ValueError("a loss needs exactly one of kernel or table")
        if self.table is not None:
            t = np.array(self.table, dtype=float)
            if t.ndim != 2 or self.grid_n is None or t.shape[1] != self.grid_n + 1:
                raise SupportMismatch("table losses need one column per point of U_grid_n")
            if self.guesses is None or t.shape[0] != len(self.guesses):
                raise SupportMismatch("table losses need one row per guess")
            if np.any(t < 0.0) or not np.all(np.isfinite(t)):
                raise NegativeEntry("loss values must be finite and nonnegative")
            t.setflags(write=False)
            object.__setattr__(self, "table", t)

    def bind(self, support) -> "LossFunction":
        """Fill in an unspecified guess set with ``support``."""
        if self.guesses is not None:
            return self
        return replace(self, guesses=np.asarray(support, dtype=float))

    def values(self, xs) -> np.ndarray:
        """|W| x len(xs) array of l(w, x)."""
        if self.guesses is None:
            raise EmptyGuessSet(f"loss {self.name!r} has no guess set; bind one first")
        xs = np.asarray(xs, dtype=float)
        if self.table is not None:
            return self.table[:, nfloor_index(xs, self.grid_n)]
        out = self.kernel(self.guesses[:, None], xs[None, :])
        return np.broadcast_to(np.asarray(out, dtype=float), (len(self.guesses), xs.size))

    def scaled(self, factor: float) -> "LossFunction":
        base = self
        if self.table is not None:
            return replace(self, name=f"{factor}*{self.name}", table=self.table * factor,
                           kappa=None if self.kappa is None else self.kappa * factor)
        return replace(self, name=f"{factor}*{self.name}",
                       kernel=lambda w, x: factor * base.kernel(w, x),
                       kappa=None if self.kappa is None else self.kappa * factor, monotone=None)


def _len(w, x):
    return np.abs(x - w)


def _len2(w, x):
    return (x - w) ** 2


def builtin_len(guesses=None) -> LossFunction:
    return LossFunction("len", guesses, _len, kappa=1.0, monotone=lambda d, x: d)


def builtin_len2(guesses=None) -> LossFunction:
    # (x - w)^2 on [0, 1] has slope at most 2
    return LossFunction("len2", guesses, _len2, kappa=2.0, monotone=lambda d, x: d * d)


def builtin_bayes_risk(support=None) -> LossFunction:
    """1 when the guess misses x, else 0. Meant for discrete experiments only."""
    def miss(w, x):
        return (np.abs(x - w) > TOL_SUPPORT).astype(float)
    return LossFunction("bayes_risk", support, miss, kappa=None,
                        monotone=lambda d, x: (d > TOL_SUPPORT).astype(float))


def table_loss(rows, n: int | None = None, guesses=None, kappa=None, name="table") -> LossFunction:
    """Step loss from a |W| x (n+1) table of values at the points of U_n."""
    t = np.array(rows, dtype=float)
    if t.ndim != 2:
        raise SupportMismatch("a loss table must be a 2-d array of rows")
    n = t.shape[1] - 1 if n is None else int(n)
    if guesses is None:
        if t.shape[0] != n + 1:
            raise SupportMismatch("give guesses explicitly unless the table is square over U_n")
        guesses = grid_points(n)
    if kappa is None:
        kappa = float(np.max(np.abs(np.diff(t, axis=1)))) * n if n > 0 else 0.0
    return LossFunction(name, guesses, table=t, grid_n=n, kappa=kappa)


def load_loss(ref: str) -> LossFunction:
    """Resolve 'len', 'len2', 'bayes_risk' or 'table:<file>'."""
    if ref == "len":
        return builtin_len()
    if ref == "len2":
        return builtin_len2()
    if ref == "bayes_risk":
        return builtin_bayes_risk()
    if ref.startswith("table:"):
        path = Path(ref[len("table:"):])
        doc = json.loads(path.read_text())
        if isinstance(doc, list):
            return table_loss(doc, name=path.stem)
        return table_loss(doc["rows"], doc.get("n"), doc.get("guesses"), doc.get("kappa"), name=path.stem)
    raise ValueError(f"unknown loss {ref!r}; use len, len2, bayes_risk or table:<file>")


# --------------------------------------------------------------------------
# legality checks
# --------------------------------------------------------------------------

def check_monotone(loss: LossFunction, points, tol: float = 1e-12) -> bool:
    """True when, at every x in ``points``, l(w, x) depends only on |theta(w) - x|
    and does not decrease as that distance grows."""
    pts = np.asarray(points, dtype=float)
    loss = loss.bind(pts)
    vals = loss.values(pts)
    for j, x in enumerate(pts):
        d = np.abs(loss.guesses - x)
        order = np.lexsort((vals[:, j], d))
        ds = d[order]
        vs = vals[order, j]
        if np.any(np.diff(vs) < -tol):
            return False
        same = np.abs(np.diff(ds)) <= TOL_SUPPORT
        if np.any(same & (np.abs(np.diff(vs)) > tol)):
            return False
    return True


def require_monotone(loss: LossFunction, points) -> None:
    if not check_monotone(loss, points):
        raise IllegalLoss(f"loss {loss.name!r} is not monotone in |w - x| on the given grid")


def check_lipschitz(loss: LossFunction, points, kappa: float | None = None, tol: float = 1e-12) -> bool:
    """Lipschitz check in x over all pairs of ``points``, for every guess."""
    k = loss.kappa if kappa is None else kappa
    if k is None:
        return False
    pts = np.asarray(points, dtype=float)
    vals = loss.bind(pts).values(pts)
    dv = np.abs(vals[:, :, None] - vals[:, None, :])
    dx = np.abs(pts[:, None] - pts[None, :])
    return bool(np.all(dv <= k * dx[None] + tol))


# --------------------------------------------------------------------------
# discrete expected loss
# --------------------------------------------------------------------------

def uncertainty(loss: LossFunction, dist: DiscreteDist):
    """(min_w E_dist[l(w, .)], argmin guess); ties go to the lowest index."""
    loss = loss.bind(dist.support)
    scores = loss.values(dist.support) @ dist.probs
    k = int(np.argmin(scores))
    return float(scores[k]), float(loss.guesses[k])


def _loss_matrix(loss: LossFunction, support) -> np.ndarray:
    return np.ascontiguousarray(loss.bind(support).values(support), dtype=float)


def expected_loss_discrete(prior: DiscreteDist, channel: Channel, loss: LossFunction) -> float:
    """sum_y min_w sum_x l(w, x) prior[x] C[x, y]."""
    joint = push_joint(prior, channel)
    mins, _ = _kernels.column_min(_loss_matrix(loss, prior.support), np.ascontiguousarray(joint.matrix))
    return math.fsum(mins)


def expected_loss_via_hyper(prior: DiscreteDist, channel: Channel, loss: LossFunction) -> float:
    """Same quantity as ``expected_loss_discrete`` computed as E_hyper[Y_l]."""
    bound = loss.bind(prior.support)
    return hyper_of_channel(prior, channel).expect(lambda d: uncertainty(bound, d)[0])


def optimal_guesses(prior: DiscreteDist, channel: Channel, loss: LossFunction) -> np.ndarray:
    """Remap: the minimizing guess for each output column."""
    bound = loss.bind(prior.support)
    joint = push_joint(prior, channel)
    _, arg = _kernels.column_min(_loss_matrix(bound, prior.support), np.ascontiguousarray(joint.matrix))
    return bound.guesses[arg]


# --------------------------------------------------------------------------
# Laplace outputs on finitely many inputs (exact)
# --------------------------------------------------------------------------

def laplace_loss_exact(eps: float, centers, coef) -> float:
    """Expected loss when input k (at centers[k]) goes through the truncated Laplace.

    ``coef[w, k]`` is sum over the inputs at centers[k] of l(w, x) * prior(x).
    The value is sum over the two atoms of min_w (atom mass) plus the
    integral over y in [0, 1] of min_w sum_k coef[w, k] * density_k(y). Between
    consecutive centers every density is a*exp(-eps s) + b*exp(-eps (h - s)),
    two such curves cross at most once, so the envelope is integrated in
    closed form.
    """
    centers = np.asarray(centers, dtype=float)
    coef = np.asarray(coef, dtype=float)
    atom0 = float((coef @ (0.5 * np.exp(-eps * centers))).min())
    atom1 = float((coef @ (0.5 * np.exp(-eps * (1.0 - centers)))).min())
    cuts = np.unique(np.concatenate(([0.0, 1.0], centers)))
    lo = cuts[:-1]
    hi = cuts[1:]
    half = 0.5 * eps
    left = centers[None, :] <= lo[:, None] + TOL_SUPPORT
    right = centers[None, :] >= hi[:, None] - TOL_SUPPORT
    decay_l = np.where(left, half * np.exp(-eps * np.clip(lo[:, None] - centers[None, :], 0.0, None)), 0.0)
    decay_r = np.where(right, half * np.exp(-eps * np.clip(centers[None, :] - hi[:, None], 0.0, None)), 0.0)
    A = np.ascontiguousarray(decay_l @ coef.T)
    B = np.ascontiguousarray(decay_r @ coef.T)
    cells = _kernels.envelope_integrals(A, B, float(eps), np.ascontiguousarray(hi - lo))
    return math.fsum([atom0, atom1, *cells])


def expected_loss_restricted(prior: DiscreteDist, mechanism, loss: LossFunction) -> float:
    """Expected loss of a truncated Laplace (or a restriction of one) on a discrete prior."""
    base = mechanism.base if isinstance(mechanism, RestrictedMechanism) else mechanism
    if isinstance(mechanism, RestrictedMechanism) and not same_support(mechanism.inputs, prior.support):
        raise SupportMismatch("prior support differs from the restricted mechanism's inputs")
    if isinstance(base, TruncatedLaplace):
        centers = prior.support
    elif isinstance(base, NStepMechanism) and isinstance(base.base, TruncatedLaplace):
        centers = np.asarray(base.cells(prior.support), dtype=float) / base.n
        base = base.base
    else:
        raise EvaluationFailure("exact restricted loss is available for truncated-Laplace families only")
    coef = _loss_matrix(loss, prior.support) * prior.probs[None, :]
    uniq, inv = np.unique(centers, return_inverse=True)
    merged = np.zeros((coef.shape[0], len(uniq)))
    np.add.at(merged.T, inv, coef.T)
    return laplace_loss_exact(base.eps, uniq, merged)


# --------------------------------------------------------------------------
# continuous priors
# --------------------------------------------------------------------------

def expected_loss_continuous(prior: PiecewisePrior, mechanism, loss: LossFunction,
                             method: str = "auto", quad_tol: float = QUAD_TOL) -> float:
    """int_y min_w int_x l(w, x) prior(x) K(x)(y) dx dy, plus atom outputs.

    With ``method="auto"``, an N-step mechanism paired with a step loss is
    reduced to a finite sum over the cells of the common grid. Otherwise the
    x-integral uses Gauss-Legendre on pieces where everything is smooth and
    the y-integral uses adaptive quadrature; QuadratureNonconvergence is
    raised when the summed error estimate exceeds ``quad_tol``.
    """
    if method not in ("auto", "quad"):
        raise ValueError(f"method must be 'auto' or 'quad', got {method!r}")
    loss = _bind_for_mechanism(loss, mechanism)
    if method == "auto" and isinstance(mechanism, NStepMechanism) and loss.grid_n is not None:
        return _stepwise_loss(prior, mechanism, loss)
    return _quadrature_loss(prior, mechanism, loss, quad_tol)


def _bind_for_mechanism(loss: LossFunction, mechanism) -> LossFunction:
    if loss.guesses is not None:
        return loss
    n = loss.grid_n or getattr(mechanism, "n", None)
    if n is None:
        raise EmptyGuessSet("continuous losses need an explicit guess set")
    return loss.bind(grid_points(n))


def _stepwise_loss(prior: PiecewisePrior, mech: NStepMechanism, loss: LossFunction) -> float:
    g = math.lcm(mech.n, loss.grid_n)
    pix = pixelate_prior(prior, g)
    pts = pix.support
    if mech.discrete:
        rows = mech.base.matrix[mech.cells(pts)]
        return expected_loss_discrete(pix, Channel(pts, mech.base.outputs, rows), loss)
    return expected_loss_restricted(pix, mech, loss)


def _x_cuts(prior: PiecewisePrior, mech, loss: LossFunction) -> np.ndarray:
    cuts = set(prior.breakpoints())
    if loss.grid_n is not None:
        cuts.update(grid_points(loss.grid_n).tolist())
    if isinstance(mech, NStepMechanism):
        cuts.update(grid_points(mech.n).tolist())
    return np.array(sorted(cuts))


def _gl_nodes(cuts) -> tuple[np.ndarray, np.ndarray]:
    lo = cuts[:-1, None]
    hi = cuts[1:, None]
    half = 0.5 * (hi - lo)
    xs = (lo + half * (1.0 + _GL_NODES[None, :])).ravel()
    ws = (half * _GL_WEIGHTS[None, :]).ravel()
    return xs, ws


def _quadrature_loss(prior: PiecewisePrior, mech, loss: LossFunction, tol: float) -> float:
    cuts = _x_cuts(prior, mech, loss)
    xs, ws = _gl_nodes(cuts)
    dens = prior.density(xs)
    keep = dens > 0.0
    xs, ws, dens = xs[keep], ws[keep], dens[keep]
    atom_x = np.array([loc for loc, _ in prior.atoms], dtype=float)
    atom_m = np.array([w for _, w in prior.atoms], dtype=float)
    lx = loss.values(xs) * (dens * ws)[None, :]
    la = loss.values(atom_x) * atom_m[None, :] if atom_x.size else np.zeros((len(loss.guesses), 0))

    # output atoms (every output, for a discrete mechanism)
    parts = []
    wx = mech.atom_weights(xs) if xs.size else np.zeros((0, len(mech.atom_locations)))
    wa = mech.atom_weights(atom_x) if atom_x.size else np.zeros((0, len(mech.atom_locations)))
    scores = lx @ wx + la @ wa
    parts.extend(scores.min(axis=0).tolist())

    if not getattr(mech, "has_density", True):
        return math.fsum(parts)

    def inner(y: float) -> float:
        extra = [b for b in mech.x_breaks(y) if 0.0 < b < 1.0]
        if extra:
            px, pw = _gl_nodes(np.unique(np.concatenate((cuts, extra))))
            pd = prior.density(px)
            sel = pd > 0.0
            px, pw, pd = px[sel], pw[sel], pd[sel]
            vals = loss.values(px) * (pd * pw)[None, :]
        else:
            px, vals = xs, lx
        s = vals @ mech.density(px, y)
        if atom_x.size:
            s = s + la @ mech.density(atom_x, y)
        return float(s.min())

    ycuts = np.unique(np.concatenate((cuts, [0.0, 1.0])))
    budget = tol / max(1, len(ycuts) - 1)
    err_total = 0.0
    with warnings.catch_warnings():
        # shortfalls surface as QuadratureNonconvergence below
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(ycuts[:-1], ycuts[1:]):
            val, err = integrate.quad(inner, a, b, epsabs=budget, epsrel=0.0, limit=200)
            parts.append(val)
            err_total += err
    if err_total > tol:
        raise QuadratureNonconvergence(err_total, tol)
    return math.fsum(parts)


# --------------------------------------------------------------------------
# prior-weighted loss
# --------------------------------------------------------------------------

def weight_loss_for_prior(loss: LossFunction, prior: DiscreteDist, n: int) -> LossFunction:
    """Fold a prior on U_N into the loss: l*(w, x) = l(w, x) prior(x) f.

    f is N when the prior puts nothing on the point 1 (the N live points of a
    pixelated prior), else N + 1; ``reference_uniform`` returns the matching
    uniform prior, under which l* has the same expected loss as l under the
    original prior for every channel.
    """
    pts = grid_points(n)
    if not same_support(prior.support, pts):
        raise SupportMismatch(f"prior is not on U_{n}")
    loss = loss.bind(pts)
    f = n if prior.probs[-1] == 0.0 else n + 1
    table = loss.values(pts) * prior.probs[None, :] * f
    lip_prior = float(np.max(np.abs(np.diff(prior.probs)))) * n
    sup_loss = float(np.max(loss.values(pts)))
    kappa_star = None
    if loss.kappa is not None:
        kappa_star = loss.kappa * f * float(prior.probs.max()) + sup_loss * f * lip_prior
    return LossFunction(f"{loss.name}*prior", loss.guesses, table=table, grid_n=n, kappa=kappa_star,
                        meta={"base_kappa": loss.kappa, "weight_factor": f})


def reference_uniform(prior: DiscreteDist, n: int) -> DiscreteDist:
    probs = np.full(n + 1, 1.0 / (n + 1))
    if prior.probs[-1] == 0.0:
        probs = np.full(n + 1, 1.0 / n)
        probs[-1] = 0.0
    return DiscreteDist(grid_points(n), probs)
