"""Concrete mechanisms on [0, 1] and their epsilon-DP checks.

Mechanism inputs live on [0, 1] with the Euclidean metric, so epsilon-DP is
the Lipschitz condition D(M(x1), M(x2)) <= eps * |x1 - x2| with D the max
divergence of the output distributions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels
from .errors import InvalidEpsilon, InvalidN, InvalidT, NonStochasticRow, OutOfRange
from .prob import TOL_SUM, Channel, grid_points, max_divergence

TOL_DP = 1e-9


@dataclass(frozen=True)
class EpsilonParams:
    epsilon: float

    def __post_init__(self):
        eps = float(self.epsilon)
        if not math.isfinite(eps) or eps <= 0.0:
            raise InvalidEpsilon(f"epsilon must be a positive finite real, got {self.epsilon!r}")
        object.__setattr__(self, "epsilon", eps)

    @property
    def alpha(self) -> float:
        return math.exp(-self.epsilon)


def as_eps(eps) -> float:
    if isinstance(eps, EpsilonParams):
        return eps.epsilon
    return EpsilonParams(eps).epsilon


def _check_n(n, name="N", exc=InvalidN) -> int:
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise exc(f"{name} must be a positive integer, got {n!r}")
    return int(n)


# --------------------------------------------------------------------------
# truncated Geometric on U_N
# --------------------------------------------------------------------------

def geometric_channel(eps, n: int) -> Channel:
    """Truncated Geometric mechanism on U_N with per-step ratio exp(-eps/N).

    Interior entries are (1-a)/(1+a) a^|k| for step k; the columns at 0 and 1
    collect the geometric tails, a^n/(1+a) and a^(N-n)/(1+a).
    """
    e = as_eps(eps)
    n = _check_n(n)
    a = math.exp(-e / n)
    idx = np.arange(n + 1)
    steps = np.abs(idx[None, :] - idx[:, None])
    mat = (1.0 - a) / (1.0 + a) * a ** steps
    mat[:, 0] = a ** idx / (1.0 + a)
    mat[:, n] = a ** (n - idx) / (1.0 + a)
    pts = grid_points(n)
    return Channel(pts, pts, mat)


def geometric_step_ratio(channel: Channel) -> float:
    """Ratio of consecutive entries down the last column, i.e. the per-step alpha."""
    col = channel.matrix[:, -1]
    return float(col[0] / col[1])


# --------------------------------------------------------------------------
# Laplace and truncated Laplace
# --------------------------------------------------------------------------

def laplace_density(eps, x, y):
    e = as_eps(eps)
    return 0.5 * e * np.exp(-e * np.abs(np.asarray(y, dtype=float) - np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class ExpPiece:
    """Density scale * exp(-rate * |y - center|) on [start, stop]."""

    start: float
    stop: float
    scale: float
    rate: float
    center: float

    def density(self, y):
        return self.scale * np.exp(-self.rate * np.abs(np.asarray(y, dtype=float) - self.center))

    def log_density(self, y):
        return math.log(self.scale) - self.rate * np.abs(np.asarray(y, dtype=float) - self.center)

    def mass(self, a: float, b: float) -> float:
        lo = max(a, self.start)
        hi = min(b, self.stop)
        if hi <= lo:
            return 0.0
        if self.rate == 0.0:
            return self.scale * (hi - lo)
        c = self.center
        if hi <= c:
            return self.scale * _exp_segment(self.rate, c - hi, hi - lo)
        if lo >= c:
            return self.scale * _exp_segment(self.rate, lo - c, hi - lo)
        return self.scale * (_exp_segment(self.rate, 0.0, c - lo) + _exp_segment(self.rate, 0.0, hi - c))

    def to_json(self) -> dict:
        return {"from": self.start, "to": self.stop, "kind": "exp",
                "scale": self.scale, "rate": self.rate, "center": self.center}


def _exp_segment(rate: float, near: float, width: float) -> float:
    """Integral of exp(-rate t) for t in [near, near + width]."""
    return math.exp(-rate * near) * -math.expm1(-rate * width) / rate


@dataclass(frozen=True, eq=False)
class HybridMeasure:
    """Probability measure on [0, 1]: finitely many atoms plus a piecewise density."""

    atoms: tuple
    pieces: tuple

    def __post_init__(self):
        atoms = tuple((float(loc), float(w)) for loc, w in self.atoms)
        pieces = tuple(sorted(self.pieces, key=lambda p: p.start))
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "pieces", pieces)
        for loc, w in atoms:
            if not 0.0 <= loc <= 1.0:
                raise OutOfRange(f"atom at {loc} lies outside [0, 1]")
            if w < 0.0:
                raise NonStochasticRow("atom weights must be nonnegative")
        total = self.total_mass()
        if abs(total - 1.0) > TOL_SUM:
            raise NonStochasticRow(f"hybrid measure has total mass {total!r}")

    def total_mass(self) -> float:
        return math.fsum([w for _, w in self.atoms] + [p.mass(p.start, p.stop) for p in self.pieces])

    def atom_weight(self, loc: float) -> float:
        return math.fsum(w for l, w in self.atoms if l == loc)

    def mass(self, a: float, b: float, closed: bool = False) -> float:
        """Mass of [a, b), or of [a, b] when ``closed``."""
        inside = [w for loc, w in self.atoms if a <= loc < b or (closed and loc == b)]
        return math.fsum(inside + [p.mass(a, b) for p in self.pieces])

    def density(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for p in self.pieces:
            inside = (y >= p.start) & (y < p.stop) if p.stop < 1.0 else (y >= p.start) & (y <= p.stop)
            out = np.where(inside, p.density(y), out)
        return out

    def breakpoints(self) -> list[float]:
        pts = {0.0, 1.0}
        for p in self.pieces:
            pts.update((p.start, p.stop))
            if p.start < p.center < p.stop:
                pts.add(p.center)
        return sorted(pts)

    def to_json(self) -> dict:
        return {"atoms": [[loc, w] for loc, w in self.atoms],
                "pieces": [p.to_json() for p in self.pieces]}

    @classmethod
    def from_json(cls, doc: dict) -> "HybridMeasure":
        pieces = []
        for p in doc.get("pieces", []):
            if p.get("kind", "exp") != "exp":
                raise ValueError(f"unsupported piece kind {p.get('kind')!r}")
            pieces.append(ExpPiece(p["from"], p["to"], p["scale"], p["rate"], p["center"]))
        return cls(tuple(tuple(a) for a in doc.get("atoms", [])), tuple(pieces))


def hybrid_max_divergence(m1: HybridMeasure, m2: HybridMeasure) -> float:
    """Sup of |log ratio| over atoms and over the density parts.

    On every interval between the merged breakpoints both log-densities are
    linear, so the sup over that interval sits at an endpoint.
    """
    locs = sorted({l for l, _ in m1.atoms} | {l for l, _ in m2.atoms})
    worst = 0.0
    for loc in locs:
        a, b = m1.atom_weight(loc), m2.atom_weight(loc)
        if a == 0.0 and b == 0.0:
            continue
        if a == 0.0 or b == 0.0:
            return math.inf
        worst = max(worst, abs(math.log(a / b)))
    cuts = sorted(set(m1.breakpoints()) | set(m2.breakpoints()))
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        p1 = _piece_covering(m1, lo, hi)
        p2 = _piece_covering(m2, lo, hi)
        if p1 is None and p2 is None:
            continue
        if p1 is None or p2 is None:
            return math.inf
        for y in (lo, hi):
            worst = max(worst, abs(float(p1.log_density(y) - p2.log_density(y))))
    return worst


def _piece_covering(m: HybridMeasure, lo: float, hi: float):
    for p in m.pieces:
        if p.start <= lo and hi <= p.stop and p.scale > 0.0:
            return p
    return None


@dataclass(frozen=True)
class TruncatedLaplace:
    """Laplace mechanism on [0, 1] with out-of-range outputs moved to atoms at 0 and 1.

    Atom weights are the Laplace tail masses: exp(-eps x)/2 at 0 and
    exp(-eps (1-x))/2 at 1.
    """

    eps: float

    def __post_init__(self):
        object.__setattr__(self, "eps", as_eps(self.eps))

    atom_locations = (0.0, 1.0)

    def __call__(self, x: float) -> HybridMeasure:
        x = float(x)
        if not 0.0 <= x <= 1.0:
            raise OutOfRange(f"truncated Laplace input must lie in [0, 1], got {x}")
        e = self.eps
        lo, hi = self._atoms(x)
        pieces = []
        if x > 0.0:
            pieces.append(ExpPiece(0.0, x, e / 2, e, x))
        if x < 1.0:
            pieces.append(ExpPiece(x, 1.0, e / 2, e, x))
        return HybridMeasure(((0.0, lo), (1.0, hi)), tuple(pieces))

    def _atoms(self, x):
        e = self.eps
        return 0.5 * np.exp(-e * x), 0.5 * np.exp(-e * (1.0 - x))

    def atom_weights(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        lo, hi = self._atoms(xs)
        return np.stack([lo, hi], axis=-1)

    def density(self, xs, y):
        return laplace_density(self.eps, xs, y)

    def x_breaks(self, y: float) -> list[float]:
        return [y]


def truncated_laplace(eps, x: float) -> HybridMeasure:
    return TruncatedLaplace(as_eps(eps))(x)


def laplace_batch_masses(eps: float, xs, edges) -> np.ndarray:
    """Truncated-Laplace mass of [edges[j], edges[j+1]) for each input in xs.

    The first edge may be -inf and the last +inf, which sweeps the atoms at
    0 and 1 into the end batches.
    """
    xs = np.asarray(xs, dtype=float)[:, None]
    a = np.asarray(edges[:-1], dtype=float)[None, :]
    b = np.asarray(edges[1:], dtype=float)[None, :]
    with np.errstate(invalid="ignore", over="ignore"):
        below = 0.5 * np.exp(-eps * (xs - b)) * -np.expm1(-eps * (b - a))
        above = 0.5 * np.exp(-eps * (a - xs)) * -np.expm1(-eps * (b - a))
        across = 1.0 - 0.5 * np.exp(-eps * (xs - a)) - 0.5 * np.exp(-eps * (b - xs))
    out = np.where(b <= xs, below, np.where(a >= xs, above, across))
    return np.where(np.isnan(out), 0.0, out)


def t_pixelated_laplace(eps, n: int, t: int) -> Channel:
    """Truncated Laplace on inputs U_N with outputs batched into 1/T segments.

    Output j/T collects [j/T, (j+1)/T) for j < T-1 and [1-1/T, 1] for j = T-1;
    the output point 1 itself keeps probability 0.
    """
    e = as_eps(eps)
    n = _check_n(n)
    t = _check_n(t, "T", InvalidT)
    edges = np.concatenate(([-np.inf], np.arange(1, t) / t, [np.inf]))
    xs = grid_points(n)
    masses = laplace_batch_masses(e, xs, edges)
    mat = np.zeros((n + 1, t + 1))
    mat[:, :t] = masses
    return Channel(xs, grid_points(t), mat)


# --------------------------------------------------------------------------
# DP checks
# --------------------------------------------------------------------------

class DPCheck(NamedTuple):
    holds: bool
    tightness: float


def verify_dp(channel, eps) -> DPCheck:
    """Largest ratio D(row x1, row x2) / |x1 - x2| over all input pairs.

    Accepts a Channel, or any object with ``inputs`` and a ``rows`` list of
    HybridMeasure / DiscreteDist (such as a restricted continuous mechanism).
    """
    e = as_eps(eps)
    if isinstance(channel, Channel):
        rows = np.ascontiguousarray(channel.matrix, dtype=float)
        points = np.ascontiguousarray(channel.inputs, dtype=float)
        tight = float(_kernels.dp_tightness(rows, points))
    else:
        tight = _pairwise_tightness(channel.inputs, channel.rows)
    return DPCheck(bool(tight <= e * (1.0 + TOL_DP)), tight)


def _pairwise_tightness(inputs: Sequence[float], rows) -> float:
    worst = 0.0
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            a, b = rows[i], rows[j]
            if isinstance(a, HybridMeasure):
                d = hybrid_max_divergence(a, b)
            else:
                d = max_divergence(a, b)
            dist = abs(inputs[i] - inputs[j])
            if d == 0.0:
                continue
            if dist == 0.0 or math.isinf(d):
                return math.inf
            worst = max(worst, d / dist)
    return worst


def continuous_dp_tightness(eps, n_pairs: int = 2001, n_y: int = 2001) -> float:
    """Grid estimate of sup |log ratio| / |x1 - x2| for the truncated Laplace.

    Pairs are the adjacent points of an (n_pairs + 1)-point grid on [0, 1];
    both the interior density and the two atoms are compared.
    """
    mech = TruncatedLaplace(as_eps(eps))
    xs = np.linspace(0.0, 1.0, n_pairs + 1)
    x1 = xs[:-1, None]
    x2 = xs[1:, None]
    ys = np.linspace(0.0, 1.0, n_y)[None, :]
    dist = (x2 - x1)[:, 0]
    dens = np.abs(np.log(mech.density(x1, ys)) - np.log(mech.density(x2, ys))).max(axis=1)
    atoms = np.abs(np.log(mech.atom_weights(x1[:, 0])) - np.log(mech.atom_weights(x2[:, 0]))).max(axis=1)
    return float((np.maximum(dens, atoms) / dist).max())
