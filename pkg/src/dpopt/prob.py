"""Discrete distributions, channels, joints and hyper-distributions on [0, 1]."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import NegativeEntry, NonStochasticRow, OutOfRange, SupportMismatch

TOL_SUM = 1e-9
TOL_DIST = 1e-9
# supports are compared with this absolute slack
TOL_SUPPORT = 1e-12


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------------
# grids
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """The N+1 evenly spaced points {0, 1/N, ..., 1}."""

    n_intervals: int

    def __post_init__(self):
        from .errors import InvalidN

        if not isinstance(self.n_intervals, (int, np.integer)) or self.n_intervals < 1:
            raise InvalidN(f"grid needs a positive integer N, got {self.n_intervals!r}")

    @cached_property
    def points(self) -> np.ndarray:
        return grid_points(self.n_intervals)

    def __len__(self) -> int:
        return self.n_intervals + 1


def grid_points(n: int) -> np.ndarray:
    # k / N is correctly rounded, so U_N is a subset of U_{kN} bit for bit
    return _frozen(np.arange(n + 1, dtype=float) / n)


def nfloor_index(x, n: int):
    """Index of the cell [k/N, (k+1)/N) holding x; grid points map to themselves."""
    xa = np.asarray(x, dtype=float)
    if np.any((xa < 0.0) | (xa > 1.0)) or np.any(np.isnan(xa)):
        raise OutOfRange(f"x must lie in [0, 1], got {x!r}")
    k = np.floor(xa * n).astype(np.int64)
    k = np.where((k + 1) / n <= xa, k + 1, k)
    k = np.where(k / n > xa, k - 1, k)
    k = np.clip(k, 0, n)
    return int(k) if np.ndim(k) == 0 else k


def nfloor(x, n: int):
    """floor(N x) / N."""
    k = nfloor_index(x, n)
    return k / n if isinstance(k, int) else k.astype(float) / n


def cell_index(x, n: int):
    """Cell of an N-step function: like nfloor_index but x = 1 lands in cell N-1."""
    k = nfloor_index(x, n)
    if isinstance(k, int):
        return min(k, n - 1)
    return np.minimum(k, n - 1)


def same_support(a, b) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a.shape == b.shape and bool(np.all(np.abs(a - b) <= TOL_SUPPORT))


# --------------------------------------------------------------------------
# distributions
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteDist:
    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "support", _frozen(self.support))
        object.__setattr__(self, "probs", _frozen(self.probs))
        if self.support.shape != self.probs.shape or self.support.ndim != 1:
            raise SupportMismatch("support and probabilities must be 1-d of equal length")
        if np.any(self.probs < 0.0):
            raise NegativeEntry("probabilities must be nonnegative")
        if abs(math.fsum(self.probs) - 1.0) > TOL_SUM:
            raise NonStochasticRow(f"probabilities sum to {math.fsum(self.probs)!r}, not 1")

    def __len__(self) -> int:
        return len(self.probs)

    def expect(self, values) -> float:
        return math.fsum(np.asarray(values, dtype=float) * self.probs)

    def to_json(self) -> dict:
        return {"support": self.support.tolist(), "probs": self.probs.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "DiscreteDist":
        return cls(doc["support"], doc["probs"])


def uniform(support: Sequence[float]) -> DiscreteDist:
    support = np.asarray(support, dtype=float)
    return DiscreteDist(support, np.full(len(support), 1.0 / len(support)))


def point_mass(support: Sequence[float], index: int) -> DiscreteDist:
    probs = np.zeros(len(support))
    probs[index] = 1.0
    return DiscreteDist(support, probs)


def max_divergence(d1: DiscreteDist, d2: DiscreteDist) -> float:
    """max_y |ln(d1_y / d2_y)|; +inf if exactly one side is zero somewhere.

    For discrete distributions the max over outcome sets is attained on a
    single outcome, since a set's ratio is a weighted mean of its points'.
    """
    if not same_support(d1.support, d2.support):
        raise SupportMismatch("max divergence needs a common support")
    return _pointwise_divergence(d1.probs, d2.probs)


def _pointwise_divergence(p, q) -> float:
    zp = p == 0.0
    zq = q == 0.0
    if np.any(zp ^ zq):
        return math.inf
    live = ~(zp & zq)
    if not np.any(live):
        return 0.0
    return float(np.max(np.abs(np.log(p[live]) - np.log(q[live]))))


def subset_max_divergence(d1: DiscreteDist, d2: DiscreteDist) -> float:
    """Brute force over every nonempty outcome set (exponential; for checking)."""
    n = len(d1)
    worst = 0.0
    for size in range(1, n + 1):
        for subset in combinations(range(n), size):
            idx = list(subset)
            a = math.fsum(d1.probs[idx])
            b = math.fsum(d2.probs[idx])
            if a == 0.0 and b == 0.0:
                continue
            if a == 0.0 or b == 0.0:
                return math.inf
            worst = max(worst, abs(math.log(a / b)))
    return worst


# --------------------------------------------------------------------------
# channels
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Channel:
    """Row-stochastic matrix; row x is the output distribution on input x.

    Build through ``make_channel`` unless the rows are known to be valid.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "inputs", _frozen(self.inputs))
        object.__setattr__(self, "outputs", _frozen(self.outputs))
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        if self.matrix.shape != (len(self.inputs), len(self.outputs)):
            raise SupportMismatch(
                f"matrix shape {self.matrix.shape} does not match "
                f"{len(self.inputs)} inputs x {len(self.outputs)} outputs")

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def row(self, i: int) -> DiscreteDist:
        return DiscreteDist(self.outputs, self.matrix[i])

    def to_json(self) -> dict:
        return {
            "input_support": self.inputs.tolist(),
            "output_support": self.outputs.tolist(),
            "rows": self.matrix.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Channel":
        return make_channel(doc["input_support"], doc["output_support"], doc["rows"])

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def make_channel(input_support, output_support, rows) -> Channel:
    inputs = np.asarray(input_support, dtype=float)
    outputs = np.asarray(output_support, dtype=float)
    try:
        matrix = np.array(rows, dtype=float)
    except ValueError as exc:
        raise SupportMismatch(f"rows are ragged: {exc}") from None
    if matrix.ndim != 2 or matrix.shape != (len(inputs), len(outputs)):
        raise SupportMismatch(
            f"need {len(inputs)} rows of length {len(outputs)}, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise NegativeEntry("channel entries must be finite")
    if np.any(matrix < 0.0):
        raise NegativeEntry("channel entries must be nonnegative")
    sums = matrix.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > TOL_SUM)
    if bad.size:
        raise NonStochasticRow(f"row {bad[0]} sums to {sums[bad[0]]!r}")
    return Channel(inputs, outputs, matrix / sums[:, None])


def identity_channel(support) -> Channel:
    n = len(support)
    return Channel(support, support, np.eye(n))


def constant_channel(inputs, outputs) -> Channel:
    """The no-information channel: every row uniform on the outputs."""
    return Channel(inputs, outputs, np.full((len(inputs), len(outputs)), 1.0 / len(outputs)))


# --------------------------------------------------------------------------
# joints and hypers
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Joint:
    inputs: np.ndarray
    outputs: np.ndarray
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "inputs", _frozen(self.inputs))
        object.__setattr__(self, "outputs", _frozen(self.outputs))
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        if self.matrix.shape != (len(self.inputs), len(self.outputs)):
            raise SupportMismatch("joint matrix does not match its supports")
        if np.any(self.matrix < 0.0):
            raise NegativeEntry("joint entries must be nonnegative")
        if abs(math.fsum(self.matrix.ravel()) - 1.0) > TOL_SUM:
            raise NonStochasticRow("joint entries must sum to 1")

    @property
    def prior(self) -> DiscreteDist:
        return DiscreteDist(self.inputs, self.matrix.sum(axis=1))

    @property
    def output_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=0)


def push_joint(prior: DiscreteDist, channel: Channel) -> Joint:
    """J[x, y] = prior[x] * C[x, y]."""
    if not same_support(prior.support, channel.inputs):
        raise SupportMismatch("prior support differs from the channel's inputs")
    return Joint(channel.inputs, channel.outputs, prior.probs[:, None] * channel.matrix)


@dataclass(frozen=True, eq=False)
class Hyper:
    """Distribution over posteriors: inners[k] is a distribution on ``support``."""

    support: np.ndarray
    inners: np.ndarray
    outers: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "support", _frozen(self.support))
        object.__setattr__(self, "inners", _frozen(np.atleast_2d(self.inners)))
        object.__setattr__(self, "outers", _frozen(self.outers))
        if self.inners.shape != (len(self.outers), len(self.support)):
            raise SupportMismatch("inners must be (#outers x |support|)")
        if np.any(self.outers <= 0.0):
            raise NegativeEntry("outer probabilities must be positive")
        if abs(math.fsum(self.outers) - 1.0) > TOL_SUM:
            raise NonStochasticRow("outer probabilities must sum to 1")

    def __len__(self) -> int:
        return len(self.outers)

    def inner(self, k: int) -> DiscreteDist:
        return DiscreteDist(self.support, self.inners[k])

    def expect(self, f) -> float:
        """Expected value of f (a function on distributions) over the hyper."""
        return math.fsum(o * f(self.inner(k)) for k, o in enumerate(self.outers))

    @property
    def mean(self) -> np.ndarray:
        """Outer-weighted average of the inners (equals the prior)."""
        return self.outers @ self.inners


def total_variation(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def merge_inners(inners: np.ndarray, outers: np.ndarray):
    """Merge inners closer than TOL_DIST in total variation.

    Returns (inners, outers, owner) where owner[k] is the merged index of the
    k-th input inner. Merged inners are outer-weighted averages, so the mean
    of the hyper is unchanged.
    """
    kept: list[np.ndarray] = []
    weights: list[float] = []
    owner = np.empty(len(outers), dtype=np.int64)
    for k, (vec, w) in enumerate(zip(inners, outers)):
        hit = -1
        for j, ref in enumerate(kept):
            if total_variation(vec, ref) <= TOL_DIST:
                hit = j
                break
        if hit < 0:
            kept.append(np.array(vec, dtype=float))
            weights.append(float(w))
            owner[k] = len(kept) - 1
        else:
            total = weights[hit] + w
            kept[hit] = (weights[hit] * kept[hit] + w * vec) / total
            weights[hit] = total
            owner[k] = hit
    return np.array(kept), np.array(weights), owner


def hyper_of(joint: Joint) -> Hyper:
    hyper, _ = hyper_with_columns(joint)
    return hyper


def hyper_with_columns(joint: Joint):
    """Hyper of a joint plus, per output column, the inner it became (-1 if dropped)."""
    marg = joint.output_marginal
    live = np.flatnonzero(marg > 0.0)
    posts = (joint.matrix[:, live] / marg[live]).T
    inners, outers, owner = merge_inners(posts, marg[live])
    column_owner = np.full(len(marg), -1, dtype=np.int64)
    column_owner[live] = owner
    return Hyper(joint.inputs, inners, outers), column_owner


def hyper_of_channel(prior: DiscreteDist, channel: Channel) -> Hyper:
    return hyper_of(push_joint(prior, channel))
