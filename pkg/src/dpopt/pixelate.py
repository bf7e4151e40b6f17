"""Moving between [0, 1] and the grid U_N.

Priors are pixelated by gathering each cell's mass onto its left point.
Mechanisms and losses defined on U_N are lifted back to [0, 1] as N-step
functions that copy the value at floor(N x)/N, with x = 1 taking the value
of cell N-1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import EvaluationFailure, InvalidN, NonStochasticRow, OutOfRange, SupportMismatch
from .mechanisms import HybridMeasure, TruncatedLaplace
from .prob import (TOL_SUM, Channel, DiscreteDist, cell_index, grid_points, nfloor,
                   nfloor_index, same_support)

if TYPE_CHECKING:
    from .loss import LossFunction

__all__ = [
    "PolyPiece", "PiecewisePrior", "uniform_prior", "linear_prior", "step_prior", "atom_prior",
    "builtin_prior", "nfloor", "nfloor_index", "cell_index", "pixelate_prior",
    "NStepMechanism", "RestrictedMechanism", "nstep_channel", "nstep_loss",
    "restrict_continuous_mechanism",
]

# density nonnegativity is checked on this many points per piece
_DENSITY_PROBES = 65


# --------------------------------------------------------------------------
# priors
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PolyPiece:
    """Density sum_k coeffs[k] x^k on [start, stop) (powers of absolute x)."""

    start: float
    stop: float
    coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs) or (0.0,))

    def integral(self, a: float, b: float) -> float:
        lo = max(a, self.start)
        hi = min(b, self.stop)
        if hi <= lo:
            return 0.0
        anti = P.polyint(self.coeffs)
        return float(P.polyval(hi, anti) - P.polyval(lo, anti))

    def density(self, x):
        return P.polyval(np.asarray(x, dtype=float), self.coeffs)


@dataclass(frozen=True, eq=False)
class PiecewisePrior:
    """Piecewise-polynomial density on [0, 1] plus optional atoms (loc, weight)."""

    pieces: tuple
    atoms: tuple = field(default=())

    def __post_init__(self):
        pieces = tuple(sorted(self.pieces, key=lambda p: p.start))
        atoms = tuple((float(l), float(w)) for l, w in self.atoms)
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "atoms", atoms)
        if not pieces:
            raise SupportMismatch("a prior needs at least one piece covering [0, 1]")
        if pieces[0].start != 0.0 or pieces[-1].stop != 1.0:
            raise SupportMismatch("prior pieces must start at 0 and end at 1")
        for a, b in zip(pieces[:-1], pieces[1:]):
            if a.stop != b.start:
                raise SupportMismatch(f"prior pieces leave a gap or overlap at {a.stop}/{b.start}")
        for p in pieces:
            if p.stop <= p.start:
                raise SupportMismatch("prior piece with empty interval")
            probe = np.linspace(p.start, p.stop, _DENSITY_PROBES)
            if np.any(p.density(probe) < -1e-12):
                raise NonStochasticRow(f"density is negative on [{p.start}, {p.stop})")
        for loc, w in atoms:
            if not 0.0 <= loc <= 1.0:
                raise OutOfRange(f"prior atom at {loc} lies outside [0, 1]")
            if w < 0.0:
                raise NonStochasticRow("prior atom weights must be nonnegative")
        total = self.mass(0.0, 1.0, closed=True)
        if abs(total - 1.0) > TOL_SUM:
            raise NonStochasticRow(f"prior has total mass {total!r}")

    def mass(self, a: float, b: float, closed: bool = False) -> float:
        """Probability of [a, b), or of [a, b] when ``closed``."""
        parts = [p.integral(a, b) for p in self.pieces]
        parts += [w for loc, w in self.atoms if a <= loc < b or (closed and loc == b)]
        return math.fsum(parts)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for i, p in enumerate(self.pieces):
            last = i == len(self.pieces) - 1
            inside = (x >= p.start) & ((x <= p.stop) if last else (x < p.stop))
            out = np.where(inside, p.density(x), out)
        return out

    def breakpoints(self) -> list[float]:
        pts = {0.0, 1.0}
        for p in self.pieces:
            pts.update((p.start, p.stop))
        return sorted(pts)

    def to_json(self) -> dict:
        return {"pieces": [{"from": p.start, "to": p.stop, "coeffs": list(p.coeffs)} for p in self.pieces],
                "atoms": [[l, w] for l, w in self.atoms]}

    @classmethod
    def from_json(cls, doc: dict) -> "PiecewisePrior":
        pieces = tuple(PolyPiece(float(p["from"]), float(p["to"]), tuple(p.get("coeffs", [0.0])))
                       for p in doc["pieces"])
        atoms = tuple((float(l), float(w)) for l, w in doc.get("atoms", []))
        return cls(pieces, atoms)


def uniform_prior() -> PiecewisePrior:
    return PiecewisePrior((PolyPiece(0.0, 1.0, (1.0,)),))


def linear_prior() -> PiecewisePrior:
    """Density 2x."""
    return PiecewisePrior((PolyPiece(0.0, 1.0, (0.0, 2.0)),))


def step_prior() -> PiecewisePrior:
    """Density 3/2 on [0, 1/2) and 1/2 on [1/2, 1]."""
    return PiecewisePrior((PolyPiece(0.0, 0.5, (1.5,)), PolyPiece(0.5, 1.0, (0.5,))))


def atom_prior(loc: float) -> PiecewisePrior:
    return PiecewisePrior((PolyPiece(0.0, 1.0, (0.0,)),), ((loc, 1.0),))


_BUILTIN_PRIORS = {"uniform": uniform_prior, "linear": linear_prior, "step": step_prior}


def builtin_prior(name: str) -> PiecewisePrior:
    try:
        return _BUILTIN_PRIORS[name]()
    except KeyError:
        raise ValueError(f"unknown prior {name!r}; builtins are {sorted(_BUILTIN_PRIORS)}") from None


def pixelate_prior(prior: PiecewisePrior, n: int) -> DiscreteDist:
    """pi_N(k/N) = prior[k/N, (k+1)/N) for k < N-1, prior[(N-1)/N, 1] for k = N-1, 0 at 1."""
    if n < 1:
        raise InvalidN(f"N must be a positive integer, got {n!r}")
    probs = np.zeros(n + 1)
    for k in range(n - 1):
        probs[k] = prior.mass(k / n, (k + 1) / n)
    probs[n - 1] = prior.mass((n - 1) / n, 1.0, closed=True)
    return DiscreteDist(grid_points(n), probs)


# --------------------------------------------------------------------------
# N-step mechanisms
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NStepMechanism:
    """Continuous-input mechanism constant on each cell [k/N, (k+1)/N).

    ``base`` is either a Channel on U_N (discrete outputs) or a continuous
    mechanism evaluated at the cell's left point (hybrid outputs).
    """

    n: int
    base: Any

    def cells(self, xs):
        return cell_index(xs, self.n)

    @property
    def discrete(self) -> bool:
        return isinstance(self.base, Channel)

    def __call__(self, x: float):
        k = self.cells(float(x))
        if self.discrete:
            return self.base.row(k)
        return self.base(k / self.n)

    # vectorized interface used by the loss integrators
    @property
    def atom_locations(self):
        return tuple(self.base.outputs) if self.discrete else self.base.atom_locations

    def atom_weights(self, xs) -> np.ndarray:
        k = self.cells(xs)
        if self.discrete:
            return self.base.matrix[k]
        return self.base.atom_weights(np.asarray(k, dtype=float) / self.n)

    @property
    def has_density(self) -> bool:
        return not self.discrete

    def density(self, xs, y):
        k = self.cells(xs)
        return self.base.density(np.asarray(k, dtype=float) / self.n, y)

    def x_breaks(self, y: float) -> list[float]:
        return []

    def restrict(self) -> "RestrictedMechanism":
        return restrict_continuous_mechanism(self, self.n)


@dataclass(frozen=True, eq=False)
class RestrictedMechanism:
    """A continuous-input mechanism evaluated only at the points of U_N."""

    n: int
    base: Any
    rows: tuple

    @property
    def inputs(self) -> np.ndarray:
        return grid_points(self.n)

    def lift(self) -> NStepMechanism:
        if isinstance(self.base, NStepMechanism) and self.base.n == self.n:
            return self.base
        if all(isinstance(r, DiscreteDist) for r in self.rows):
            support = self.rows[0].support
            return NStepMechanism(self.n, Channel(self.inputs, support, np.array([r.probs for r in self.rows])))
        return NStepMechanism(self.n, self.base)


def nstep_channel(channel: Channel, n: int) -> NStepMechanism:
    if not same_support(channel.inputs, grid_points(n)):
        raise SupportMismatch(f"channel inputs are not U_{n}")
    return NStepMechanism(n, channel)


def restrict_continuous_mechanism(mechanism, n: int) -> RestrictedMechanism:
    if n < 1:
        raise InvalidN(f"N must be a positive integer, got {n!r}")
    rows = []
    for x in grid_points(n):
        try:
            out = mechanism(float(x))
        except Exception as exc:
            raise EvaluationFailure(f"mechanism failed at x={x}: {exc}") from exc
        if not isinstance(out, (HybridMeasure, DiscreteDist)):
            raise EvaluationFailure(f"mechanism returned {type(out).__name__} at x={x}")
        rows.append(out)
    return RestrictedMechanism(n, mechanism, tuple(rows))


def restricted_laplace(eps, n: int) -> RestrictedMechanism:
    return restrict_continuous_mechanism(TruncatedLaplace(eps), n)


# --------------------------------------------------------------------------
# N-step losses
# --------------------------------------------------------------------------

def nstep_loss(loss: "LossFunction", n: int) -> "LossFunction":
    """l_N(w, x) = l(w, floor(N x)/N), with x = 1 using the cell of (N-1)/N.

    The result stores one value per (guess, grid point); the last column
    repeats the previous one.
    """
    if n < 1:
        raise InvalidN(f"N must be a positive integer, got {n!r}")
    loss = loss.bind(grid_points(n))
    cells = grid_points(n)[:-1]
    table = np.empty((len(loss.guesses), n + 1))
    table[:, :n] = loss.values(cells)
    table[:, n] = table[:, n - 1]
    table.setflags(write=False)
    return replace(loss, name=f"{loss.name}@{n}", kernel=None, table=table, grid_n=n, monotone=None)
