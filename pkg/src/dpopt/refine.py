"""Refinement between channels and hypers, and the Kantorovich distance.

C is refined by C' (C [= C') when C' = C R for some row-stochastic R, i.e.
C' is a post-processing of C. Three ways of certifying or measuring it live
here: the post-processing LP, a convex-hull test on uniform-prior
posteriors, and earth moves between hypers priced by the 1-Wasserstein
distance between posteriors on [0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, InvalidWitness, LinearDependence, SolverFailure
from .lp import FEAS_TOL, find_feasible, solve_lp
from .mechanisms import as_eps, geometric_channel, t_pixelated_laplace
from .prob import (TOL_SUM, Channel, DiscreteDist, Hyper, Joint, hyper_of, hyper_with_columns,
                   push_joint, same_support, total_variation, uniform)

RANK_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """flows[i, j] moves outer mass from sources[i] to sinks[j] (inners on ``support``)."""

    support: np.ndarray
    sources: np.ndarray
    sinks: np.ndarray
    flows: np.ndarray

    def __post_init__(self):
        if self.flows.shape != (len(self.sources), len(self.sinks)):
            raise InvalidWitness("flow matrix does not match sources x sinks")

    def cost(self) -> float:
        costs = ground_distance_matrix(self.sources, self.sinks, self.support)
        return math.fsum((self.flows * costs).ravel())


@dataclass(frozen=True, eq=False)
class RefinementWitness:
    """Evidence that the first channel/hyper is refined by the second.

    ``post_processor`` is R with D R = D' (kind "post_processor");
    ``hull_coefficients[j]`` writes the j-th posterior of the second channel
    as a convex combination of the first channel's posteriors (kind
    "convex_hull").
    """

    kind: str
    post_processor: Optional[np.ndarray] = None
    hull_coefficients: Optional[np.ndarray] = None
    source: Optional[Joint] = None
    target: Optional[Joint] = None
    meta: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# ground metric
# --------------------------------------------------------------------------

def ground_distance(d1: DiscreteDist, d2: DiscreteDist) -> float:
    """1-Wasserstein distance on the line: the integral of |F1 - F2|."""
    pts = np.union1d(d1.support, d2.support)
    f1 = np.zeros(len(pts))
    f2 = np.zeros(len(pts))
    np.add.at(f1, np.searchsorted(pts, d1.support), d1.probs)
    np.add.at(f2, np.searchsorted(pts, d2.support), d2.probs)
    gaps = np.diff(pts)
    cdf_gap = np.abs(np.cumsum(f1) - np.cumsum(f2))[:-1]
    return math.fsum(gaps * cdf_gap)


def ground_distance_matrix(P, Q, support) -> np.ndarray:
    """Pairwise 1-Wasserstein distances between the rows of P and Q (inners on ``support``)."""
    order = np.argsort(support)
    gaps = np.diff(np.asarray(support, dtype=float)[order])
    cp = np.cumsum(np.asarray(P)[:, order], axis=1)[:, :-1]
    cq = np.cumsum(np.asarray(Q)[:, order], axis=1)[:, :-1]
    return np.abs(cp[:, None, :] - cq[None, :, :]) @ gaps


# --------------------------------------------------------------------------
# post-processing LP
# --------------------------------------------------------------------------

def find_postprocessor(joint: Joint, joint2: Joint, feas_tol: float = FEAS_TOL) -> Optional[RefinementWitness]:
    """Row-stochastic R >= 0 with joint.matrix @ R = joint2.matrix, or None.

    Rows are divided by the prior (inputs with zero prior are dropped), so
    the constraints read C R = C' in channel form.
    """
    D, D2 = joint.matrix, joint2.matrix
    if D.shape[0] != D2.shape[0] or not same_support(joint.inputs, joint2.inputs):
        raise DimensionMismatch("joints must share the input support")
    p1 = D.sum(axis=1)
    p2 = D2.sum(axis=1)
    if np.any(np.abs(p1 - p2) > TOL_SUM):
        return None
    live = p1 > 0.0
    C = D[live] / p1[live, None]
    C2 = D2[live] / p2[live, None]
    nx, ny = C.shape
    ny2 = C2.shape[1]
    # unknown R flattened row-major: R[y, y'] at y * ny2 + y'
    nvar = ny * ny2
    rows_eq = []
    for x in range(nx):
        block = np.zeros((ny2, nvar))
        for y in range(ny):
            block[:, y * ny2:(y + 1) * ny2] = C[x, y] * np.eye(ny2)
        rows_eq.append(block)
    stoch = np.zeros((ny, nvar))
    for y in range(ny):
        stoch[y, y * ny2:(y + 1) * ny2] = 1.0
    A = np.vstack(rows_eq + [stoch])
    b = np.concatenate([C2.ravel(), np.ones(ny)])
    sol = find_feasible(A, b, feas_tol)
    if sol is None:
        return None
    R = np.maximum(sol.reshape(ny, ny2), 0.0)
    sums = R.sum(axis=1, keepdims=True)
    if np.any(sums <= 0.0):
        return None
    R /= sums
    if np.abs(D @ R - D2).max() > feas_tol:
        return None
    return RefinementWitness("post_processor", post_processor=R, source=joint, target=joint2)


# --------------------------------------------------------------------------
# convex-hull criterion
# --------------------------------------------------------------------------

def posterior_rank_ok(hyper: Hyper, rank_tol: float = RANK_TOL) -> bool:
    s = np.linalg.svd(hyper.inners, compute_uv=False)
    return bool(s.size and s[-1] > rank_tol * s[0] and hyper.inners.shape[0] <= hyper.inners.shape[1])


def hull_refinement_check(channel: Channel, channel2: Channel,
                          feas_tol: float = FEAS_TOL) -> Optional[RefinementWitness]:
    """Hull test under the uniform prior.

    Needs the posteriors of ``channel`` to be linearly independent (raises
    LinearDependence otherwise). Each posterior of ``channel2`` must then be
    a nonnegative combination of them; the coefficients are unique.
    """
    if not same_support(channel.inputs, channel2.inputs):
        raise DimensionMismatch("channels must share the input support")
    prior = uniform(channel.inputs)
    h1 = hyper_of(push_joint(prior, channel))
    h2 = hyper_of(push_joint(prior, channel2))
    if not posterior_rank_ok(h1):
        raise LinearDependence("posteriors of the first channel are linearly dependent")
    P = h1.inners.T
    coefs = np.empty((len(h2), len(h1)))
    for j, q in enumerate(h2.inners):
        h, *_ = np.linalg.lstsq(P, q, rcond=None)
        if np.abs(P @ h - q).max() > feas_tol or h.min() < -feas_tol or abs(h.sum() - 1.0) > feas_tol:
            return None
        coefs[j] = h
    coefs = np.maximum(coefs, 0.0)
    coefs /= coefs.sum(axis=1, keepdims=True)
    return RefinementWitness("convex_hull", hull_coefficients=coefs,
                             meta={"source_hyper": h1, "target_hyper": h2})


# --------------------------------------------------------------------------
# earth moves and the Kantorovich distance
# --------------------------------------------------------------------------

def _same_hyper(a: Hyper, b: Hyper) -> bool:
    if len(a) != len(b) or not same_support(a.support, b.support):
        return False
    return all(total_variation(x, y) <= 1e-9 for x, y in zip(a.inners, b.inners)) and \
        np.allclose(a.outers, b.outers, atol=1e-9, rtol=0.0)


def earth_move_of_refinement(witness: RefinementWitness, hyper: Hyper, hyper2: Hyper) -> TransportPlan:
    """Earth move from ``hyper`` to ``hyper2`` read off a refinement witness."""
    if witness.kind == "convex_hull":
        H = witness.hull_coefficients
        if H is None or H.shape != (len(hyper2), len(hyper)):
            raise InvalidWitness("hull coefficients do not match the hypers")
        flows = (H * hyper2.outers[:, None]).T
    elif witness.kind == "post_processor":
        if witness.source is None or witness.target is None or witness.post_processor is None:
            raise InvalidWitness("post-processor witness lacks its joints")
        src, own1 = hyper_with_columns(witness.source)
        dst, own2 = hyper_with_columns(witness.target)
        if not (_same_hyper(src, hyper) and _same_hyper(dst, hyper2)):
            raise InvalidWitness("witness joints do not produce the given hypers")
        py = witness.source.output_marginal
        flows = np.zeros((len(hyper), len(hyper2)))
        R = witness.post_processor
        for y in range(R.shape[0]):
            if own1[y] < 0:
                continue
            for y2 in range(R.shape[1]):
                if own2[y2] >= 0 and R[y, y2] > 0.0:
                    flows[own1[y], own2[y2]] += py[y] * R[y, y2]
    else:
        raise InvalidWitness(f"cannot build an earth move from a {witness.kind!r} witness")
    if np.abs(flows.sum(axis=1) - hyper.outers).max() > 1e-7 or \
            np.abs(flows.sum(axis=0) - hyper2.outers).max() > 1e-7:
        raise InvalidWitness("witness does not move the first hyper onto the second")
    return TransportPlan(hyper.support, hyper.inners, hyper2.inners, flows)


def kantorovich_plan(hyper: Hyper, hyper2: Hyper):
    """Optimal transport between two finite hypers; returns (value, plan)."""
    if not same_support(hyper.support, hyper2.support):
        raise DimensionMismatch("hypers must live on the same X")
    cost = ground_distance_matrix(hyper.inners, hyper2.inners, hyper.support)
    m, k = cost.shape
    A = np.zeros((m + k, m * k))
    for i in range(m):
        A[i, i * k:(i + 1) * k] = 1.0
    for j in range(k):
        A[m + j, j::k] = 1.0
    b = np.concatenate([hyper.outers, hyper2.outers])
    res = solve_lp(cost.ravel(), A, b)
    if not res.success or not res.certified:
        raise SolverFailure(f"transport LP ended as {res.status} (certified={res.certified})")
    flows = res.x.reshape(m, k)
    return max(res.fun, 0.0), TransportPlan(hyper.support, hyper.inners, hyper2.inners, flows)


def kantorovich_hyper(hyper: Hyper, hyper2: Hyper) -> float:
    return kantorovich_plan(hyper, hyper2)[0]


def gap_bound(eps, kappa: float, n: int) -> float:
    """3 kappa / (N (1 - e^-eps)^2)."""
    e = as_eps(eps)
    return 3.0 * kappa / (n * (-math.expm1(-e)) ** 2)


# --------------------------------------------------------------------------
# the Geometric / pixelated-Laplace chain
# --------------------------------------------------------------------------

@dataclass
class ChainReport:
    eps: float
    n: int
    t_list: tuple
    links: list  # (name, refined: bool)
    distance_to_geo: list  # K(Geo, T-Lap) per T
    successive: list  # K between consecutive T-Laps, coarse to fine
    failing_link: Optional[str] = None

    @property
    def all_refined(self) -> bool:
        return all(ok for _, ok in self.links)

    @property
    def distance_to_geo_decreasing(self) -> bool:
        d = self.distance_to_geo
        return all(b <= a + 1e-12 for a, b in zip(d[:-1], d[1:]))

    @property
    def successive_decreasing(self) -> bool:
        d = self.successive
        return all(b <= a + 1e-12 for a, b in zip(d[:-1], d[1:]))


def refinement_chain_check(eps, n: int, t_list) -> ChainReport:
    """Check Geo_N [= T_k-Lap [= ... [= T_1-Lap for increasing T_1 | T_2 | ...

    Every link is decided with the post-processing LP under the uniform
    prior. Also records the Kantorovich distance from Geo_N to each T-Lap
    and between consecutive T-Laps.
    """
    e = as_eps(eps)
    t_list = tuple(int(t) for t in t_list)
    for a, b in zip(t_list[:-1], t_list[1:]):
        if b <= a or b % a:
            raise ValueError(f"T values must increase and each divide the next, got {t_list}")
    prior = uniform(geometric_channel(e, n).inputs)
    geo = push_joint(prior, geometric_channel(e, n))
    laps = [push_joint(prior, t_pixelated_laplace(e, n, t)) for t in t_list]
    report = ChainReport(e, n, t_list, [], [], [])
    hgeo = hyper_of(geo)
    for t, lap in zip(t_list, laps):
        name = f"Geo_{n} [= {t}-Lap"
        ok = find_postprocessor(geo, lap) is not None
        report.links.append((name, ok))
        if not ok and report.failing_link is None:
            report.failing_link = name
        report.distance_to_geo.append(kantorovich_hyper(hgeo, hyper_of(lap)))
    for (t1, l1), (t2, l2) in zip(zip(t_list, laps), zip(t_list[1:], laps[1:])):
        name = f"{t2}-Lap [= {t1}-Lap"
        ok = find_postprocessor(l2, l1) is not None
        report.links.append((name, ok))
        if not ok and report.failing_link is None:
            report.failing_link = name
        report.successive.append(kantorovich_hyper(hyper_of(l1), hyper_of(l2)))
    return report
