"""Experiment drivers: random epsilon-DP channels, discrete optimality of the
Geometric mechanism, the Geometric / pixelated-Laplace utility gap as N
grows, and the inequality chain that sandwiches an arbitrary mechanism's
loss against the truncated Laplace's.
"""
from __future__ import annotations

import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import ChainViolation, IllegalLoss, InvalidN, InvalidT, SamplerStall
from .loss import (LossFunction, builtin_len, check_monotone, expected_loss_continuous,
                   expected_loss_discrete, expected_loss_restricted)
from .mechanisms import (TruncatedLaplace, as_eps, geometric_channel, t_pixelated_laplace,
                         verify_dp)
from .pixelate import (NStepMechanism, PiecewisePrior, nstep_channel, nstep_loss, pixelate_prior,
                       restrict_continuous_mechanism, uniform_prior)
from .prob import Channel, DiscreteDist, grid_points
from .refine import gap_bound

ORDER_TOL = 1e-9
CSV_HEADER = "N,T,eps,kappa,loss_geo,loss_tlap,loss_lap_exact,gap,bound,dp_tightness"

# sampler: clipping rounds before falling back to the half-width clip
_SAMPLER_ROUNDS = 25


@dataclass
class ExperimentConfig:
    epsilon: float = 1.0
    prior: PiecewisePrior = field(default_factory=uniform_prior)
    loss: LossFunction = field(default_factory=builtin_len)
    n_list: tuple = (2, 4, 8, 16, 32, 64)
    t_factor: int = 8
    samples: int = 100
    seed: int = 0
    output: Optional[str] = None

    def __post_init__(self):
        self.epsilon = as_eps(self.epsilon)
        self.n_list = tuple(int(n) for n in self.n_list)
        if not self.n_list or any(n < 1 for n in self.n_list):
            raise InvalidN(f"N list must be nonempty positive integers, got {self.n_list}")
        if list(self.n_list) != sorted(set(self.n_list)):
            raise InvalidN(f"N list must be strictly ascending, got {self.n_list}")
        if int(self.t_factor) < 1:
            raise InvalidT(f"T factor must be at least 1, got {self.t_factor}")
        self.t_factor = int(self.t_factor)
        if int(self.samples) < 0:
            raise ValueError("samples must be nonnegative")
        self.samples = int(self.samples)
        self.seed = int(self.seed)


def _workers() -> int:
    raw = os.environ.get("DPOPT_THREADS", "").strip()
    cap = int(raw) if raw.isdigit() and int(raw) > 0 else (os.cpu_count() or 1)
    return max(1, cap)


def _map_ordered(fn, items):
    """Apply fn to each item, possibly in threads; results come back in input order."""
    items = list(items)
    workers = min(_workers(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# random epsilon-DP channels
# --------------------------------------------------------------------------

def _normalize_logs(logc: np.ndarray) -> np.ndarray:
    top = logc.max(axis=1, keepdims=True)
    w = np.exp(logc - top)
    return w / w.sum(axis=1, keepdims=True)


def sample_dp_channel(eps, n: int, seed) -> Channel:
    """Random channel on inputs U_N that is eps-DP.

    Column count is uniform on [N+1, 3N+3]; each column is a random walk in
    log space. Adjacent rows are clipped to within eps/N of each other in
    log space and renormalized until the DP check passes. If that does not
    settle, a clip at eps/(2N) is used, which passes by construction since
    renormalizing can move a log-ratio by at most the clip width.
    """
    e = as_eps(eps)
    if n < 1:
        raise InvalidN(f"N must be a positive integer, got {n!r}")
    rng = np.random.default_rng(seed if np.ndim(seed) else [int(seed), n])
    ncol = int(rng.integers(n + 1, 3 * n + 4))
    step = e / n
    logc = np.empty((n + 1, ncol))
    logc[0] = rng.normal(0.0, 2.0, ncol)
    drift = rng.uniform(-1.0, 1.0, ncol) * step
    logc[1:] = logc[0] + np.cumsum(drift + rng.uniform(-1.5, 1.5, (n, ncol)) * step, axis=0)
    pts = grid_points(n)
    work = logc.copy()
    for _ in range(_SAMPLER_ROUNDS):
        _kernels.clip_adjacent(work, step)
        rows = _normalize_logs(work)
        ch = Channel(pts, np.linspace(0.0, 1.0, ncol), rows)
        if verify_dp(ch, e).holds:
            return ch
        work = np.log(rows)
    work = logc.copy()
    _kernels.clip_adjacent(work, 0.5 * step)
    ch = Channel(pts, np.linspace(0.0, 1.0, ncol), _normalize_logs(work))
    if verify_dp(ch, e).holds:
        return ch
    raise SamplerStall(f"no eps-DP channel after {_SAMPLER_ROUNDS} clipping rounds")


# --------------------------------------------------------------------------
# discrete optimality of the Geometric mechanism
# --------------------------------------------------------------------------

@dataclass
class OptimalityReport:
    eps: float
    n: int
    loss_name: str
    loss_geo: float
    samples: int
    margins: list
    violations: list  # (sample index, margin, channel)

    @property
    def min_margin(self) -> float:
        return min(self.margins) if self.margins else math.inf

    @property
    def ok(self) -> bool:
        return not self.violations


def _as_grid_prior(prior, n: int) -> DiscreteDist:
    if isinstance(prior, DiscreteDist):
        return prior
    return pixelate_prior(prior, n)


def discrete_optimality_trial(eps, n: int, prior, loss: LossFunction, samples: int, seed: int,
                              competitors: Sequence[Channel] = ()) -> OptimalityReport:
    """Compare Geo_N against sampled eps-DP channels under prior pi_N and loss l on U_N.

    Violations (a competitor strictly beating Geo_N by more than 1e-9) are
    collected, not raised.
    """
    e = as_eps(eps)
    pts = grid_points(n)
    loss = loss.bind(pts)
    if not check_monotone(loss, pts):
        raise IllegalLoss(f"loss {loss.name!r} is not monotone on U_{n}")
    pi_n = _as_grid_prior(prior, n)
    base = expected_loss_discrete(pi_n, geometric_channel(e, n), loss)

    def trial(i):
        ch = competitors[i] if i < len(competitors) else \
            sample_dp_channel(e, n, [seed, n, i - len(competitors)])
        return ch, expected_loss_discrete(pi_n, ch, loss)

    results = _map_ordered(trial, range(len(competitors) + samples))
    margins, violations = [], []
    for i, (ch, val) in enumerate(results):
        margin = val - base
        margins.append(margin)
        if margin < -ORDER_TOL:
            violations.append((i, margin, ch))
    return OptimalityReport(e, n, loss.name, base, len(results), margins, violations)


# --------------------------------------------------------------------------
# convergence of the pixelated Laplace to the Geometric
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    t: int
    eps: float
    kappa: float
    loss_geo: float
    loss_tlap: float
    loss_lap_exact: float
    gap: float
    bound: float
    dp_tightness: float

    def csv(self) -> str:
        vals = [self.n, self.t, self.eps, self.kappa, self.loss_geo, self.loss_tlap,
                self.loss_lap_exact, self.gap, self.bound, self.dp_tightness]
        return ",".join(v if isinstance(v, str) else (str(v) if isinstance(v, int) else f"{v:.12g}")
                        for v in vals)


@dataclass
class ConvergenceResult:
    rows: list
    violations: list  # human-readable strings
    gap_nonincreasing: bool

    @property
    def ok(self) -> bool:
        return not self.violations

    def csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for r in self.rows:
            buf.write(r.csv() + "\n")
        return buf.getvalue()


def convergence_row(eps: float, prior, loss: LossFunction, n: int, t: int) -> ConvergenceRow:
    pts = grid_points(n)
    bound_loss = loss.bind(pts)
    if bound_loss.kappa is None:
        raise IllegalLoss(f"loss {loss.name!r} has no Lipschitz constant")
    pi_n = _as_grid_prior(prior, n)
    geo = geometric_channel(eps, n)
    tlap = t_pixelated_laplace(eps, n, t)
    lg = expected_loss_discrete(pi_n, geo, bound_loss)
    lt = expected_loss_discrete(pi_n, tlap, bound_loss)
    lap = expected_loss_restricted(pi_n, restrict_continuous_mechanism(TruncatedLaplace(eps), n), bound_loss)
    return ConvergenceRow(n, t, eps, float(bound_loss.kappa), lg, lt, lap, lt - lg,
                          gap_bound(eps, bound_loss.kappa, n), verify_dp(geo, eps).tightness)


def run_convergence(config: ExperimentConfig) -> ConvergenceResult:
    """One row per N with T = t_factor * N; checks the gap bound and the loss ordering."""
    e = config.epsilon
    rows = _map_ordered(
        lambda n: convergence_row(e, config.prior, config.loss, n, config.t_factor * n), config.n_list)
    violations = []
    for r in rows:
        if not (-ORDER_TOL <= r.gap <= r.bound + ORDER_TOL):
            violations.append(f"N={r.n}: gap {r.gap:.6g} outside [0, {r.bound:.6g}]")
        if r.loss_geo > r.loss_lap_exact + ORDER_TOL:
            violations.append(f"N={r.n}: Geometric loss exceeds the Laplace loss")
        if r.loss_lap_exact > r.loss_tlap + ORDER_TOL:
            violations.append(f"N={r.n}: Laplace loss exceeds the pixelated Laplace loss")
        if abs(r.dp_tightness - e) > 1e-9:
            violations.append(f"N={r.n}: Geometric DP tightness {r.dp_tightness!r} differs from eps")
    gaps = [r.gap for r in rows]
    nonincreasing = all(b <= a + ORDER_TOL for a, b in zip(gaps[:-1], gaps[1:]))
    if not nonincreasing:
        violations.append("gap increases somewhere along the N list")
    result = ConvergenceResult(rows, violations, nonincreasing)
    if config.output:
        with open(config.output, "w", newline="\n") as fh:
            fh.write(result.csv())
    return result


# --------------------------------------------------------------------------
# inequality chain for an arbitrary competitor
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainRow:
    """Chain terms at one N for one competitor K (top to bottom, each >= the next).

    l1 = e^(eps/N) Loss(pi, K, l_N)
    l2 = Loss(pi_N, K restricted to U_N, l_N)
    l3 = Loss(pi_N, Geo_N, l_N)
    l4 = Loss(pi_N, T-Lap, l_N) - c kappa / N
    l5 = Loss(pi_N, Lap restricted to U_N, l_N) - c kappa / N
    l6 = e^(-eps/N) Loss(pi, Lap, l_N) - c kappa / N
    """

    competitor: str
    n: int
    l1: float
    l2: float
    l3: float
    l4: float
    l5: float
    l6: float
    lower_bound: float  # implied bound on Loss(pi,K,l_N) - Loss(pi,Lap,l_N)
    observed: float  # the actual difference

    def links(self):
        names = ("sandwich(K)", "discrete optimality", "gap bound", "post-processing", "sandwich(Lap)")
        vals = (self.l1, self.l2, self.l3, self.l4, self.l5, self.l6)
        return [(names[i], vals[i], vals[i + 1]) for i in range(5)]


@dataclass
class DemoReport:
    eps: float
    n_list: tuple
    rows: list
    lap_losses: dict  # N -> Loss(pi, Lap, l_N)

    def bound_trend(self, competitor: str) -> list:
        return [r.lower_bound for r in self.rows if r.competitor == competitor]


def main_theorem_demo(eps, prior: PiecewisePrior, loss: LossFunction, n_list, seed: int,
                      samples: int = 3, t_factor: int = 8, quad_tol: float = 1e-8) -> DemoReport:
    """Walk the chain Loss(pi, K) >= ... >= Loss(pi, Lap) - corrections at every N.

    Competitors are the truncated Laplace itself and ``samples`` random
    eps-DP channels on U_M lifted to N-step mechanisms, with M the least
    common multiple of the N list (so each U_N is a subset of U_M). The demo
    can only find counterexamples; a clean run does not prove optimality
    over all mechanisms. Raises ChainViolation on the first broken link.
    """
    e = as_eps(eps)
    n_list = tuple(int(n) for n in n_list)
    if loss.kappa is None:
        raise IllegalLoss("the chain needs a Lipschitz loss (kappa set)")
    big = math.lcm(*n_list)
    lap = TruncatedLaplace(e)
    competitors = [("laplace", lap)]
    for i in range(samples):
        competitors.append((f"sample{i}", nstep_channel(sample_dp_channel(e, big, [seed, big, i]), big)))

    def per_n(n):
        pts = grid_points(n)
        ln = nstep_loss(loss.bind(pts), n)
        pi_n = pixelate_prior(prior, n)
        corr = gap_bound(e, loss.kappa, n)
        l3 = expected_loss_discrete(pi_n, geometric_channel(e, n), ln)
        l4 = expected_loss_discrete(pi_n, t_pixelated_laplace(e, n, t_factor * n), ln) - corr
        l5 = expected_loss_restricted(pi_n, restrict_continuous_mechanism(lap, n), ln) - corr
        lap_loss = expected_loss_continuous(prior, lap, ln, quad_tol=quad_tol)
        l6 = math.exp(-e / n) * lap_loss - corr
        out = []
        for name, k in competitors:
            if isinstance(k, NStepMechanism):
                k_loss = expected_loss_continuous(prior, k, ln)
                rows = k.base.matrix[k.cells(pts)]
                l2 = expected_loss_discrete(pi_n, Channel(pts, k.base.outputs, rows), ln)
            else:
                k_loss = lap_loss
                l2 = l5 + corr
            l1 = math.exp(e / n) * k_loss
            lower = math.exp(-2 * e / n) * lap_loss - math.exp(-e / n) * corr - lap_loss
            out.append(ChainRow(name, n, l1, l2, l3, l4, l5, l6, lower, k_loss - lap_loss))
        return lap_loss, out

    results = _map_ordered(per_n, n_list)
    rows, lap_losses = [], {}
    for n, (lap_loss, out) in zip(n_list, results):
        lap_losses[n] = lap_loss
        rows.extend(out)
    for row in rows:
        for link, upper, lower in row.links():
            # links through quadrature get the quadrature tolerance on top
            slack = ORDER_TOL + (2 * quad_tol if link.startswith("sandwich") else 0.0)
            if upper < lower - slack:
                raise ChainViolation(link, f"competitor {row.competitor}, N={row.n}: "
                                           f"{upper:.12g} < {lower:.12g}")
    return DemoReport(e, n_list, rows, lap_losses)
