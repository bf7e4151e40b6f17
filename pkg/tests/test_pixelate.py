import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpopt.errors import EvaluationFailure, NonStochasticRow, SupportMismatch
from dpopt.loss import builtin_len, expected_loss_continuous, expected_loss_discrete
from dpopt.mechanisms import TruncatedLaplace, geometric_channel
from dpopt.pixelate import (PiecewisePrior, PolyPiece, atom_prior, builtin_prior, linear_prior,
                            nstep_channel, nstep_loss, pixelate_prior, restrict_continuous_mechanism,
                            step_prior, uniform_prior)
from dpopt.prob import Channel, grid_points


def test_uniform_n2():
    assert pixelate_prior(uniform_prior(), 2).probs.tolist() == [0.5, 0.5, 0.0]


def test_atom_at_one_goes_to_last_cell():
    assert pixelate_prior(atom_prior(1.0), 4).probs.tolist() == [0, 0, 0, 1.0, 0]


def test_linear_prior_cells_exact():
    p = pixelate_prior(linear_prior(), 4)
    np.testing.assert_allclose(p.probs, [1 / 16, 3 / 16, 5 / 16, 7 / 16, 0.0], atol=1e-15)


def test_step_prior_cells():
    p = pixelate_prior(step_prior(), 4)
    np.testing.assert_allclose(p.probs, [3 / 8, 3 / 8, 1 / 8, 1 / 8, 0.0], atol=1e-15)


def test_prior_validation():
    with pytest.raises(SupportMismatch):
        PiecewisePrior((PolyPiece(0.0, 0.5, (2.0,)),))
    with pytest.raises(NonStochasticRow):
        PiecewisePrior((PolyPiece(0.0, 1.0, (2.0,)),))
    # integrates to 1 but dips below zero near x = 1
    with pytest.raises(NonStochasticRow):
        PiecewisePrior((PolyPiece(0.0, 1.0, (3.0, -4.0)),))
    with pytest.raises(ValueError):
        builtin_prior("cauchy")


def test_prior_json_round_trip():
    doc = {"pieces": [{"from": 0, "to": 0.5, "coeffs": [1.0]}, {"from": 0.5, "to": 1, "coeffs": [0.5]}],
           "atoms": [[1.0, 0.25]]}
    p = PiecewisePrior.from_json(doc)
    assert p.mass(0, 1, closed=True) == pytest.approx(1.0)
    assert PiecewisePrior.from_json(p.to_json()).to_json() == p.to_json()


@st.composite
def piecewise_linear_priors(draw):
    k = draw(st.integers(1, 4))
    cuts = sorted(set(draw(st.lists(st.floats(0.05, 0.95), min_size=k - 1, max_size=k - 1))))
    edges = [0.0] + cuts + [1.0]
    pieces, total = [], 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        c0 = draw(st.floats(0.1, 3.0))
        c1 = draw(st.floats(0.0, 2.0))
        pieces.append((a, b, c0, c1))
        total += c0 * (b - a) + c1 * (b * b - a * a) / 2
    return PiecewisePrior(tuple(PolyPiece(a, b, (c0 / total, c1 / total)) for a, b, c0, c1 in pieces))


@settings(max_examples=40, deadline=None)
@given(piecewise_linear_priors(), st.integers(1, 20))
def test_pixelation_preserves_mass_cellwise(prior, n):
    from scipy import integrate
    p = pixelate_prior(prior, n)
    assert math.fsum(p.probs) == pytest.approx(1.0, abs=1e-12)
    assert p.probs[-1] == 0.0
    k = n // 2
    exact = integrate.quad(lambda x: float(prior.density(x)), k / n, (k + 1) / n,
                           points=prior.breakpoints()[1:-1], epsabs=1e-14)[0]
    if k < n - 1 or n == 1:
        assert p.probs[k] == pytest.approx(exact, abs=1e-12)


def test_nstep_channel_matches_rows_on_grid():
    g = geometric_channel(1.0, 4)
    m = nstep_channel(g, 4)
    for k, x in enumerate(grid_points(4)[:-1]):
        assert m(x).probs.tolist() == g.matrix[k].tolist()
    assert m(1.0).probs.tolist() == g.matrix[3].tolist()
    assert m(0.3).probs.tolist() == g.matrix[1].tolist()
    with pytest.raises(SupportMismatch):
        nstep_channel(g, 8)


def test_nstep_loss_table():
    ln = nstep_loss(builtin_len(), 4)
    v = ln.values(np.array([0.0, 0.3, 0.99, 1.0]))
    # guess 0: cells 0, 1/4, 3/4, 3/4
    np.testing.assert_allclose(v[0], [0.0, 0.25, 0.75, 0.75])


def test_restrict_reports_failures():
    def broken(x):
        raise RuntimeError("boom")
    with pytest.raises(EvaluationFailure):
        restrict_continuous_mechanism(broken, 2)
    with pytest.raises(EvaluationFailure):
        restrict_continuous_mechanism(lambda x: 0.5, 2)


def test_restrict_then_lift_is_nstep():
    r = restrict_continuous_mechanism(TruncatedLaplace(1.0), 4)
    lifted = r.lift()
    assert lifted.n == 4
    assert lifted(0.3).atom_weight(0.0) == pytest.approx(r.rows[1].atom_weight(0.0))


@settings(max_examples=15, deadline=None)
@given(piecewise_linear_priors(), st.integers(2, 6), st.integers(0, 10_000))
def test_pixelated_loss_equals_lifted_loss(prior, n, seed):
    # discrete channel on U_N lifted to [0, 1] against the pixelated prior
    rng = np.random.default_rng(seed)
    rows = rng.dirichlet(np.ones(n + 2), size=n + 1)
    ch = Channel(grid_points(n), np.linspace(0, 1, n + 2), rows)
    ln = nstep_loss(builtin_len(), n)
    lhs = expected_loss_continuous(prior, nstep_channel(ch, n), ln)
    rhs = expected_loss_discrete(pixelate_prior(prior, n), ch, builtin_len())
    assert lhs == pytest.approx(rhs, abs=1e-9)
