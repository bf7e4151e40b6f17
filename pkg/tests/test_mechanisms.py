import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpopt.errors import InvalidEpsilon, InvalidN, InvalidT, OutOfRange
from dpopt.mechanisms import (EpsilonParams, TruncatedLaplace, continuous_dp_tightness,
                              geometric_channel, geometric_step_ratio, hybrid_max_divergence,
                              laplace_batch_masses, t_pixelated_laplace, truncated_laplace, verify_dp)
from dpopt.prob import constant_channel, grid_points

eps_st = st.floats(0.05, 6.0)
n_st = st.integers(1, 24)


def test_epsilon_validation():
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(InvalidEpsilon):
            geometric_channel(bad, 2)
    assert EpsilonParams(2.0).alpha == pytest.approx(math.exp(-2.0))
    with pytest.raises(InvalidN):
        geometric_channel(1.0, 0)


@settings(max_examples=50, deadline=None)
@given(eps_st, n_st)
def test_geometric_rows_stochastic_and_tight(eps, n):
    g = geometric_channel(eps, n)
    np.testing.assert_allclose(g.matrix.sum(axis=1), 1.0, atol=1e-12)
    res = verify_dp(g, eps)
    assert res.holds
    assert abs(res.tightness - eps) <= 1e-9 * max(1.0, eps)


def test_geometric_step_ratio():
    g = geometric_channel(4 * math.log(2), 4)
    assert geometric_step_ratio(g) == pytest.approx(0.5, rel=1e-12)


def test_geometric_fails_tighter_epsilon():
    assert not verify_dp(geometric_channel(1.0, 4), 0.9).holds


def test_geometric_n1_entries():
    a = math.exp(-1.0)
    g = geometric_channel(1.0, 1)
    np.testing.assert_allclose(g.matrix, [[1 / (1 + a), a / (1 + a)], [a / (1 + a), 1 / (1 + a)]], atol=1e-15)


def test_constant_channel_is_private_for_every_eps():
    ch = constant_channel(grid_points(4), [0, 1])
    assert verify_dp(ch, 1e-6).holds


def test_truncated_laplace_atoms_and_mass():
    m = truncated_laplace(2.0, 0.25)
    assert m.atom_weight(0.0) == pytest.approx(0.5 * math.exp(-0.5), abs=1e-15)
    assert m.atom_weight(1.0) == pytest.approx(0.5 * math.exp(-1.5), abs=1e-15)
    assert m.total_mass() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(OutOfRange):
        truncated_laplace(1.0, 1.5)


def test_truncated_laplace_at_endpoint_has_half_atom():
    m = truncated_laplace(1.0, 0.0)
    assert m.atom_weight(0.0) == pytest.approx(0.5, abs=1e-15)
    assert m.total_mass() == pytest.approx(1.0, abs=1e-12)


def test_hybrid_divergence_between_laplace_outputs():
    eps = 1.5
    for x1, x2 in ((0.0, 1.0), (0.2, 0.3), (0.5, 0.9)):
        d = hybrid_max_divergence(truncated_laplace(eps, x1), truncated_laplace(eps, x2))
        assert d == pytest.approx(eps * abs(x1 - x2), rel=1e-9)


def test_continuous_dp_tightness_close_to_eps():
    assert continuous_dp_tightness(1.0, n_pairs=101, n_y=101) <= 1.0 + 1e-9


def test_batch_masses_plus_atoms_sum_to_one():
    edges = np.linspace(0, 1, 9)
    xs = grid_points(4)
    m = laplace_batch_masses(1.0, xs, edges)
    assert m.shape == (5, 8)
    atoms = TruncatedLaplace(1.0).atom_weights(xs).sum(axis=1)
    np.testing.assert_allclose(m.sum(axis=1) + atoms, 1.0, atol=1e-12)


def test_t_pixelated_laplace_shape_and_dp():
    ch = t_pixelated_laplace(1.0, 2, 8)
    assert ch.shape == (3, 9)
    assert np.all(ch.matrix[:, -1] == 0.0)
    assert verify_dp(ch, 1.0).holds
    with pytest.raises(InvalidT):
        t_pixelated_laplace(1.0, 2, 0)


def test_t_pixelated_laplace_against_numeric_integration():
    from scipy import integrate
    eps, n, t = 1.3, 2, 4
    ch = t_pixelated_laplace(eps, n, t)
    for k, x in enumerate(grid_points(n)):
        for j in range(t):
            lo, hi = j / t, (j + 1) / t
            mass = integrate.quad(lambda y: 0.5 * eps * math.exp(-eps * abs(y - x)), lo, hi, points=[x])[0]
            if j == 0:
                mass += 0.5 * math.exp(-eps * x)
            if j == t - 1:
                mass += 0.5 * math.exp(-eps * (1 - x))
            assert ch.matrix[k, j] == pytest.approx(mass, abs=1e-12)


def test_mechanism_restricted_rows_check_dp():
    from dpopt.pixelate import restrict_continuous_mechanism
    r = restrict_continuous_mechanism(TruncatedLaplace(1.0), 4)
    res = verify_dp(r, 1.0)
    assert res.holds and res.tightness == pytest.approx(1.0, rel=1e-9)
