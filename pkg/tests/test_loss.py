
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpopt.errors import EmptyGuessSet, IllegalLoss, NegativeEntry, QuadratureNonconvergence
from dpopt.loss import (LossFunction, builtin_bayes_risk, builtin_len, builtin_len2, check_lipschitz,
                        check_monotone, expected_loss_continuous, expected_loss_discrete,
                        expected_loss_restricted, expected_loss_via_hyper, laplace_loss_exact,
                        load_loss, optimal_guesses, reference_uniform, require_monotone, table_loss,
                        uncertainty, weight_loss_for_prior)
from dpopt.mechanisms import TruncatedLaplace, geometric_channel, t_pixelated_laplace
from dpopt.pixelate import (atom_prior, linear_prior, nstep_loss, pixelate_prior,
                            restrict_continuous_mechanism, uniform_prior)
from dpopt.prob import Channel, DiscreteDist, constant_channel, grid_points, uniform

# mpmath oracle (tests/_oracle.py): uniform prior, truncated Laplace eps = 1,
# guesses {0, 1}, loss |w - x|
LAPLACE_TWO_GUESS_EPS1 = 0.43040802086209973
# uniform pixelated prior on U_N, loss len with W = U_N, eps = 1
GEO_LOSS = {2: 0.18877033439907272, 4: 0.22235009788392561}
TLAP_LOSS = {(2, 16): 0.19470019576785122, (4, 32): 0.22311163633597298}


def test_uncertainty_picks_median_for_len():
    d = DiscreteDist([0, 0.5, 1], [0.2, 0.5, 0.3])
    val, guess = uncertainty(builtin_len(), d)
    assert guess == 0.5 and val == pytest.approx(0.2 * 0.5 + 0.3 * 0.5)


def test_uncertainty_ties_go_to_first_guess():
    d = DiscreteDist([0, 1], [0.5, 0.5])
    assert uncertainty(builtin_len(), d)[1] == 0.0


def test_len2_picks_mean_nearest_grid_point():
    d = DiscreteDist([0, 0.5, 1], [0.5, 0.0, 0.5])
    assert uncertainty(builtin_len2(), d)[1] == 0.5


def test_empty_guesses_and_negative_tables():
    with pytest.raises(EmptyGuessSet):
        builtin_len([])
    with pytest.raises(NegativeEntry):
        table_loss([[0.0, -1.0], [1.0, 0.0]])


def test_geometric_and_tlap_losses_match_oracle():
    for n in (2, 4):
        pi = pixelate_prior(uniform_prior(), n)
        assert expected_loss_discrete(pi, geometric_channel(1.0, n), builtin_len()) == \
            pytest.approx(GEO_LOSS[n], abs=1e-14)
    for (n, t), ref in TLAP_LOSS.items():
        pi = pixelate_prior(uniform_prior(), n)
        assert expected_loss_discrete(pi, t_pixelated_laplace(1.0, n, t), builtin_len()) == \
            pytest.approx(ref, abs=1e-13)


def test_constant_channel_loss_is_prior_uncertainty():
    pi = DiscreteDist(grid_points(4), [0.1, 0.2, 0.3, 0.25, 0.15])
    for loss in (builtin_len(), builtin_len2(), builtin_bayes_risk()):
        got = expected_loss_discrete(pi, constant_channel(pi.support, [0, 1, 2]), loss)
        assert got == pytest.approx(uncertainty(loss, pi)[0], abs=1e-15)


def test_identity_channel_has_zero_len_loss():
    pi = uniform(grid_points(3))
    ch = Channel(pi.support, pi.support, np.eye(4))
    assert expected_loss_discrete(pi, ch, builtin_len()) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_direct_and_hyper_routes_agree(n, ny, seed):
    rng = np.random.default_rng(seed)
    pi = DiscreteDist(grid_points(n), rng.dirichlet(np.ones(n + 1)))
    ch = Channel(pi.support, np.arange(ny, dtype=float), rng.dirichlet(np.ones(ny), size=n + 1))
    rows = rng.uniform(0, 1, (n + 1, n + 1))
    for loss in (builtin_len(), builtin_len2(), builtin_bayes_risk(), table_loss(rows, n)):
        assert abs(expected_loss_discrete(pi, ch, loss) - expected_loss_via_hyper(pi, ch, loss)) < 1e-12


def test_optimal_guesses_remap():
    pi = uniform(grid_points(2))
    g = optimal_guesses(pi, geometric_channel(10.0, 2), builtin_len())
    assert g.tolist() == [0.0, 0.5, 1.0]


def test_monotone_legality():
    pts = grid_points(4)
    assert check_monotone(builtin_len(), pts)
    assert check_monotone(builtin_len2(), pts)
    assert check_monotone(builtin_bayes_risk(), pts)
    bad = table_loss(np.eye(5), 4)  # rewards wrong guesses
    assert not check_monotone(bad, pts)
    with pytest.raises(IllegalLoss):
        require_monotone(bad, pts)


def test_lipschitz_check():
    pts = grid_points(8)
    assert check_lipschitz(builtin_len(), pts)
    assert check_lipschitz(builtin_len2(), pts)
    assert not check_lipschitz(builtin_len2(), pts, kappa=1.0)


def test_load_loss_references(tmp_path):
    assert load_loss("len").kappa == 1.0
    assert load_loss("len2").kappa == 2.0
    f = tmp_path / "t.json"
    f.write_text('{"rows": [[0, 1], [1, 0]], "n": 1, "kappa": 1}')
    t = load_loss(f"table:{f}")
    assert t.values(np.array([0.0, 1.0])).tolist() == [[0.0, 1.0], [1.0, 0.0]]
    with pytest.raises(ValueError):
        load_loss("hamming")


def test_laplace_continuous_matches_oracle():
    loss = builtin_len([0.0, 1.0])
    for method in ("auto", "quad"):
        got = expected_loss_continuous(uniform_prior(), TruncatedLaplace(1.0), loss, method=method)
        assert got == pytest.approx(LAPLACE_TWO_GUESS_EPS1, abs=1e-8)


def test_single_guess_at_the_atom_costs_nothing():
    # all prior mass at 0 and the only guess is 0: every output is answered with the truth
    got = expected_loss_continuous(atom_prior(0.0), TruncatedLaplace(1.0), builtin_len([0.0]))
    assert got == 0.0


def test_point_prior_with_far_guess():
    # prior at 1, single guess at 0: loss |0 - 1| whatever is observed
    got = expected_loss_continuous(atom_prior(1.0), TruncatedLaplace(1.0), builtin_len([0.0]))
    assert got == pytest.approx(1.0, abs=1e-9)


def test_exact_laplace_on_grid_against_quadrature():
    from scipy import integrate
    eps, n = 1.7, 3
    pi = DiscreteDist(grid_points(n), [0.1, 0.4, 0.3, 0.2])
    loss = builtin_len()
    got = expected_loss_restricted(pi, restrict_continuous_mechanism(TruncatedLaplace(eps), n), loss)
    pts = pi.support
    L = np.abs(pts[:, None] - pts[None, :])

    def env(y):
        dens = 0.5 * eps * np.exp(-eps * np.abs(y - pts))
        return float(np.min(L @ (pi.probs * dens)))
    cont = integrate.quad(env, 0, 1, points=list(pts[1:-1]) + [1 / 6, 1 / 2, 5 / 6], epsabs=1e-13, limit=200)[0]
    a0 = float(np.min(L @ (pi.probs * 0.5 * np.exp(-eps * pts))))
    a1 = float(np.min(L @ (pi.probs * 0.5 * np.exp(-eps * (1 - pts)))))
    assert got == pytest.approx(cont + a0 + a1, abs=1e-10)


def test_exact_laplace_single_center():
    # one input at 0 with weight c: only guess 0 with loss 0 -> total 0
    assert laplace_loss_exact(1.0, [0.0], [[0.0]]) == 0.0
    # constant coefficient 1: integrates the full row mass
    assert laplace_loss_exact(1.0, [0.3], [[1.0]]) == pytest.approx(1.0, abs=1e-14)


def test_geo_below_laplace_below_tlap():
    for n in (2, 4, 8):
        pi = pixelate_prior(linear_prior(), n)
        loss = builtin_len()
        lg = expected_loss_discrete(pi, geometric_channel(1.0, n), loss)
        ll = expected_loss_restricted(pi, restrict_continuous_mechanism(TruncatedLaplace(1.0), n), loss)
        lt = expected_loss_discrete(pi, t_pixelated_laplace(1.0, n, 8 * n), loss)
        assert lg <= ll + 1e-12 <= lt + 2e-12


def test_quadrature_reports_unreachable_tolerance():
    loss = nstep_loss(builtin_len(), 4)
    with pytest.raises(QuadratureNonconvergence):
        expected_loss_continuous(uniform_prior(), TruncatedLaplace(1.0), loss, method="quad", quad_tol=1e-300)


def test_weighted_loss_reproduces_expected_loss():
    n = 4
    pi = pixelate_prior(linear_prior(), n)
    ref = reference_uniform(pi, n)
    w = weight_loss_for_prior(builtin_len(), pi, n)
    assert w.meta["weight_factor"] == n and w.meta["base_kappa"] == 1.0
    for ch in (geometric_channel(1.0, n), t_pixelated_laplace(1.0, n, 16)):
        assert expected_loss_discrete(ref, ch, w) == pytest.approx(expected_loss_discrete(pi, ch, builtin_len()),
                                                                   abs=1e-14)
    assert check_lipschitz(w, grid_points(n), kappa=w.kappa)


def test_loss_function_requires_one_source():
    with pytest.raises(ValueError):
        LossFunction("x", None)
