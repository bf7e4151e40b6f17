import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from dpopt.lp import find_feasible, solve_lp


def _oracle(c, A, b):
    res = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    return {0: "optimal", 2: "infeasible", 3: "unbounded"}[res.status], res.fun


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 12), st.sampled_from(["feasible", "random", "redundant"]))
def test_matches_highs(seed, m, n, kind):
    rng = np.random.default_rng(seed)
    A = rng.integers(-3, 4, (m, n)).astype(float)
    if kind == "redundant" and m > 1:
        A[-1] = A[0] + A[1 % m]
    if kind == "random":
        b = rng.integers(-5, 6, m).astype(float)
    else:
        b = A @ rng.integers(0, 3, n).astype(float)
    c = rng.integers(-4, 5, n).astype(float)
    status, fun = _oracle(c, A, b)
    res = solve_lp(c, A, b)
    assert res.status == status
    if status == "optimal":
        assert res.fun == pytest.approx(fun, abs=1e-7)
        assert res.certified
        assert np.all(res.x >= 0) and np.allclose(A @ res.x, b, atol=1e-7)


def test_beale_cycling_example():
    # classic degenerate LP that cycles under the largest-coefficient rule
    c = np.array([-0.75, 150, -0.02, 6, 0, 0, 0])
    A = np.array([[0.25, -60, -0.04, 9, 1, 0, 0],
                  [0.5, -90, -0.02, 3, 0, 1, 0],
                  [0, 0, 1, 0, 0, 0, 1]], dtype=float)
    b = np.array([0, 0, 1.0])
    res = solve_lp(c, A, b)
    assert res.success and res.certified
    assert res.fun == pytest.approx(-0.05, abs=1e-12)


def test_transport_problem():
    cost = np.array([[0, 2, 3], [2, 0, 1]], dtype=float)
    a, b = [0.5, 0.5], [0.2, 0.3, 0.5]
    A = np.zeros((5, 6))
    for i in range(2):
        A[i, i * 3:(i + 1) * 3] = 1
    for j in range(3):
        A[2 + j, j::3] = 1
    res = solve_lp(cost.ravel(), A, np.concatenate([a, b]))
    assert res.fun == pytest.approx(_oracle(cost.ravel(), A, np.concatenate([a, b]))[1], abs=1e-12)


def test_find_feasible():
    A = np.array([[1.0, 1.0]])
    assert find_feasible(A, [1.0]) is not None
    assert find_feasible(A, [-1.0]) is None


def test_shape_mismatch():
    with pytest.raises(ValueError):
        solve_lp([1, 2], [[1, 2, 3]], [1])
