import math

import numpy as np
import pytest

from dpopt.errors import ChainViolation, IllegalLoss, InvalidN, InvalidT
from dpopt.experiments import (CSV_HEADER, ExperimentConfig, discrete_optimality_trial,
                               main_theorem_demo, run_convergence, sample_dp_channel)
from dpopt.loss import builtin_bayes_risk, builtin_len, builtin_len2, table_loss
from dpopt.mechanisms import geometric_channel, verify_dp
from dpopt.pixelate import uniform_prior
from dpopt.prob import constant_channel, grid_points


def test_sampler_output_is_private():
    for seed in range(100):
        ch = sample_dp_channel(1.0, 4, seed)
        assert verify_dp(ch, 1.0).holds
        assert 5 <= ch.shape[1] <= 15


def test_sampler_is_deterministic_and_varies():
    a = sample_dp_channel(1.0, 4, 7)
    b = sample_dp_channel(1.0, 4, 7)
    c = sample_dp_channel(1.0, 4, 8)
    assert np.array_equal(a.matrix, b.matrix)
    assert a.shape != c.shape or not np.array_equal(a.matrix, c.matrix)


def test_config_validation():
    with pytest.raises(InvalidN):
        ExperimentConfig(n_list=())
    with pytest.raises(InvalidN):
        ExperimentConfig(n_list=(4, 2))
    with pytest.raises(InvalidT):
        ExperimentConfig(t_factor=0)


def test_optimality_large_eps_n2():
    rep = discrete_optimality_trial(2 * math.log(4), 2, uniform_prior(), builtin_len(), 100, seed=5)
    assert rep.ok and rep.samples == 100


def test_geometric_competitor_has_zero_margin_and_constant_is_worse():
    geo = geometric_channel(1.0, 4)
    const = constant_channel(grid_points(4), [0.0, 1.0])
    rep = discrete_optimality_trial(1.0, 4, uniform_prior(), builtin_len(), 0, seed=0, competitors=[geo, const])
    assert rep.margins[0] == pytest.approx(0.0, abs=1e-15)
    assert rep.margins[1] >= 0.0


def test_optimality_rejects_illegal_loss():
    with pytest.raises(IllegalLoss):
        discrete_optimality_trial(1.0, 2, uniform_prior(), table_loss(np.eye(3), 2), 1, seed=0)


def test_optimality_accepts_bayes_risk_on_grid():
    rep = discrete_optimality_trial(1.0, 2, uniform_prior(), builtin_bayes_risk(), 20, seed=0)
    assert rep.ok


def test_convergence_rows_and_csv(tmp_path):
    out = tmp_path / "c.csv"
    res = run_convergence(ExperimentConfig(1.0, uniform_prior(), builtin_len(), (2, 4, 8), 8, output=str(out)))
    assert res.ok and res.gap_nonincreasing
    text = out.read_text()
    lines = text.split("\n")
    assert lines[0] == CSV_HEADER and lines[-1] == "" and len(lines) == 5
    for r in res.rows:
        assert r.loss_geo <= r.loss_lap_exact + 1e-9 <= r.loss_tlap + 2e-9
        assert abs(r.dp_tightness - 1.0) <= 1e-9
    assert lines[1].startswith("2,16,1,1,0.188770334399,")


def test_convergence_thread_count_does_not_change_output(monkeypatch):
    cfg = ExperimentConfig(1.0, uniform_prior(), builtin_len(), (2, 4, 8, 16), 8)
    monkeypatch.setenv("DPOPT_THREADS", "1")
    one = run_convergence(cfg).csv()
    monkeypatch.setenv("DPOPT_THREADS", "4")
    assert run_convergence(cfg).csv() == one


@pytest.mark.parametrize("loss", [builtin_len(), builtin_len2()])
def test_demo_chain_holds(loss):
    rep = main_theorem_demo(1.0, uniform_prior(), loss, (4, 16, 64), seed=0, samples=2)
    assert len(rep.rows) == 3 * 3
    lap_bounds = rep.bound_trend("laplace")
    assert lap_bounds == sorted(lap_bounds)
    for r in rep.rows:
        if r.competitor == "laplace":
            assert r.observed == 0.0


def test_demo_requires_lipschitz_loss():
    with pytest.raises(IllegalLoss):
        main_theorem_demo(1.0, uniform_prior(), builtin_bayes_risk(), (4,), seed=0)


def test_chain_violation_names_link():
    err = ChainViolation("gap bound", "x")
    assert err.link == "gap bound"
