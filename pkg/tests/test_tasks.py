"""Experiment drivers: unit selection, lag diagnostic, trials, sweeps."""

import dataclasses

import numpy as np
import pytest

from trafficrc.io import ConfigError, config_from_dict
from trafficrc.lattice import build_lattice
from trafficrc.readout import log_nrmse
from trafficrc.tasks import (average_prediction, default_target_link,
                             lag_diagnostic, run_experiment, run_simulation,
                             run_task1_agents, run_task1_density,
                             run_task2_external, select_reservoir_fraction,
                             summarize, sweep)


# --- reservoir unit selection -------------------------------------------------

def test_fraction_count_rounds_up():
    units = select_reservoir_fraction(0.5, 25, np.random.default_rng(0))
    assert units.size == 13     # ceil(12.5)
    assert np.array_equal(units, np.sort(units))
    assert np.unique(units).size == units.size


def test_fraction_edges():
    assert select_reservoir_fraction(0.0, 25, np.random.default_rng(0)).size == 0
    full = select_reservoir_fraction(1.0, 25, np.random.default_rng(0))
    assert np.array_equal(full, np.arange(25))


def test_fraction_float_product_hazard():
    # 0.04 * 25 lands one ulp above 1.0; must select exactly one unit
    units = select_reservoir_fraction(0.04, 25, np.random.default_rng(3))
    assert units.size == 1


def test_fraction_nested_across_p():
    small = select_reservoir_fraction(0.2, 25, np.random.default_rng(42))
    large = select_reservoir_fraction(0.6, 25, np.random.default_rng(42))
    assert set(small.tolist()) <= set(large.tolist())


def test_fraction_exclusion():
    units = select_reservoir_fraction(1.0, 25, np.random.default_rng(1),
                                      exclude=(3, 17))
    assert units.size == 23
    assert 3 not in units and 17 not in units


def test_fraction_bad_p():
    with pytest.raises(ValueError):
        select_reservoir_fraction(-0.1, 25, np.random.default_rng(0))
    with pytest.raises(ValueError):
        select_reservoir_fraction(1.5, 25, np.random.default_rng(0))


def test_default_target_is_central_eastbound():
    net5 = build_lattice(5)
    target = default_target_link(net5)
    assert net5.link_from[target] == net5.junction_id(2, 2)
    assert net5.link_to[target] == net5.junction_id(3, 2)
    net2 = build_lattice(2)
    target = default_target_link(net2)
    assert net2.link_from[target] == net2.junction_id(0, 0)
    assert net2.link_to[target] == net2.junction_id(1, 0)
    with pytest.raises(ValueError):
        default_target_link(build_lattice(1))


# --- lag diagnostic -----------------------------------------------------------

def test_lag_recovers_shift():
    rng = np.random.default_rng(5)
    y = rng.normal(size=400)
    shifted = np.roll(y, 3)     # prediction trails the teacher by 3 steps
    assert lag_diagnostic(y, shifted, 10) == 3


def test_lag_zero_for_identity():
    y = np.sin(np.arange(200) / 7.0)
    assert lag_diagnostic(y, y, 10) == 0


def test_lag_ties_take_smallest():
    y = np.tile([1.0, -1.0], 50)    # period 2: lags 0 and 2 correlate equally
    assert lag_diagnostic(y, y, 6) == 0


def test_lag_undefined_for_constant():
    y = np.arange(50.0)
    assert lag_diagnostic(y, np.ones(50), 5) is None


def test_lag_length_mismatch():
    with pytest.raises(ValueError):
        lag_diagnostic(np.zeros(10), np.zeros(9), 3)


# --- task runs at desk scale --------------------------------------------------

_SMALL_DENSITY = dict(model="density", task="density_link", n=3, T=2,
                      washout=20, train=120, test=60, trials=3, seed=9)
_SMALL_AGENTS = dict(model="agents", task="density_link", n=2, T=2, M=3,
                     washout=15, train=80, test=40, trials=2, seed=9)
_SMALL_SERIES = dict(model="density", task="external_series", n=3, T=2,
                     washout=20, train=150, test=60, trials=3, seed=9)


def test_density_task_shapes_and_determinism():
    cfg = config_from_dict(dict(_SMALL_DENSITY))
    res = run_task1_density(cfg)
    assert len(res) == cfg.trials
    for r in res:
        assert np.isfinite(r.score)
        assert r.teacher.shape == (cfg.test,)
        assert r.predicted.shape == (cfg.test,)
        assert r.t0 == cfg.washout + cfg.T + cfg.train
    again = run_task1_density(cfg)
    for a, b in zip(res, again):
        assert a.score == b.score
        assert np.array_equal(a.predicted, b.predicted)


def test_density_trials_share_teacher():
    res = run_task1_density(config_from_dict(dict(_SMALL_DENSITY)))
    # same target link and densities are trial-specific: teachers differ,
    # but each trial's teacher matches its own trajectory length
    assert all(r.teacher.shape == res[0].teacher.shape for r in res)


def test_agents_task_multi_output():
    cfg = config_from_dict(dict(_SMALL_AGENTS))
    res = run_task1_agents(cfg)
    assert len(res) == cfg.trials
    hidden = cfg.n_links - cfg.M
    for r in res:
        assert r.teacher.shape == (hidden, cfg.test)
        assert r.predicted.shape == (hidden, cfg.test)
        assert len(r.per_output) == hidden
        assert np.isfinite(r.score)


def test_agents_monitor_all_roads_returns_no_trials():
    cfg = config_from_dict(dict(_SMALL_AGENTS, M=8))
    assert run_task1_agents(cfg) == []


def test_agents_too_many_roads_rejected():
    cfg = config_from_dict(dict(_SMALL_AGENTS, M=9))
    with pytest.raises(ConfigError, match="'M'"):
        run_task1_agents(cfg)


def test_agents_monitor_none():
    cfg = config_from_dict(dict(_SMALL_AGENTS, M=0, trials=1))
    res = run_task1_agents(cfg)
    assert res[0].teacher.shape[0] == cfg.n_links


def test_series_task_runs_on_synth_default():
    cfg = config_from_dict(dict(_SMALL_SERIES))
    res = run_task2_external(cfg)
    assert len(res) == cfg.trials
    for r in res:
        assert np.isfinite(r.score)
        assert r.teacher.shape == (cfg.test,)


def test_series_task_rejects_agents_model():
    cfg = config_from_dict(dict(_SMALL_SERIES, model="agents"))
    with pytest.raises(ConfigError, match="'model'"):
        run_task2_external(cfg)


def test_series_too_short_rejected():
    cfg = config_from_dict(dict(_SMALL_SERIES))
    with pytest.raises(ValueError, match="needs"):
        run_task2_external(cfg, series=np.ones(50))


def test_series_constant_rejected():
    cfg = config_from_dict(dict(_SMALL_SERIES))
    with pytest.raises(ValueError, match="constant"):
        run_task2_external(cfg, series=np.full(300, 7.0))


def test_series_zero_horizon_runs():
    cfg = config_from_dict(dict(_SMALL_SERIES, T=0, trials=1))
    res = run_task2_external(cfg)
    assert np.isfinite(res[0].score)


def test_series_feature_flag_changes_prediction():
    plain = run_task2_external(config_from_dict(dict(_SMALL_SERIES, trials=1)))
    with_u = run_task2_external(config_from_dict(dict(_SMALL_SERIES, trials=1,
                                                      task2_feature="a")))
    assert not np.array_equal(plain[0].predicted, with_u[0].predicted)


def test_dispatch_matches_direct_calls():
    cfg = config_from_dict(dict(_SMALL_DENSITY, trials=1))
    direct = run_task1_density(cfg)
    routed = run_experiment(cfg)
    assert routed[0].score == direct[0].score

    cfg = config_from_dict(dict(_SMALL_AGENTS, trials=1))
    assert run_experiment(cfg)[0].score == run_task1_agents(cfg)[0].score

    cfg = config_from_dict(dict(_SMALL_SERIES, trials=1))
    assert run_experiment(cfg)[0].score == run_task2_external(cfg)[0].score


# --- trial averaging and summary ----------------------------------------------

def test_average_prediction_scores_the_mean():
    res = run_task2_external(config_from_dict(dict(_SMALL_SERIES)))
    score, mean_pred = average_prediction(res, 2)
    expect = np.mean([res[0].predicted, res[1].predicted], axis=0)
    assert np.array_equal(mean_pred, expect)
    assert score == log_nrmse(res[0].teacher, expect)


def test_average_prediction_rejects_mismatched_teachers():
    res = run_task1_density(config_from_dict(dict(_SMALL_DENSITY, trials=2)))
    # density teachers are trial-specific (different initial mass layouts)
    with pytest.raises(ValueError, match="teacher"):
        average_prediction(res)


def test_summarize_hand_stats():
    res = run_task2_external(config_from_dict(dict(_SMALL_SERIES)))
    stats = summarize(res)
    scores = np.array([r.score for r in res])
    assert stats["mean"] == pytest.approx(scores.mean())
    assert stats["stderr"] == pytest.approx(scores.std(ddof=1) / np.sqrt(3))
    assert stats["trials"] == 3
    assert summarize(res[:1])["stderr"] == 0.0


# --- parameter sweeps ----------------------------------------------------------

def test_sweep_pairs_with_direct_run():
    cfg = config_from_dict(dict(_SMALL_DENSITY))
    swept = sweep(cfg, "p", [0.5, 1.0])
    direct = run_task1_density(dataclasses.replace(cfg, p=0.5))
    for a, b in zip(swept.by_value[0.5], direct):
        assert a.score == b.score
        assert np.array_equal(a.predicted, b.predicted)
    assert [row["value"] for row in swept.rows] == [0.5, 1.0]


def test_sweep_coerces_integer_params():
    cfg = config_from_dict(dict(_SMALL_AGENTS, trials=1))
    swept = sweep(cfg, "M", ["3", "8"])
    assert set(swept.by_value) == {3, 8}
    # M=8 monitors every road: no trials, and no summary row
    assert swept.by_value[8] == []
    assert [row["value"] for row in swept.rows] == [3]


def test_sweep_rejects_unknown_param():
    cfg = config_from_dict(dict(_SMALL_DENSITY))
    with pytest.raises(ConfigError, match="sweep parameter"):
        sweep(cfg, "n", [3, 4])


def test_sweep_validates_each_value():
    cfg = config_from_dict(dict(_SMALL_DENSITY))
    with pytest.raises(ConfigError):
        sweep(cfg, "p", [0.5, 1.5])


# --- one-shot simulation -------------------------------------------------------

def test_run_simulation_spans_experiment_by_default():
    cfg = config_from_dict(dict(_SMALL_DENSITY))
    net, traj = run_simulation(cfg)
    want = cfg.washout + cfg.T + cfg.train + cfg.test
    assert traj.k.shape == (want, net.n_links)


def test_run_simulation_steps_override():
    cfg = config_from_dict(dict(_SMALL_DENSITY, steps=37))
    _, traj = run_simulation(cfg)
    assert traj.k.shape[0] == 37
    _, traj = run_simulation(cfg, steps=12)
    assert traj.k.shape[0] == 12


def test_run_simulation_agents_model():
    cfg = config_from_dict(dict(_SMALL_AGENTS, steps=25))
    net, traj = run_simulation(cfg)
    assert traj.k.shape == (25, net.n_links)
    assert traj.x1.shape == (25, net.n_junctions)
