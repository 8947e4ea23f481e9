"""Prediction experiments on the signal reservoir.

Three tasks are implemented:

* density model, one target road: predict its current density from the
  signal observables plus the same road's density T steps back.
* multi-agent model, road subset: predict the densities of the unmonitored
  roads from the signal observables, the monitored roads' densities T steps
  back, and the unmonitored mean T steps back.
* external series: inject a standardized scalar series into the signal
  phases and read the current series value back from the observables alone.

Trials are paired through per-purpose rng streams derived from
(seed, trial, stream id), so a parameter sweep re-runs the same random
networks, initial states, and phases for every parameter value.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import io as _io
from .agents import AgentSim, init_agents
from .density import DensitySim, init_density
from .lattice import assign_turn_table, build_lattice
from .readout import (TAG_A, TAG_A_PRIME, TAG_B, FeatureDef, assemble_matrix,
                      log_nrmse, predict, ridge_fit)
from .signals import TWO_PI, PhaseBank

__all__ = [
    "STREAM_TURNS", "STREAM_INIT", "STREAM_PHASE", "STREAM_MASK",
    "STREAM_INPUT", "STREAM_AGENTS", "STREAM_ROADS", "stream_rng",
    "TrialResult", "SweepResult", "select_reservoir_fraction",
    "default_target_link", "lag_diagnostic", "run_task1_density",
    "run_task1_agents", "run_task2_external", "run_experiment",
    "average_prediction", "summarize", "sweep", "run_simulation",
]

# rng stream ids; one independent stream per random ingredient of a trial
STREAM_TURNS = 1
STREAM_INIT = 2
STREAM_PHASE = 3
STREAM_MASK = 4
STREAM_INPUT = 5
STREAM_AGENTS = 6
STREAM_ROADS = 7
STREAM_SERIES = 1000    # shared across trials, not per-trial


def stream_rng(seed, trial, stream):
    """Independent generator for one purpose within one trial."""
    return np.random.default_rng((int(seed), int(trial), int(stream)))


@dataclass
class TrialResult:
    """One trial's test-set outcome.

    teacher/predicted hold the test segment, 1-d for single-output tasks and
    (outputs, steps) otherwise; t0 is the absolute time of the first test
    step. per_output holds single-output scores for multi-output tasks
    (None where a component teacher is constant on the test window).
    """
    trial: int
    seed: int
    score: float
    lag: int | None
    teacher: np.ndarray
    predicted: np.ndarray
    t0: int
    per_output: tuple | None = None


@dataclass
class SweepResult:
    """Per-value trial lists plus a mean/stderr summary table."""
    param: str
    values: tuple
    by_value: dict
    rows: list


def select_reservoir_fraction(p, n_junctions, rng, exclude=()):
    """Pick ceil(p * n_junctions) reservoir junctions, never the excluded ones.

    One permutation is drawn regardless of p and the first entries are kept,
    so for a fixed rng state the selections are nested across p. Returns
    sorted junction ids.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    order = rng.permutation(n_junctions)
    if exclude:
        drop = set(int(j) for j in exclude)
        order = np.asarray([j for j in order if int(j) not in drop],
                           dtype=np.int64)
    # 1e-9 slack: p * J can land one ulp above an exact integer
    count = max(int(math.ceil(p * n_junctions - 1e-9)), 0)
    count = min(count, order.size)
    return np.sort(order[:count])


def default_target_link(net):
    """Eastbound link out of the grid's central junction."""
    if net.n < 2:
        raise ValueError("prediction tasks need a lattice with n >= 2")
    c = (net.n - 1) // 2
    return net.link_index(net.junction_id(c, c), net.junction_id(c + 1, c))


def _resolve_target(cfg, net):
    if cfg.target_link is None:
        return default_target_link(net)
    return net.link_index(*cfg.target_link)


def _phase_bank(cfg, rng_phase, rng_input=None):
    nj = cfg.n * cfg.n
    xi = rng_phase.uniform(0.0, TWO_PI, nj)
    tau = np.asarray(cfg.tau, dtype=float) if isinstance(cfg.tau, tuple) \
        else float(cfg.tau)
    nsf = np.asarray(cfg.ns_stop_first, dtype=bool) \
        if isinstance(cfg.ns_stop_first, tuple) else bool(cfg.ns_stop_first)
    win = None
    if rng_input is not None:
        win = rng_input.uniform(-cfg.sigma_in, cfg.sigma_in, nj)
    return PhaseBank(tau, xi, mode=cfg.phase_mode, win=win, ns_stop_first=nsf)


def _span(cfg):
    """Total sim steps and the first usable feature row."""
    first = cfg.washout + cfg.T
    return first + cfg.train + cfg.test, first


def lag_diagnostic(y, y_hat, max_lag):
    """Delay at which the prediction best matches the teacher.

    Maximizes the Pearson correlation of y_hat(t) against y(t - lag) over
    lag = 0..max_lag; ties keep the smallest lag. A pass-through readout
    scores its input delay here. Returns None if no lag gives a defined
    correlation (either side constant on the overlap).
    """
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise ValueError("teacher and prediction series differ in length")
    n = y.size
    best, best_c = None, -np.inf
    for lag in range(0, min(int(max_lag), n - 3) + 1):
        a = y[: n - lag]
        b = y_hat[lag:]
        sa, sb = a.std(), b.std()
        if sa == 0.0 or sb == 0.0:
            continue
        c = float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))
        if c > best_c:
            best, best_c = lag, c
    return best


def _default_max_lag(cfg):
    return max(2 * cfg.T, 10)


def _score_and_lag(cfg, teacher, pred):
    score = log_nrmse(teacher, pred)
    lag = lag_diagnostic(np.atleast_2d(teacher)[0], np.atleast_2d(pred)[0],
                         _default_max_lag(cfg))
    return score, lag


def run_task1_density(cfg):
    """Target-road density prediction on the density model."""
    steps, first = _span(cfg)
    results = []
    for trial in range(cfg.trials):
        net = build_lattice(cfg.n, cfg.link_length)
        table = assign_turn_table(net, cfg.turn_weights,
                                  stream_rng(cfg.seed, trial, STREAM_TURNS))
        bank = _phase_bank(cfg, stream_rng(cfg.seed, trial, STREAM_PHASE))
        q0 = init_density(net, cfg.total_vehicles,
                          stream_rng(cfg.seed, trial, STREAM_INIT), how=cfg.init)
        traj = DensitySim(net, table, bank, q0).run(steps)

        target = _resolve_target(cfg, net)
        ends = (net.link_from[target], net.link_to[target])
        mask = select_reservoir_fraction(
            cfg.p, net.n_junctions, stream_rng(cfg.seed, trial, STREAM_MASK),
            exclude=ends)
        y = traj.k[:, target]
        fdef = FeatureDef(TAG_A, mask, horizon=cfg.T)
        x = assemble_matrix(fdef, traj.x1[first:], traj.x2[first:],
                            u=y[cfg.washout:steps - cfg.T])
        teacher = y[first:]
        tr = cfg.train
        model = ridge_fit(x[:, :tr], teacher[:tr], cfg.beta, fdef)
        pred = predict(model, x[:, tr:])
        score, lag = _score_and_lag(cfg, teacher[tr:], pred)
        results.append(TrialResult(trial, cfg.seed, score, lag,
                                   teacher[tr:].copy(), pred[0].copy(),
                                   first + tr))
    return results


def run_task1_agents(cfg):
    """Unmonitored-road density prediction on the multi-agent model.

    M roads are monitored: their densities T steps back enter the features.
    The remaining roads form the (multi-output) teacher; the scalar input U
    is the unmonitored mean T steps back. M equal to the link count leaves
    nothing to predict and returns no trials.
    """
    probe = build_lattice(cfg.n, cfg.link_length)
    if cfg.M > probe.n_links:
        raise _io.ConfigError(
            f"config key 'M': at most {probe.n_links} roads on an n={cfg.n} grid")
    if cfg.M == probe.n_links:
        return []
    steps, first = _span(cfg)
    results = []
    for trial in range(cfg.trials):
        net = build_lattice(cfg.n, cfg.link_length)
        table = assign_turn_table(net, cfg.turn_weights,
                                  stream_rng(cfg.seed, trial, STREAM_TURNS))
        bank = _phase_bank(cfg, stream_rng(cfg.seed, trial, STREAM_PHASE))
        rng_agents = stream_rng(cfg.seed, trial, STREAM_AGENTS)
        state = init_agents(net, table, rng_agents,
                            per_link=cfg.agents_per_link, params=cfg.ov)
        sim = AgentSim(net, table, bank, state, cfg.ov, rng_agents)
        traj = sim.run(steps)

        order = stream_rng(cfg.seed, trial, STREAM_ROADS).permutation(net.n_links)
        monitored = np.sort(order[:cfg.M])
        hidden = np.sort(order[cfg.M:])
        mask = select_reservoir_fraction(
            cfg.p, net.n_junctions, stream_rng(cfg.seed, trial, STREAM_MASK))
        teacher = traj.k[first:, hidden].T
        u = traj.k[cfg.washout:steps - cfg.T, hidden].mean(axis=1)
        fdef = FeatureDef(TAG_A_PRIME, mask, roads=monitored, horizon=cfg.T)
        x = assemble_matrix(fdef, traj.x1[first:], traj.x2[first:], u=u,
                            k_hist=traj.k[cfg.washout:steps - cfg.T])
        tr = cfg.train
        model = ridge_fit(x[:, :tr], teacher[:, :tr], cfg.beta, fdef)
        pred = predict(model, x[:, tr:])
        score = log_nrmse(teacher[:, tr:], pred)
        per_output, lag = [], None
        for i in range(teacher.shape[0]):
            try:
                per_output.append(log_nrmse(teacher[i:i + 1, tr:], pred[i:i + 1]))
            except ValueError:
                per_output.append(None)
                continue
            if lag is None:
                lag = lag_diagnostic(teacher[i, tr:], pred[i],
                                     _default_max_lag(cfg))
        results.append(TrialResult(trial, cfg.seed, score, lag,
                                   teacher[:, tr:].copy(), pred.copy(),
                                   first + tr, per_output=tuple(per_output)))
    return results


def _series_values(cfg, series, steps):
    if series is None:
        sp = cfg.series_synth
        length = sp.length if sp.length is not None else steps
        values = _io.synth_series(sp.kind, length,
                                  np.random.default_rng((cfg.seed, STREAM_SERIES)),
                                  amplitude=sp.amplitude, offset=sp.offset,
                                  period=sp.period, rho=sp.rho, sigma=sp.sigma)
    elif isinstance(series, _io.Series):
        values = series.values
    else:
        values = np.asarray(series, dtype=float)
    if values.size < steps:
        raise ValueError(
            f"series holds {values.size} steps; the experiment needs {steps}")
    return values[:steps]


def run_task2_external(cfg, series=None):
    """External-series prediction: inject y(t-T), read y(t) back.

    The series is standardized with mean/std taken from its pre-test prefix
    and enters every junction's phase increment through that trial's random
    input weights. The readout sees the signal observables only (feature
    tag "b") unless task2_feature is "a", which appends the injected scalar.
    """
    if cfg.model != "density":
        raise _io.ConfigError(
            "config key 'model': the external-series task runs on the "
            "density model")
    steps, first = _span(cfg)
    y = _series_values(cfg, series, steps)
    prefix = y[:cfg.washout + cfg.train]
    mu, sd = float(prefix.mean()), float(prefix.std())
    if sd == 0.0:
        raise ValueError("external series is constant over the training prefix")
    z = (y - mu) / sd
    inputs = np.zeros(steps)
    if cfg.T == 0:
        inputs[:] = z
    else:
        inputs[cfg.T:] = z[:-cfg.T]

    results = []
    for trial in range(cfg.trials):
        net = build_lattice(cfg.n, cfg.link_length)
        table = assign_turn_table(net, cfg.turn_weights,
                                  stream_rng(cfg.seed, trial, STREAM_TURNS))
        bank = _phase_bank(cfg, stream_rng(cfg.seed, trial, STREAM_PHASE),
                           rng_input=stream_rng(cfg.seed, trial, STREAM_INPUT))
        q0 = init_density(net, cfg.total_vehicles,
                          stream_rng(cfg.seed, trial, STREAM_INIT), how=cfg.init)
        traj = DensitySim(net, table, bank, q0).run(steps, inputs=inputs)

        mask = select_reservoir_fraction(
            cfg.p, net.n_junctions, stream_rng(cfg.seed, trial, STREAM_MASK))
        if cfg.task2_feature == "a":
            fdef = FeatureDef(TAG_A, mask, horizon=cfg.T)
            x = assemble_matrix(fdef, traj.x1[first:], traj.x2[first:],
                                u=z[cfg.washout:steps - cfg.T])
        else:
            fdef = FeatureDef(TAG_B, mask, horizon=cfg.T)
            x = assemble_matrix(fdef, traj.x1[first:], traj.x2[first:])
        teacher = y[first:]
        tr = cfg.train
        model = ridge_fit(x[:, :tr], teacher[:tr], cfg.beta, fdef)
        pred = predict(model, x[:, tr:])
        score, lag = _score_and_lag(cfg, teacher[tr:], pred)
        results.append(TrialResult(trial, cfg.seed, score, lag,
                                   teacher[tr:].copy(), pred[0].copy(),
                                   first + tr))
    return results


def run_experiment(cfg, series=None):
    """Dispatch on (task, model); returns the trial list."""
    if cfg.task == "external_series":
        return run_task2_external(cfg, series)
    if cfg.model == "agents":
        return run_task1_agents(cfg)
    return run_task1_density(cfg)


def average_prediction(results, count=None):
    """Score the trial-averaged prediction against the shared teacher.

    Valid only for paired trials of the same experiment (identical teacher);
    averaging suppresses the per-trial randomness of the reservoir.
    """
    picked = list(results if count is None else results[:count])
    if not picked:
        raise ValueError("no trials to average")
    teacher = picked[0].teacher
    for r in picked[1:]:
        if not np.array_equal(r.teacher, teacher):
            raise ValueError("trials do not share a teacher; cannot average")
    mean_pred = np.mean([r.predicted for r in picked], axis=0)
    return log_nrmse(teacher, mean_pred), mean_pred


def summarize(results):
    """Mean and standard error of the trial scores."""
    scores = np.asarray([r.score for r in results], dtype=float)
    k = scores.size
    stderr = float(scores.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
    return {"mean": float(scores.mean()), "stderr": stderr, "trials": int(k)}


_SWEEP_PARAMS = ("p", "M", "T", "beta", "tau")


def sweep(cfg, param, values, series=None):
    """Re-run the configured experiment for each parameter value.

    The base seed is reused, so trials stay paired across values. Values for
    M and T are coerced to int, the rest to float.
    """
    if param not in _SWEEP_PARAMS:
        raise _io.ConfigError(
            f"sweep parameter must be one of {', '.join(_SWEEP_PARAMS)}")
    by_value, rows = {}, []
    for raw in values:
        value = int(raw) if param in ("M", "T") else float(raw)
        cfg_v = dataclasses.replace(cfg, **{param: value})
        _io.validate_config(cfg_v)
        trials = run_experiment(cfg_v, series)
        by_value[value] = trials
        if trials:
            row = summarize(trials)
            row["value"] = value
            rows.append(row)
    return SweepResult(param, tuple(by_value), by_value, rows)


def run_simulation(cfg, steps=None):
    """Run the configured model once (trial 0 streams) and return (net, trajectory)."""
    if steps is None:
        steps = cfg.steps if cfg.steps is not None else _span(cfg)[0]
    net = build_lattice(cfg.n, cfg.link_length)
    table = assign_turn_table(net, cfg.turn_weights,
                              stream_rng(cfg.seed, 0, STREAM_TURNS))
    bank = _phase_bank(cfg, stream_rng(cfg.seed, 0, STREAM_PHASE))
    if cfg.model == "agents":
        rng_agents = stream_rng(cfg.seed, 0, STREAM_AGENTS)
        state = init_agents(net, table, rng_agents,
                            per_link=cfg.agents_per_link, params=cfg.ov)
        sim = AgentSim(net, table, bank, state, cfg.ov, rng_agents)
    else:
        q0 = init_density(net, cfg.total_vehicles,
                          stream_rng(cfg.seed, 0, STREAM_INIT), how=cfg.init)
        sim = DensitySim(net, table, bank, q0)
    return net, sim.run(steps)
