"""Model layer: exact transitions, payoffs, path plumbing, tree fixtures."""

import numpy as np
import pytest
from scipy import stats

from nccmc import rng
from nccmc.process_models import (
    GbmModel,
    GbmParams,
    PathState,
    TreeModel,
    bundled_tree,
    continue_path,
    gbm_step,
    load_tree,
    max_call_payoff,
    simulate_full_path,
    simulate_training_paths,
)
from nccmc.rng import StreamKey


def params(**kw):
    base = dict(d=2, r=0.05, delta=0.1, sigma=0.2, K=100.0, y0=90.0, T=3.0, n_dates=10)
    base.update(kw)
    return GbmParams(**base)


# --- single-step arithmetic --------------------------------------------------

def test_step_pure_drift():
    p = params(d=1, sigma=0.0, T=1.0, n_dates=2)
    out = gbm_step(np.array([100.0]), 1.0, p, np.array([0.0]))
    assert out[0] == pytest.approx(100.0 * np.exp(-0.05), rel=1e-12)


def test_step_zero_draw():
    p = params(d=1, r=0.0, delta=0.0, T=1.0, n_dates=2)
    out = gbm_step(np.array([100.0]), 1.0, p, np.array([0.0]))
    assert out[0] == pytest.approx(100.0 * np.exp(-0.02), rel=1e-12)


def test_step_rejects_bad_input():
    p = params(d=1)
    with pytest.raises(ValueError):
        gbm_step(np.array([np.nan]), 1.0, p, np.array([0.0]))
    with pytest.raises(ValueError):
        gbm_step(np.array([100.0]), 1.0, p, np.array([np.inf]))
    with pytest.raises(ValueError):
        gbm_step(np.array([100.0]), -1.0, p, np.array([0.0]))


def test_step_batched_rows_match_single_calls():
    p = params()
    states = np.array([[90.0, 110.0], [100.0, 95.0], [80.0, 80.0]])
    z = np.array([[0.3, -1.1], [0.0, 2.0], [-0.7, 0.4]])
    batch = gbm_step(states, p.dt, p, z)
    for k in range(3):
        assert np.array_equal(batch[k], gbm_step(states[k], p.dt, p, z[k]))


def test_payoff_in_the_money_undiscounted():
    p = params(r=0.0)
    assert max_call_payoff(3, np.array([110.0, 90.0]), p) == 10.0


def test_payoff_at_the_money_kink():
    p = params()
    assert max_call_payoff(2, np.array([100.0, 80.0]), p) == 0.0


def test_payoff_discounted():
    p = params(d=1, T=3.0, n_dates=2)
    val = max_call_payoff(1, np.array([120.0]), p)
    assert val == pytest.approx(20.0 * np.exp(-0.15), rel=1e-12)


def test_payoff_rejects_nonfinite():
    with pytest.raises(ValueError):
        max_call_payoff(0, np.array([np.nan, 1.0]), params())


# --- distribution checks ------------------------------------------------------

def test_log_returns_match_exact_law():
    p = params(d=1)
    z = rng.normals(99, rng.NS_TESTING, rng.TRUNK, 0, 1, 100_000, 1)
    y1 = gbm_step(np.full((100_000, 1), p.y0), p.dt, p, z)
    logret = np.log(y1[:, 0] / p.y0)
    loc = (p.r - p.delta - 0.5 * p.sigma**2) * p.dt
    scale = p.sigma * np.sqrt(p.dt)
    assert stats.kstest(logret, "norm", args=(loc, scale)).pvalue > 0.01


def test_discounted_drift_martingale():
    p = params(d=1)
    z = rng.normals(99, rng.NS_TESTING, rng.TRUNK, 0, 2, 1_000_000, 1)
    y = gbm_step(np.full((1_000_000, 1), p.y0), p.dt, p, z)[:, 0]
    disc = y * np.exp(-(p.r - p.delta) * p.dt)
    se = disc.std(ddof=1) / np.sqrt(len(disc))
    assert abs(disc.mean() - p.y0) < 3 * se


# --- full paths and continuations ---------------------------------------------

def test_full_path_deterministic():
    p = params()
    a = simulate_full_path(p, StreamKey(seed=5, path=3))
    b = simulate_full_path(p, StreamKey(seed=5, path=3))
    assert np.array_equal(a.assets, b.assets)
    assert np.array_equal(a.payoffs, b.payoffs)


def test_full_path_zero_vol_closed_form():
    p = params(sigma=0.0)
    traj = simulate_full_path(p, StreamKey(seed=5))
    growth = np.exp((p.r - p.delta) * p.dates)
    assert np.allclose(traj.assets[:, 0], p.y0 * growth, rtol=1e-12)
    expected = np.exp(-p.r * p.dates) * np.maximum(p.y0 * growth - p.K, 0.0)
    assert np.allclose(traj.payoffs, expected, rtol=1e-12)


def test_stored_payoffs_recomputable():
    p = params()
    traj = simulate_full_path(p, StreamKey(seed=8, path=1))
    for j in range(p.n_dates):
        assert traj.payoffs[j] == max_call_payoff(j, traj.assets[j], p)


def test_training_batch_matches_per_path_streams():
    p = params()
    bundle = simulate_training_paths(p, 7, 21)
    for path in (0, 3, 6):
        solo = simulate_full_path(p, StreamKey(seed=21, namespace=rng.NS_TRAINING, path=path))
        assert np.array_equal(bundle.assets[path], solo.assets)
        assert np.array_equal(bundle.payoffs[path], solo.payoffs)


def test_continuation_zero_vol_matches_full_path_tail():
    p = params(sigma=0.0)
    full = simulate_full_path(p, StreamKey(seed=5))
    cont = continue_path(full.state(4), p, StreamKey(seed=5, replication=1))
    assert np.allclose(cont.assets, full.assets[4:], rtol=1e-12)


def test_continuations_distinct_across_replications():
    p = params()
    state = simulate_full_path(p, StreamKey(seed=5, path=2)).state(3)
    c1 = continue_path(state, p, StreamKey(seed=5, path=2, replication=1))
    c2 = continue_path(state, p, StreamKey(seed=5, path=2, replication=2))
    assert not np.array_equal(c1.assets[1:], c2.assets[1:])


def test_continuation_from_maturity_rejected():
    p = params()
    traj = simulate_full_path(p, StreamKey(seed=5))
    with pytest.raises(ValueError):
        continue_path(traj.state(p.J), p, StreamKey(seed=5, replication=1))


def test_pooled_continuations_have_gbm_mean():
    p = params(d=1)
    state = PathState(j=4, assets=np.array([105.0]), payoff=0.0)
    finals = np.array([
        continue_path(state, p, StreamKey(seed=77, path=0, replication=r)).assets[-1, 0]
        for r in range(1, 3001)
    ])
    horizon = p.T - p.dates[4]
    expected = 105.0 * np.exp((p.r - p.delta) * horizon)
    se = finals.std(ddof=1) / np.sqrt(len(finals))
    assert abs(finals.mean() - expected) < 3 * se


def test_trajectory_state_out_of_range():
    p = params()
    traj = simulate_full_path(p, StreamKey(seed=5))
    with pytest.raises(ValueError):
        traj.state(p.n_dates)


# --- parameter validation ------------------------------------------------------

def test_params_validation():
    with pytest.raises(ValueError):
        params(d=0)
    with pytest.raises(ValueError):
        params(n_dates=1)
    with pytest.raises(ValueError):
        params(T=0.0)
    with pytest.raises(ValueError):
        params(sigma=-0.1)
    with pytest.raises(ValueError):
        params(r=np.inf)


def test_date_grid_inclusive_uniform():
    p = params()
    assert p.dates[0] == 0.0
    assert p.dates[-1] == p.T
    assert np.allclose(np.diff(p.dates), p.dt)
    assert p.J == 9


def test_model_adapter_consistency():
    p = params()
    m = GbmModel(p)
    states = m.init_states(4)
    assert states.shape == (4, 2) and np.all(states == p.y0)
    z = m.draw(3, rng.NS_TESTING, rng.TRUNK, 0, 1, 4)
    stepped = m.step_batch(1, states, z)
    assert np.array_equal(stepped, gbm_step(states, p.dt, p, z))
    assert np.array_equal(m.payoff_batch(1, stepped), max_call_payoff(1, stepped, p))
    assert m.step_units == p.d


# --- tree fixtures ---------------------------------------------------------------

def test_tree_validation():
    with pytest.raises(ValueError):
        load_tree({"root": {"payoff": 1.0, "children": [
            {"prob": 0.6, "payoff": 1.0}, {"prob": 0.5, "payoff": 2.0}]}})
    with pytest.raises(ValueError):
        load_tree({"root": {"payoff": 1.0, "children": [
            {"prob": 0.5, "payoff": 1.0},
            {"prob": 0.5, "payoff": 2.0, "children": [
                {"prob": 1.0, "payoff": 0.0}]}]}})
    with pytest.raises(ValueError):
        load_tree({"root": {"payoff": 1.0}})


def test_bundled_trees_load():
    t1 = bundled_tree("tree_1period")
    t2 = bundled_tree("tree_2period")
    assert t1.J == 1 and t2.J == 2
    assert t2.label_to_id["root"] == 0
    assert set(t2.labels) == {"root", "0", "1", "0/0", "0/1", "1/0", "1/1"}
    with pytest.raises(FileNotFoundError):
        bundled_tree("no_such_tree")


def test_tree_branch_frequencies(tree2):
    m = tree2
    states = m.init_states(40_000)
    u = m.draw(13, rng.NS_TESTING, rng.TRUNK, 0, 1, 40_000)
    stepped = m.step_batch(1, states, u)
    frac_high = np.mean(stepped == m.label_to_id["0"])
    assert abs(frac_high - 0.6) < 3 * np.sqrt(0.6 * 0.4 / 40_000)


def test_tree_payoffs_attached_to_nodes(tree2):
    m = tree2
    node = m.label_to_id["1/0"]
    assert m.payoff_batch(2, np.array([node]))[0] == 2.0
