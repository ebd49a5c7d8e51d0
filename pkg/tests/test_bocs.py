"""Surrogate features, posterior fits, acquisition, and the search loop."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from evroute.anneal import SaSchedule
from evroute.bocs import (
    BocsParams,
    PriorConfig,
    SampleSet,
    SurrogateModel,
    acquire,
    feature_terms,
    featurize,
    fit_posterior_sample,
    n_features,
    posterior_mean,
    run_bocs,
    run_random_search,
)
from evroute.evaluator import StationConfig
from evroute.instance import GenParams, generate_instance
from evroute.qubo import energy


def _all_configs(m):
    for code in range(1 << m):
        yield tuple((code >> i) & 1 for i in range(m))


def _filled_sample_set(m, alpha, configs=None):
    data = SampleSet(m=m)
    for bits in configs or _all_configs(m):
        data.add(StationConfig(bits), float(np.dot(alpha, featurize(bits))))
    return data


# -------------------------------------------------------------------- features

def test_feature_terms_order_m3():
    assert feature_terms(3) == ((), (0,), (1,), (2,), (0, 1), (0, 2), (1, 2))


def test_feature_counts():
    assert n_features(3) == 7
    assert n_features(16) == 137


def test_featurize_examples():
    assert list(featurize((0, 0, 0))) == [1, 0, 0, 0, 0, 0, 0]
    assert list(featurize((1, 1, 0))) == [1, 1, 1, 0, 1, 0, 0]


@settings(max_examples=60, deadline=None)
@given(bits=st.lists(st.integers(0, 1), min_size=1, max_size=8))
def test_featurize_matches_oracle(bits):
    assert list(featurize(bits)) == pytest.approx(oracles.features_oracle(bits))


# ------------------------------------------------------------------- surrogate

def test_surrogate_rejects_wrong_length():
    with pytest.raises(ValueError):
        SurrogateModel(m=3, alpha=np.zeros(6))


def test_to_matrix_reproduces_predictions():
    rng = np.random.default_rng(0)
    m = 5
    model = SurrogateModel(m=m, alpha=rng.normal(size=n_features(m)))
    A, const = model.to_matrix()
    assert np.allclose(A, A.T)
    for bits in _all_configs(m):
        s = np.array(bits, dtype=float)
        assert s @ A @ s + const == pytest.approx(model.predict(bits), abs=1e-12)


def test_to_qubo_reproduces_predictions():
    rng = np.random.default_rng(1)
    m = 4
    model = SurrogateModel(m=m, alpha=rng.normal(size=n_features(m)))
    qubo = model.to_qubo()
    shifted = model.to_qubo(extra_linear=0.25)
    for bits in _all_configs(m):
        b = np.array(bits, dtype=np.uint8)
        assert energy(qubo, b) == pytest.approx(model.predict(bits), abs=1e-12)
        assert energy(shifted, b) == pytest.approx(
            model.predict(bits) + 0.25 * b.sum(), abs=1e-12)


# ------------------------------------------------------------------- sample set

def test_sample_set_rejects_wrong_width():
    data = SampleSet(m=3)
    with pytest.raises(ValueError):
        data.add(StationConfig((1, 0)), 1.0)


def test_design_matrix_shape():
    data = _filled_sample_set(3, np.zeros(7))
    assert data.design_matrix().shape == (8, 7)
    assert data.score_vector().shape == (8,)


# ------------------------------------------------------------------------ fits

def test_ridge_mean_recovers_noiseless_truth():
    m = 5
    rng = np.random.default_rng(7)
    truth = rng.normal(scale=2.0, size=n_features(m))
    data = _filled_sample_set(m, truth)
    alpha = posterior_mean(data, PriorConfig(kind="ridge"))
    assert np.max(np.abs(alpha - truth)) < 1e-3


def test_ridge_mean_matches_lstsq():
    m = 4
    rng = np.random.default_rng(3)
    truth = rng.normal(size=n_features(m))
    data = _filled_sample_set(m, truth)
    expected = oracles.lstsq_coeffs([c.bits for c in data.configs], data.scores)
    alpha = posterior_mean(data, PriorConfig(kind="ridge", ridge_delta=1e-8))
    assert np.allclose(alpha, expected, atol=1e-6)


def test_horseshoe_mean_recovers_sparse_signal():
    m = 4
    truth = np.zeros(n_features(m))
    truth[1] = 4.0  # single active linear term
    data = _filled_sample_set(m, truth)
    alpha = posterior_mean(data, PriorConfig(kind="horseshoe"), seed=11)
    assert abs(alpha[1] - 4.0) < 0.2
    assert np.max(np.abs(np.delete(alpha, 1))) < 0.2


def test_thompson_draw_deterministic():
    m = 3
    data = _filled_sample_set(m, np.arange(7, dtype=float))
    a = fit_posterior_sample(data, seed=5)
    b = fit_posterior_sample(data, seed=5)
    c = fit_posterior_sample(data, seed=6)
    assert np.array_equal(a.alpha, b.alpha)
    assert not np.array_equal(a.alpha, c.alpha)


def test_fit_survives_single_sample():
    data = SampleSet(m=3)
    data.add(StationConfig((1, 0, 1)), 2.5)
    for kind in ("horseshoe", "ridge"):
        model = fit_posterior_sample(data, PriorConfig(kind=kind), seed=0)
        assert np.all(np.isfinite(model.alpha))


def test_fit_survives_degenerate_repeats():
    data = SampleSet(m=3)
    for _ in range(6):
        data.add(StationConfig((1, 1, 0)), 1.0)
    for kind in ("horseshoe", "ridge"):
        model = fit_posterior_sample(data, PriorConfig(kind=kind), seed=1)
        assert np.all(np.isfinite(model.alpha))
        mean = posterior_mean(data, PriorConfig(kind=kind), seed=1)
        assert np.all(np.isfinite(mean))


def test_ridge_draws_spread_around_truth():
    m = 3
    truth = np.array([1.0, -2.0, 0.5, 0.0, 0.0, 3.0, 0.0])
    data = _filled_sample_set(m, truth)
    draws = np.array([
        fit_posterior_sample(data, PriorConfig(kind="ridge"), seed=s).alpha
        for s in range(8)
    ])
    # noiseless design: every draw concentrates near the posterior mean
    assert np.max(np.abs(draws - truth)) < 0.2


# ----------------------------------------------------------------- acquisition

def _brute_argmin(model, station_cost=0.0):
    best_e, best_bits = math.inf, None
    for bits in _all_configs(model.m):
        e = model.predict(bits) + station_cost * sum(bits)
        if e < best_e:
            best_e, best_bits = e, bits
    return best_bits


def test_acquire_matches_brute_force_m10():
    rng = np.random.default_rng(2)
    m = 10
    model = SurrogateModel(m=m, alpha=rng.normal(size=n_features(m)))
    assert acquire(model).bits == _brute_argmin(model)


@settings(max_examples=40, deadline=None)
@given(m=st.integers(1, 6), data=st.data())
def test_acquire_matches_brute_force_property(m, data):
    # integer coefficients force exact ties; the lowest code must win
    coeffs = data.draw(st.lists(st.integers(-2, 2), min_size=n_features(m),
                                max_size=n_features(m)))
    model = SurrogateModel(m=m, alpha=np.array(coeffs, dtype=float))
    assert acquire(model).bits == _brute_argmin(model)


def test_acquire_positive_costs_pick_empty():
    m = 6
    alpha = np.zeros(n_features(m))
    alpha[1:1 + m] = 1.0
    assert acquire(SurrogateModel(m=m, alpha=alpha)).bits == (0,) * m


def test_acquire_intercept_only_ties_to_zero():
    m = 5
    alpha = np.zeros(n_features(m))
    alpha[0] = 42.0
    assert acquire(SurrogateModel(m=m, alpha=alpha)).bits == (0,) * m


def test_station_cost_steers_acquisition():
    m = 4
    model = SurrogateModel(m=m, alpha=np.zeros(n_features(m)))
    assert acquire(model, station_cost=1.0).bits == (0,) * m
    assert acquire(model, station_cost=-1.0).bits == (1,) * m


def test_acquire_sa_agrees_on_small_model():
    rng = np.random.default_rng(9)
    m = 8
    model = SurrogateModel(m=m, alpha=rng.normal(size=n_features(m)))
    exact = acquire(model, "exhaustive")
    annealed = acquire(model, "sa", seed=4)
    assert model.predict(annealed.bits) == pytest.approx(
        model.predict(exact.bits), rel=1e-9)


def test_acquire_cap_names_escape_hatch():
    m = 21
    model = SurrogateModel(m=m, alpha=np.zeros(n_features(m)))
    with pytest.raises(ValueError, match="sa"):
        acquire(model, "exhaustive")


def test_acquire_unknown_method():
    model = SurrogateModel(m=2, alpha=np.zeros(n_features(2)))
    with pytest.raises(ValueError, match="unknown"):
        acquire(model, "gradient")


# ------------------------------------------------------------------ parameters

def test_params_validation():
    with pytest.raises(ValueError):
        BocsParams(n_search=-1)
    with pytest.raises(ValueError):
        BocsParams(n_init=0)
    with pytest.raises(ValueError):
        BocsParams(acquisition="none")
    with pytest.raises(ValueError):
        PriorConfig(kind="lasso")
    with pytest.raises(ValueError):
        PriorConfig(gibbs_steps=0)
    with pytest.raises(ValueError):
        PriorConfig(ridge_delta=0.0)


# ----------------------------------------------------------------- search loop

_FAST = SaSchedule(sweeps=300, restarts=2)


def _small_params(**overrides):
    base = dict(n_search=3, n_init=2, seed=0,
                prior=PriorConfig(kind="ridge"))
    base.update(overrides)
    return BocsParams(**base)


def test_run_bocs_record_shape():
    inst = generate_instance(GenParams(n=4, m=3, seed=0))
    hist = run_bocs(inst, _small_params(), schedule=_FAST)
    assert len(hist.records) == 5
    assert [r.index for r in hist.records] == list(range(5))
    assert [r.phase for r in hist.records] == ["init"] * 2 + ["search"] * 3
    for r in hist.records:
        assert r.y == pytest.approx(r.a + r.b)


def test_best_so_far_is_running_min():
    inst = generate_instance(GenParams(n=4, m=3, seed=1))
    hist = run_bocs(inst, _small_params(seed=2), schedule=_FAST)
    running = math.inf
    for r in hist.records:
        running = min(running, r.y)
        assert r.best_so_far == running
    assert hist.final_best == min(r.y for r in hist.records)
    assert hist.best_evaluation.y == hist.final_best
    assert any(r.config == hist.best_config and r.y == hist.final_best
               for r in hist.records)


def test_curve_non_increasing():
    inst = generate_instance(GenParams(n=5, m=4, seed=3))
    hist = run_bocs(inst, _small_params(n_search=5, seed=4), schedule=_FAST)
    curve = hist.best_so_far_curve()
    assert np.all(np.diff(curve) <= 0.0)


def test_minimal_budget_two_records():
    inst = generate_instance(GenParams(n=4, m=2, seed=5))
    hist = run_bocs(inst, _small_params(n_search=1, n_init=1), schedule=_FAST)
    assert len(hist.records) == 2
    assert hist.final_best == min(r.y for r in hist.records)


def test_zero_search_budget_keeps_init_only():
    inst = generate_instance(GenParams(n=4, m=2, seed=6))
    hist = run_bocs(inst, _small_params(n_search=0), schedule=_FAST)
    assert len(hist.records) == 2
    assert all(r.phase == "init" for r in hist.records)


def test_duplicate_proposals_still_counted():
    # one candidate bit: proposals must repeat, and every repeat is evaluated
    inst = generate_instance(GenParams(n=4, m=1, seed=7))
    hist = run_bocs(inst, _small_params(n_search=4, n_init=1), schedule=_FAST)
    assert len(hist.records) == 5


def test_run_bocs_deterministic():
    inst = generate_instance(GenParams(n=4, m=3, seed=8))
    a = run_bocs(inst, _small_params(seed=9), schedule=_FAST)
    b = run_bocs(inst, _small_params(seed=9), schedule=_FAST)
    assert a.records == b.records


def test_baseline_shares_init_phase():
    inst = generate_instance(GenParams(n=4, m=3, seed=10))
    params = _small_params(seed=11)
    guided = run_bocs(inst, params, schedule=_FAST)
    uniform = run_random_search(inst, params, schedule=_FAST)
    assert guided.records[:2] == uniform.records[:2]
    assert len(uniform.records) == 5
