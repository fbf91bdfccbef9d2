"""
Tests de la densité a posteriori, de son gradient et des identités élémentaires
"""
import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.stats import norm

from conftest import random_dataset
from src.errors import DimensionMismatch, DomainError, NoData
from src.logbook import PreparedDataset
from src.model import (
    DerivedScale,
    ModelConfig,
    ParameterState,
    Posterior,
    expected_failures,
    find_posterior_mode,
    grad_log_posterior,
    likelihood_component,
    log_posterior,
    p_from_failures,
    p_send,
)


def empty_dataset(C=1, P=1) -> PreparedDataset:
    return PreparedDataset(
        climbers=[f"c{i}" for i in range(C)], n_pages=P,
        min_page=np.ones(C, dtype=np.int64), max_page=np.ones(C, dtype=np.int64),
        y=np.zeros(0, dtype=np.int64), page=np.zeros(0, dtype=np.int64),
        climber_index=np.zeros(0, dtype=np.int64), x=np.zeros(0))


def single_ascent(y=1, x=20.0) -> PreparedDataset:
    return PreparedDataset(
        climbers=["c0"], n_pages=1,
        min_page=np.array([1]), max_page=np.array([1]),
        y=np.array([y]), page=np.array([1]), climber_index=np.array([0]), x=np.array([x]))


def realistic_state(data: PreparedDataset, rng) -> ParameterState:
    """Trajectoires de cotes lisses autour de 18, m proche de sa moyenne a priori"""
    steps = rng.normal(0.0, 0.5, size=(data.n_climbers, data.n_pages))
    return ParameterState(m=float(rng.uniform(0.3, 1.2)), grades=18.0 + np.cumsum(steps, axis=1))


def near_routes(data: PreparedDataset, state: ParameterState, rng) -> PreparedDataset:
    """Cotations de voies à ±3 crans de la cote courante du grimpeur"""
    x = state.grades[data.climber_index, data.page - 1] + rng.uniform(-3, 3, size=data.n_ascents)
    return PreparedDataset(**{**data.__dict__, "x": x})


# --- Identités ---

def test_p_send_examples():
    assert p_send(24, 24, 0.85) == 0.5
    assert p_send(21, 20, math.log(2)) == pytest.approx(2 / 3, rel=1e-12)
    assert p_send(18, 20, math.log(2)) == pytest.approx(1 / 5, rel=1e-12)


def test_p_send_is_stable_and_symmetric():
    assert p_send(0, 700, 1.0) >= 0.0
    assert p_send(700, 0, 1.0) == 1.0
    for c, r in [(20, 23), (17.5, 12.25), (30, 30.5)]:
        assert p_send(c, r, 0.7) + p_send(r, c, 0.7) == pytest.approx(1.0, abs=1e-15)
    assert p_send(21, 20, 0.7) > p_send(20, 20, 0.7) > p_send(20, 21, 0.7)


def test_expected_failures_examples():
    assert expected_failures(0.5) == 1.0
    assert expected_failures(0.1) == 9.0
    assert p_from_failures(9) == 0.1
    assert expected_failures(1.0) == 0.0
    with pytest.raises(DomainError):
        expected_failures(0.0)


def test_expected_failures_inverts_p_from_failures():
    for e in [0.0, 0.5, 1.0, 2.0, 9.0, 123.4]:
        assert expected_failures(p_from_failures(e)) == pytest.approx(e, rel=1e-12, abs=1e-12)


def test_derived_scale():
    assert DerivedScale.from_m(math.log(2)).d == pytest.approx(2.0)
    assert DerivedScale.from_m(0.1).d > 1 and DerivedScale.from_m(-0.1).d < 1


def test_model_config_requires_positive_sd():
    with pytest.raises(ValidationError):
        ModelConfig(walk_sd=0)


# --- Densité ---

def test_zero_data_reduces_to_priors():
    data = empty_dataset()
    state = ParameterState(m=0.69, grades=np.array([[18.0]]))
    expected = -math.log(0.3 * math.sqrt(2 * math.pi)) - math.log(5 * math.sqrt(2 * math.pi))
    assert log_posterior(state, data, ModelConfig()) == pytest.approx(expected, rel=1e-12)
    assert log_posterior(state, data, ModelConfig(), jacobian=True) == pytest.approx(
        expected + math.log(0.69), rel=1e-12)


def test_zero_data_gradient_is_prior_gradient():
    data = empty_dataset()
    state = ParameterState(m=0.69, grades=np.array([[21.0]]))
    grad = grad_log_posterior(state, data, ModelConfig())
    assert grad[1] == pytest.approx(-(21.0 - 18.0) / 25.0, rel=1e-12)
    # m à sa moyenne a priori : seul reste le terme du jacobien
    assert grad[0] == pytest.approx(1.0, rel=1e-12)


def test_zero_data_gradient_through_posterior():
    posterior = Posterior(empty_dataset(C=2, P=3), ModelConfig())
    theta = ParameterState(m=0.69, grades=np.full((2, 3), 18.0)).to_unconstrained()
    value, grad = posterior.log_density_and_gradient(theta)
    assert math.isfinite(value)
    assert grad.dtype == np.float64
    assert np.all(np.isfinite(grad))


def test_equal_grades_give_log_half():
    data = single_ascent(y=1, x=20.0)
    for m in (0.1, 0.69, 3.0):
        state = ParameterState(m=m, grades=np.array([[20.0]]))
        assert likelihood_component(state, data) == pytest.approx(math.log(0.5), rel=1e-12)


def _oracle_log_posterior(state, data, cfg):
    """Somme terme à terme, écrite indépendamment"""
    total = norm.logpdf(state.m, cfg.m_prior_mean, cfg.m_prior_sd)
    for j in range(data.n_climbers):
        for i in range(1, data.n_pages + 1):
            g = state.grades[j, i - 1]
            if data.min_page[j] < i <= data.max_page[j]:
                total += norm.logpdf(g, state.grades[j, i - 2], cfg.walk_sd)
            else:
                total += norm.logpdf(g, cfg.grade_prior_mean, cfg.grade_prior_sd)
    for n in range(data.n_ascents):
        g = state.grades[data.climber_index[n], data.page[n] - 1]
        p = 1.0 / (1.0 + math.exp(-state.m * (g - data.x[n])))
        total += math.log(p) if data.y[n] == 1 else math.log(1.0 - p)
    return total


def test_log_posterior_matches_term_by_term_oracle(rng):
    cfg = ModelConfig()
    for _ in range(50):
        data = random_dataset(rng, max_climbers=2, max_pages=3, max_ascents=6)
        state = realistic_state(data, rng)
        data = near_routes(data, state, rng)
        assert log_posterior(state, data, cfg) == pytest.approx(
            _oracle_log_posterior(state, data, cfg), rel=1e-12)


def test_gradient_matches_finite_differences(rng):
    """Gradient analytique contre différences centrées (pas 1e-5) sur 100 instances"""
    cfg = ModelConfig()
    h = 1e-5
    for _ in range(100):
        data = random_dataset(rng)
        state = realistic_state(data, rng)
        data = near_routes(data, state, rng)
        posterior = Posterior(data, cfg)
        theta = state.to_unconstrained()
        _, grad = posterior.log_density_and_gradient(theta)
        for k in range(theta.size):
            step = np.zeros_like(theta)
            step[k] = h
            upper, _ = posterior.log_density_and_gradient(theta + step)
            lower, _ = posterior.log_density_and_gradient(theta - step)
            numeric = (upper - lower) / (2 * h)
            assert grad[k] == pytest.approx(numeric, rel=1e-6, abs=1e-8), k


def test_fixed_m_gradient_covers_grades_only(rng):
    data = random_dataset(rng)
    state = realistic_state(data, rng)
    posterior = Posterior(data, ModelConfig(fixed_m=0.69))
    theta = posterior.vector_from_state(ParameterState(m=0.69, grades=state.grades))
    value, grad = posterior.log_density_and_gradient(theta)
    assert grad.shape == (data.n_climbers * data.n_pages,)
    full = Posterior(data, ModelConfig())
    full_grad = full.grad_unconstrained(ParameterState(m=0.69, grades=state.grades))
    np.testing.assert_allclose(grad, full_grad[1:], rtol=1e-12)


def test_likelihood_translation_invariance(rng):
    for _ in range(100):
        data = random_dataset(rng)
        state = realistic_state(data, rng)
        delta = float(rng.normal(0, 10))
        shifted_data = PreparedDataset(**{**data.__dict__, "x": data.x + delta})
        shifted_state = ParameterState(m=state.m, grades=state.grades + delta)
        base = likelihood_component(state, data)
        assert likelihood_component(shifted_state, shifted_data) == pytest.approx(base, rel=1e-12, abs=1e-12)


def test_likelihood_scale_coupling(rng):
    for _ in range(100):
        data = random_dataset(rng)
        state = realistic_state(data, rng)
        k = float(rng.uniform(0.5, 4.0))
        # cotes et voies dilatées de k autour de 0 : les écarts le sont aussi
        scaled_data = PreparedDataset(**{**data.__dict__, "x": data.x * k})
        scaled_state = ParameterState(m=state.m / k, grades=state.grades * k)
        base = likelihood_component(state, data)
        assert likelihood_component(scaled_state, scaled_data) == pytest.approx(base, rel=1e-12, abs=1e-12)


def test_dimension_mismatch():
    data = empty_dataset(C=2, P=3)
    with pytest.raises(DimensionMismatch):
        log_posterior(ParameterState(m=0.5, grades=np.zeros((3, 2))), data, ModelConfig())
    with pytest.raises(DimensionMismatch):
        ParameterState.from_unconstrained(np.zeros(4), 2, 3)


def test_no_climbers_is_no_data():
    with pytest.raises(NoData):
        Posterior(empty_dataset(C=0), ModelConfig())


def test_unconstrained_round_trip(rng):
    state = ParameterState(m=0.8, grades=rng.normal(18, 2, size=(2, 3)))
    back = ParameterState.from_unconstrained(state.to_unconstrained(), 2, 3)
    assert back.m == pytest.approx(0.8, rel=1e-15)
    np.testing.assert_array_equal(back.grades, state.grades)


@pytest.mark.parametrize("log_m", [-800.0, 800.0])
def test_extreme_log_m_is_rejected_not_raised(log_m):
    """exp(log m) hors de (0, inf) : densité -inf et gradient NaN, le pas est refusé"""
    posterior = Posterior(single_ascent(), ModelConfig())
    value, grad = posterior.log_density_and_gradient(np.array([log_m, 18.0]))
    assert value == -np.inf
    assert grad.shape == (2,)
    assert np.all(np.isnan(grad))


def test_gradient_vanishes_at_mode(rng):
    data = random_dataset(rng, max_climbers=3, max_pages=4, max_ascents=20)
    truth = realistic_state(data, rng)
    data = near_routes(data, truth, rng)
    mode = find_posterior_mode(data, ModelConfig())
    assert np.linalg.norm(grad_log_posterior(mode, data, ModelConfig())) < 1e-6
