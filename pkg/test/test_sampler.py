"""
Tests de l'échantillonneur HMC : oracles par quadrature, reproductibilité, adaptation
"""
import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.integrate import trapezoid
from scipy.special import log_expit
from scipy.stats import norm

from src.logbook import PreparedDataset, paginate
from src.model import ModelConfig
from src.sampler import (
    SamplerConfig,
    adaptation_windows,
    chain_generator,
    run_chain,
    sample,
)
from src.simulate import SimSpec, simulate
from src.trace import summarize


def one_climber_dataset() -> PreparedDataset:
    """20 ascensions d'un grimpeur sur une page, voies de 14 à 23"""
    x = np.tile(np.arange(14.0, 24.0), 2)
    y = np.array([1, 1, 1, 1, 1, 0, 1, 0, 0, 0,
                  1, 1, 1, 0, 1, 1, 0, 0, 1, 0])
    return PreparedDataset(
        climbers=["c0"], n_pages=1, min_page=np.array([1]), max_page=np.array([1]),
        y=y, page=np.ones(20, dtype=np.int64), climber_index=np.zeros(20, dtype=np.int64), x=x)


def grid_moments(log_density, grid):
    log_p = log_density(grid)
    weights = np.exp(log_p - log_p.max())
    weights /= trapezoid(weights, grid)
    mean = trapezoid(grid * weights, grid)
    sd = math.sqrt(trapezoid((grid - mean) ** 2 * weights, grid))
    return mean, sd


class StandardNormal:
    def __init__(self, dim):
        self.dim = dim

    def log_density_and_gradient(self, theta):
        return -0.5 * float(theta @ theta), -theta


def test_sampler_config_validation():
    with pytest.raises(ValidationError):
        SamplerConfig(warmup_iters=50)
    assert SamplerConfig(warmup_iters=0, adapt=False).warmup_iters == 0
    with pytest.raises(ValidationError):
        SamplerConfig(target_accept=1.0)


def test_adaptation_windows_cover_warmup():
    start, end, ends = adaptation_windows(1000)
    assert (start, end) == (75, 950)
    assert ends == [100, 150, 250, 450, 950]
    start, end, ends = adaptation_windows(100)
    assert 0 < start < end <= 100 and ends[-1] == end


def test_quadrature_oracle_with_fixed_m():
    """Un grimpeur, une page, m figé : moyenne et écart-type contre quadrature"""
    data = one_climber_dataset()
    m = 0.69

    def log_density(grid):
        logit = m * (grid[:, None] - data.x[None, :])
        loglik = np.where(data.y[None, :] == 1, log_expit(logit), log_expit(-logit)).sum(axis=1)
        return norm.logpdf(grid, 18.0, 5.0) + loglik

    mean, sd = grid_moments(log_density, np.linspace(0.0, 40.0, 4001))
    trace = sample(data, ModelConfig(fixed_m=m),
                   SamplerConfig(chains=4, warmup_iters=1000, sampling_iters=4000, seed=11))
    draws = trace.column("grade[c0][1]")
    assert np.all(trace.column("m") == m)
    assert abs(draws.mean() - mean) < 0.05
    assert abs(draws.std() - sd) < 0.02


def test_prior_only_m_matches_truncated_normal():
    """Sans ascension, m suit N(0.69, 0.3) tronquée à m > 0"""
    data = PreparedDataset(
        climbers=["c0"], n_pages=1, min_page=np.array([1]), max_page=np.array([1]),
        y=np.zeros(0, dtype=np.int64), page=np.zeros(0, dtype=np.int64),
        climber_index=np.zeros(0, dtype=np.int64), x=np.zeros(0))
    mean, _ = grid_moments(lambda g: norm.logpdf(g, 0.69, 0.3), np.linspace(1e-9, 4.0, 40001))
    trace = sample(data, ModelConfig(), SamplerConfig(chains=4, warmup_iters=1000, sampling_iters=2000, seed=5))
    m_summary = next(s for s in summarize(trace) if s.name == "m")
    assert np.all(trace.column("m") > 0)
    standard_error = m_summary.sd / math.sqrt(m_summary.ess)
    assert abs(m_summary.mean - mean) < 3 * standard_error


def test_same_seed_gives_identical_draws():
    data = one_climber_dataset()
    config = SamplerConfig(chains=2, warmup_iters=150, sampling_iters=100, seed=3)
    first = sample(data, ModelConfig(), config)
    second = sample(data, ModelConfig(), config)
    np.testing.assert_array_equal(first.draws, second.draws)
    threaded = sample(data, ModelConfig(), config, threads=2)
    np.testing.assert_array_equal(first.draws, threaded.draws)
    other = sample(data, ModelConfig(), config.model_copy(update={"seed": 4}))
    assert not np.array_equal(first.draws, other.draws)


def test_trace_shape_and_labels():
    data = one_climber_dataset()
    trace = sample(data, ModelConfig(), SamplerConfig(chains=3, warmup_iters=100, sampling_iters=50, seed=1))
    assert trace.draws.shape == (150, 2)
    assert trace.names == ["m", "grade[c0][1]"]
    assert list(np.unique(trace.chain_ids)) == [0, 1, 2]
    assert np.all(trace.column("m") > 0)
    assert set(trace.diagnostics) >= {"step_sizes", "divergences", "divergence_storm"}


def test_acceptance_statistic_on_standard_normal():
    """Statistique d'acceptation après rodage proche de target_accept"""
    config = SamplerConfig(chains=1, warmup_iters=1000, sampling_iters=1000, target_accept=0.8)
    rng = chain_generator(123, 0)
    result = run_chain(StandardNormal(100), rng.standard_normal(100), config, rng)
    assert 0.7 <= result.accept_stats.mean() <= 0.9
    assert not result.divergent.any()
    assert abs(result.draws.mean()) < 0.1
    assert result.draws.var() == pytest.approx(1.0, abs=0.15)


def test_sampling_simulated_logbook_stays_finite():
    """Carnet simulé : aucune exception, tirages finis et m strictement positif"""
    spec = SimSpec(n_climbers=4, n_pages=6, seed=3)
    records, _ = simulate(spec)
    data = paginate(records, spec.window_start, spec.window_end)
    trace = sample(data, ModelConfig(), SamplerConfig(chains=2, warmup_iters=150, sampling_iters=100, seed=3))
    assert np.all(np.isfinite(trace.draws))
    assert np.all(trace.column("m") > 0)
