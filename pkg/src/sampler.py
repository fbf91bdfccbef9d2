"""
Échantillonneur Hamiltonien (HMC) pour la densité a posteriori

- intégration saute-mouton sur l'échelle non contrainte ;
- nombre de pas tiré uniformément dans [1, max_leapfrog_depth * base_leapfrog_steps] ;
- pas adapté pendant le rodage par moyenne duale vers target_accept ;
- métrique diagonale estimée sur des fenêtres de rodage de taille croissante ;
- un générateur par chaîne, graine (seed, indice de chaîne) : tirages reproductibles.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Protocol, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .errors import NonFiniteDensity
from .logbook import PreparedDataset
from .model import ModelConfig, Posterior
from .trace import PosteriorTrace, grade_name

logger = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1000.0
DIVERGENCE_STORM_FRACTION = 0.10


class SamplerConfig(BaseModel):
    chains: int = Field(default=4, ge=1)
    warmup_iters: int = Field(default=1000, ge=0)
    sampling_iters: int = Field(default=1000, ge=1)
    seed: int = Field(default=20160801, ge=0, lt=2 ** 64)
    target_accept: float = Field(default=0.8, gt=0, lt=1)
    max_leapfrog_depth: int = Field(default=10, ge=1)
    base_leapfrog_steps: int = Field(default=5, ge=1)
    adapt: bool = True
    init_jitter: float = Field(default=0.1, ge=0)

    @model_validator(mode="after")
    def _enough_warmup(self) -> "SamplerConfig":
        if self.adapt and self.warmup_iters < 100:
            raise ValueError("warmup_iters doit être >= 100 quand l'adaptation est active")
        return self

    @property
    def max_steps(self) -> int:
        return self.max_leapfrog_depth * self.base_leapfrog_steps


class Target(Protocol):
    dim: int

    def log_density_and_gradient(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        ...


class DualAveraging:
    """Adaptation du pas par moyenne duale (gamma 0.05, t0 10, kappa 0.75)"""

    def __init__(self, step_size: float, target_accept: float,
                 gamma: float = 0.05, t0: float = 10.0, kappa: float = 0.75):
        self.target_accept = target_accept
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.restart(step_size)

    def restart(self, step_size: float) -> None:
        self.mu = math.log(10.0 * step_size)
        self.h_bar = 0.0
        self.log_step_bar = 0.0
        self.count = 0

    def update(self, accept_stat: float) -> float:
        self.count += 1
        eta = 1.0 / (self.count + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target_accept - accept_stat)
        log_step = self.mu - math.sqrt(self.count) / self.gamma * self.h_bar
        weight = self.count ** -self.kappa
        self.log_step_bar = weight * log_step + (1.0 - weight) * self.log_step_bar
        return math.exp(log_step)

    @property
    def final_step_size(self) -> float:
        return math.exp(self.log_step_bar)


class WelfordVariance:
    def __init__(self, dim: int):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def add(self, x: np.ndarray) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def regularized(self) -> np.ndarray:
        variance = self.m2 / max(self.n - 1, 1)
        return (self.n / (self.n + 5.0)) * variance + 1e-3 * (5.0 / (self.n + 5.0))


def adaptation_windows(warmup: int) -> Tuple[int, int, List[int]]:
    """(début, fin, fins de fenêtres) des fenêtres lentes d'estimation de la métrique"""
    init_buffer, term_buffer, base_window = 75, 50, 25
    if init_buffer + term_buffer + base_window > warmup:
        init_buffer = int(0.15 * warmup)
        term_buffer = int(0.1 * warmup)
        base_window = warmup - init_buffer - term_buffer
    slow_end = warmup - term_buffer
    ends = []
    start, size = init_buffer, base_window
    while start < slow_end:
        end = start + size
        if end + 2 * size > slow_end:
            end = slow_end
        ends.append(end)
        start, size = end, 2 * size
    return init_buffer, slow_end, ends


@dataclass
class ChainResult:
    draws: np.ndarray
    accept_stats: np.ndarray
    divergent: np.ndarray
    n_steps: np.ndarray
    step_size: float
    inv_metric: np.ndarray


def _leapfrog(target: Target, theta, momentum, grad, step_size, inv_metric, n_steps):
    """Trajectoire complète ; s'arrête dès que la densité devient non finie"""
    theta = theta.copy()
    momentum = momentum + 0.5 * step_size * grad
    logp = -np.inf
    for i in range(n_steps):
        theta += step_size * inv_metric * momentum
        logp, grad = target.log_density_and_gradient(theta)
        if not np.isfinite(logp) or not np.all(np.isfinite(grad)):
            return theta, momentum, -np.inf, grad
        if i < n_steps - 1:
            momentum = momentum + step_size * grad
    momentum = momentum + 0.5 * step_size * grad
    return theta, momentum, logp, grad


def _kinetic(momentum, inv_metric) -> float:
    return 0.5 * float(np.dot(momentum, inv_metric * momentum))


def _initial_step_size(target, theta, logp, grad, inv_metric, rng) -> float:
    """Heuristique : double ou divise le pas jusqu'à franchir une acceptation de 1/2"""
    step = 1.0
    momentum = rng.standard_normal(theta.size) / np.sqrt(inv_metric)
    h0 = -logp + _kinetic(momentum, inv_metric)

    def accept_prob(step):
        _, p_new, logp_new, _ = _leapfrog(target, theta, momentum, grad, step, inv_metric, 1)
        delta = h0 - (-logp_new + _kinetic(p_new, inv_metric)) if np.isfinite(logp_new) else -np.inf
        if not np.isfinite(delta):
            return 0.0
        return math.exp(min(0.0, delta))

    prob = accept_prob(step)
    direction = 1 if prob > 0.5 else -1
    for _ in range(100):
        if direction == 1 and not prob > 0.5 or direction == -1 and not prob <= 0.5:
            break
        step *= 2.0 ** direction
        prob = accept_prob(step)
    return step


def run_chain(target: Target, theta0: np.ndarray, config: SamplerConfig,
              rng: np.random.Generator, chain_index: int = 0) -> ChainResult:
    """Une chaîne : rodage (adaptation) puis échantillonnage"""
    theta = np.asarray(theta0, dtype=float).copy()
    dim = theta.size
    logp, grad = target.log_density_and_gradient(theta)
    if not np.isfinite(logp) or not np.all(np.isfinite(grad)):
        raise NonFiniteDensity(f"Densité non finie au point initial (chaîne {chain_index})")

    inv_metric = np.ones(dim)
    step_size = _initial_step_size(target, theta, logp, grad, inv_metric, rng)
    adapter = DualAveraging(step_size, config.target_accept)
    warmup = config.warmup_iters if config.adapt else 0
    slow_start, slow_end, window_ends = adaptation_windows(warmup) if warmup else (0, 0, [])
    variance = WelfordVariance(dim)

    n_total = config.warmup_iters + config.sampling_iters
    draws = np.empty((config.sampling_iters, dim))
    accept_stats = np.empty(config.sampling_iters)
    divergent = np.zeros(config.sampling_iters, dtype=bool)
    n_steps_kept = np.empty(config.sampling_iters, dtype=np.int64)

    for iteration in range(n_total):
        n_steps = int(rng.integers(1, config.max_steps + 1))
        momentum = rng.standard_normal(dim) / np.sqrt(inv_metric)
        h0 = -logp + _kinetic(momentum, inv_metric)
        theta_new, p_new, logp_new, grad_new = _leapfrog(
            target, theta, momentum, grad, step_size, inv_metric, n_steps)
        h1 = -logp_new + _kinetic(p_new, inv_metric) if np.isfinite(logp_new) else np.inf
        energy_error = h1 - h0
        is_divergent = not np.isfinite(energy_error) or energy_error > DIVERGENCE_THRESHOLD
        accept_stat = 0.0 if is_divergent else math.exp(min(0.0, -energy_error))
        if not is_divergent and rng.random() < accept_stat:
            theta, logp, grad = theta_new, logp_new, grad_new

        if iteration < warmup:
            step_size = adapter.update(accept_stat)
            if slow_start <= iteration < slow_end:
                variance.add(theta)
            if iteration + 1 in window_ends:
                inv_metric = variance.regularized()
                variance = WelfordVariance(dim)
                step_size = _initial_step_size(target, theta, logp, grad, inv_metric, rng)
                adapter.restart(step_size)
            if iteration + 1 == warmup:
                step_size = adapter.final_step_size
                logger.debug(f"Chaîne {chain_index} : rodage terminé, pas {step_size:.4g}",
                             extra={"chain": chain_index, "step_size": step_size})
        elif iteration >= config.warmup_iters:
            k = iteration - config.warmup_iters
            draws[k] = theta
            accept_stats[k] = accept_stat
            divergent[k] = is_divergent
            n_steps_kept[k] = n_steps

    return ChainResult(draws=draws, accept_stats=accept_stats, divergent=divergent,
                       n_steps=n_steps_kept, step_size=step_size, inv_metric=inv_metric)


def chain_generator(seed: int, chain_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, chain_index]))


def initial_vector(posterior: Posterior, model_config: ModelConfig, config: SamplerConfig,
                   rng: np.random.Generator) -> np.ndarray:
    """Cotes à la moyenne a priori plus un léger bruit, m à sa moyenne a priori"""
    grades = model_config.grade_prior_mean + config.init_jitter * rng.standard_normal(
        posterior.n_climbers * posterior.n_pages)
    if posterior.fixed_m is not None:
        return grades
    m0 = model_config.m_prior_mean if model_config.m_prior_mean > 0 else 0.69
    return np.concatenate(([math.log(m0)], grades))


def sample(data: PreparedDataset, model_config: ModelConfig, sampler_config: SamplerConfig,
           threads: int = 1) -> PosteriorTrace:
    """Tire des échantillons a posteriori de (m, cotes) ; chaînes en parallèle si threads > 1"""
    posterior = Posterior(data, model_config)
    logger.info(
        f"Échantillonnage : {sampler_config.chains} chaîne(s), dimension {posterior.dim}",
        extra={"chains": sampler_config.chains, "warmup": sampler_config.warmup_iters,
               "samples": sampler_config.sampling_iters, "seed": sampler_config.seed},
    )

    def run(chain_index: int) -> ChainResult:
        rng = chain_generator(sampler_config.seed, chain_index)
        theta0 = initial_vector(posterior, model_config, sampler_config, rng)
        return run_chain(posterior, theta0, sampler_config, rng, chain_index)

    chain_indices = range(sampler_config.chains)
    if threads > 1 and sampler_config.chains > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, chain_indices))
    else:
        results = [run(i) for i in chain_indices]

    return _assemble_trace(posterior, data, results)


def _assemble_trace(posterior: Posterior, data: PreparedDataset,
                    results: List[ChainResult]) -> PosteriorTrace:
    unconstrained = np.concatenate([r.draws for r in results])
    if posterior.fixed_m is not None:
        m_column = np.full((unconstrained.shape[0], 1), posterior.fixed_m)
        draws = np.hstack([m_column, unconstrained])
    else:
        draws = np.hstack([np.exp(unconstrained[:, :1]), unconstrained[:, 1:]])

    names = ["m"] + [grade_name(c, page) for c in data.climbers
                     for page in range(1, data.n_pages + 1)]
    chain_ids = np.concatenate([np.full(r.draws.shape[0], i) for i, r in enumerate(results)])

    divergences = int(sum(r.divergent.sum() for r in results))
    n_kept = int(unconstrained.shape[0])
    diagnostics = {
        "step_sizes": [r.step_size for r in results],
        "mean_accept_stat": [float(r.accept_stats.mean()) for r in results],
        "divergences": divergences,
        "mean_leapfrog_steps": [float(r.n_steps.mean()) for r in results],
        "divergence_storm": divergences > DIVERGENCE_STORM_FRACTION * n_kept,
    }
    if diagnostics["divergence_storm"]:
        logger.warning(
            f"Tempête de divergences : {divergences} transitions divergentes sur {n_kept}",
            extra={"divergences": divergences, "draws": n_kept},
        )
    logger.info("Échantillonnage terminé", extra={"divergences": divergences})
    return PosteriorTrace(names=names, draws=draws, chain_ids=chain_ids, diagnostics=diagnostics)
