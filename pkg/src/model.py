"""
Modèle de Bradley-Terry dynamique : densité a posteriori de (m, cotes des
grimpeurs), son gradient analytique et la reparamétrisation non contrainte.

Densité (à constantes gaussiennes près, conservées partout) :
  m ~ N(m_prior_mean, m_prior_sd), m > 0
  cote[j, i] ~ N(grade_prior_mean, grade_prior_sd)  pour i <= min_page[j] ou i > max_page[j]
  cote[j, i] ~ N(cote[j, i-1], walk_sd)              pour min_page[j] < i <= max_page[j]
  y ~ Bernoulli(logit^-1(m * (cote[c, page] - x)))

Côté non contraint, le vecteur est (log m, cotes aplaties ligne par ligne) et
la densité reçoit le jacobien log m.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.optimize import minimize
from scipy.special import expit

from .errors import DimensionMismatch, DomainError, NoData, NonFiniteDensity
from .logbook import PreparedDataset

logger = logging.getLogger(__name__)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class ModelConfig(BaseModel):
    """Hyperparamètres des lois a priori"""

    m_prior_mean: float = 0.69
    m_prior_sd: float = Field(default=0.3, gt=0)
    grade_prior_mean: float = 18.0
    grade_prior_sd: float = Field(default=5.0, gt=0)
    walk_sd: float = Field(default=0.5, gt=0)
    # Masse ponctuelle sur m : seules les cotes sont alors échantillonnées
    fixed_m: Optional[float] = Field(default=None, gt=0)


@dataclass
class ParameterState:
    """m (> 0) et la matrice des cotes [C x P]"""

    m: float
    grades: np.ndarray

    def to_unconstrained(self) -> np.ndarray:
        return np.concatenate(([math.log(self.m)], np.asarray(self.grades, dtype=float).ravel()))

    @classmethod
    def from_unconstrained(cls, theta: np.ndarray, n_climbers: int, n_pages: int) -> "ParameterState":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (1 + n_climbers * n_pages,):
            raise DimensionMismatch(
                f"Vecteur de taille {theta.shape[0]}, attendu {1 + n_climbers * n_pages}")
        with np.errstate(over="ignore"):
            m = float(np.exp(theta[0]))
        return cls(m=m, grades=theta[1:].reshape(n_climbers, n_pages).copy())


@dataclass(frozen=True)
class DerivedScale:
    """d = e^m : facteur de difficulté par cran de cotation"""

    d: float

    @classmethod
    def from_m(cls, m: float) -> "DerivedScale":
        return cls(d=math.exp(m))


# --- Identités élémentaires ---

def p_send(climber_grade: float, route_grade: float, m: float) -> float:
    """Probabilité de réussite 1 / (1 + e^{m(R - C)})"""
    return float(expit(m * (climber_grade - route_grade)))


def expected_failures(p: float) -> float:
    """Nombre moyen d'échecs avant la réussite : (1 - p) / p"""
    if not 0.0 < p <= 1.0:
        raise DomainError(f"Probabilité hors de ]0, 1] : {p}")
    return 1.0 / p - 1.0


def p_from_failures(expected: float) -> float:
    """Inverse de expected_failures : 1 / (E + 1)"""
    if expected < 0:
        raise DomainError(f"Nombre d'échecs négatif : {expected}")
    return 1.0 / (expected + 1.0)


def _normal_logpdf(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * z * z - math.log(sd) - _LOG_SQRT_2PI


class Posterior:
    """Densité a posteriori liée à un jeu de données et une configuration

    Les masques de lois a priori et les indices aplatis sont précalculés une
    fois ; log_density / gradient travaillent sur le vecteur non contraint.
    """

    def __init__(self, data: PreparedDataset, config: ModelConfig):
        self.data = data
        self.config = config
        self.n_climbers = data.n_climbers
        self.n_pages = data.n_pages
        if self.n_climbers < 1 or self.n_pages < 1:
            raise NoData("Le jeu de données ne contient aucun grimpeur")

        C, P = self.n_climbers, self.n_pages
        positions = np.arange(P)[None, :]
        # Positions (base 0) suivant une page de la marche : min_page <= i < max_page
        self.walk_mask = (positions >= data.min_page[:, None]) & (positions < data.max_page[:, None])
        self.independent_mask = ~self.walk_mask
        self.flat_index = data.climber_index * P + (data.page - 1)
        self.y = data.y.astype(float)
        self.x = data.x.astype(float)

    @property
    def fixed_m(self) -> Optional[float]:
        return self.config.fixed_m

    @property
    def dim(self) -> int:
        """Dimension du vecteur échantillonné"""
        grades = self.n_climbers * self.n_pages
        return grades if self.fixed_m is not None else 1 + grades

    def check_state(self, state: ParameterState) -> None:
        shape = np.shape(state.grades)
        if shape != (self.n_climbers, self.n_pages):
            raise DimensionMismatch(
                f"Matrice de cotes {shape}, attendu ({self.n_climbers}, {self.n_pages})")

    # --- Composantes ---

    def log_prior_m(self, m: float) -> float:
        return float(_normal_logpdf(m, self.config.m_prior_mean, self.config.m_prior_sd))

    def log_prior_grades(self, grades: np.ndarray) -> float:
        cfg = self.config
        independent = _normal_logpdf(grades[self.independent_mask],
                                     cfg.grade_prior_mean, cfg.grade_prior_sd).sum()
        steps = grades[:, 1:] - grades[:, :-1]
        walk = _normal_logpdf(steps[self.walk_mask[:, 1:]], 0.0, cfg.walk_sd).sum()
        return float(independent + walk)

    def log_likelihood(self, m: float, grades: np.ndarray) -> float:
        logit = m * (grades.ravel()[self.flat_index] - self.x)
        return float(np.sum(self.y * logit - np.logaddexp(0.0, logit)))

    # --- Gradients des composantes (échelle contrainte) ---

    def _grad_grade_prior(self, grades: np.ndarray) -> np.ndarray:
        cfg = self.config
        grad = np.where(self.independent_mask,
                        -(grades - cfg.grade_prior_mean) / cfg.grade_prior_sd ** 2, 0.0)
        pull = np.zeros_like(grades)
        pull[:, 1:] = np.where(self.walk_mask[:, 1:],
                               (grades[:, 1:] - grades[:, :-1]) / cfg.walk_sd ** 2, 0.0)
        grad -= pull
        grad[:, :-1] += pull[:, 1:]
        return grad

    def _grad_likelihood(self, m: float, grades: np.ndarray) -> Tuple[float, np.ndarray]:
        difference = grades.ravel()[self.flat_index] - self.x
        residual = self.y - expit(m * difference)
        d_m = float(np.dot(residual, difference))
        # Sans ascension, bincount renvoie des entiers
        d_grades = np.bincount(self.flat_index, weights=m * residual,
                               minlength=self.n_climbers * self.n_pages).astype(float)
        return d_m, d_grades.reshape(self.n_climbers, self.n_pages)

    # --- Densité jointe ---

    def log_posterior(self, state: ParameterState, jacobian: bool = False) -> float:
        self.check_state(state)
        grades = np.asarray(state.grades, dtype=float)
        total = (self.log_prior_m(state.m) + self.log_prior_grades(grades)
                 + self.log_likelihood(state.m, grades))
        if jacobian:
            total += math.log(state.m)
        return total

    def grad_unconstrained(self, state: ParameterState) -> np.ndarray:
        """Gradient exact par rapport à (log m, cotes), jacobien compris"""
        self.check_state(state)
        grades = np.asarray(state.grades, dtype=float)
        d_m, d_grades = self._grad_likelihood(state.m, grades)
        d_m -= (state.m - self.config.m_prior_mean) / self.config.m_prior_sd ** 2
        d_grades += self._grad_grade_prior(grades)
        return np.concatenate(([state.m * d_m + 1.0], d_grades.ravel()))

    # --- Interface de l'échantillonneur ---

    def state_from_vector(self, theta: np.ndarray) -> ParameterState:
        if self.fixed_m is not None:
            return ParameterState(m=self.fixed_m,
                                  grades=np.asarray(theta, dtype=float).reshape(self.n_climbers, self.n_pages))
        return ParameterState.from_unconstrained(theta, self.n_climbers, self.n_pages)

    def vector_from_state(self, state: ParameterState) -> np.ndarray:
        if self.fixed_m is not None:
            return np.asarray(state.grades, dtype=float).ravel().copy()
        return state.to_unconstrained()

    def log_density_and_gradient(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        """Log-densité non contrainte et son gradient (m figé : cotes seules)

        Hors du domaine (m nul ou infini après exponentiation, densité non
        finie) la valeur est -inf et le gradient NaN : le point est rejeté.
        """
        state = self.state_from_vector(theta)
        outside = (-np.inf, np.full(np.shape(theta), np.nan))
        if not 0.0 < state.m < np.inf:
            return outside
        with np.errstate(all="ignore"):
            if self.fixed_m is not None:
                grades = state.grades
                value = self.log_prior_grades(grades) + self.log_likelihood(state.m, grades)
                _, d_grades = self._grad_likelihood(state.m, grades)
                grad = (d_grades + self._grad_grade_prior(grades)).ravel()
            else:
                value = self.log_posterior(state, jacobian=True)
                grad = self.grad_unconstrained(state)
        if not np.isfinite(value):
            return outside
        return value, grad


# --- Fonctions de haut niveau ---

def log_posterior(state: ParameterState, data: PreparedDataset, config: ModelConfig,
                  jacobian: bool = False) -> float:
    """Log-densité a posteriori (échelle contrainte ; jacobien en option)"""
    return Posterior(data, config).log_posterior(state, jacobian=jacobian)


def grad_log_posterior(state: ParameterState, data: PreparedDataset, config: ModelConfig) -> np.ndarray:
    """Gradient analytique sur l'échelle non contrainte (dimension 1 + C*P)"""
    return Posterior(data, config).grad_unconstrained(state)


def likelihood_component(state: ParameterState, data: PreparedDataset) -> float:
    """Somme Bernoulli-logit seule, sans lois a priori"""
    posterior = Posterior(data, ModelConfig())
    posterior.check_state(state)
    return posterior.log_likelihood(state.m, np.asarray(state.grades, dtype=float))


def find_posterior_mode(data: PreparedDataset, config: ModelConfig,
                        initial: Optional[ParameterState] = None) -> ParameterState:
    """Mode a posteriori sur l'échelle non contrainte (quasi-Newton)"""
    posterior = Posterior(data, config.model_copy(update={"fixed_m": None}))
    if initial is None:
        initial = ParameterState(
            m=config.m_prior_mean if config.m_prior_mean > 0 else 0.69,
            grades=np.full((posterior.n_climbers, posterior.n_pages), config.grade_prior_mean))

    def objective(theta):
        value, grad = posterior.log_density_and_gradient(theta)
        return -value, -grad

    result = minimize(objective, posterior.vector_from_state(initial), jac=True,
                      method="BFGS", options={"gtol": 1e-10, "maxiter": 10_000})
    if not np.all(np.isfinite(result.x)):
        raise NonFiniteDensity("L'optimisation a divergé")
    logger.debug(f"Recherche du mode : {result.message} ({result.nit} itérations)")
    return posterior.state_from_vector(result.x)
