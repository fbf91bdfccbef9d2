"""
Traces a posteriori et leurs résumés : moyenne, médiane, écart-type,
intervalle HPD, taille d'échantillon effective et R-hat (chaînes coupées).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
import pandas as pd

from .errors import InputError, TooFewDraws
from .logbook import PreparedDataset, page_start

logger = logging.getLogger(__name__)

MIN_HPD_DRAWS = 10


@dataclass
class PosteriorTrace:
    """Tirages sur l'échelle contrainte, une ligne par itération conservée"""

    names: List[str]
    draws: np.ndarray
    chain_ids: np.ndarray
    diagnostics: Dict[str, object] = field(default_factory=dict)

    @property
    def n_chains(self) -> int:
        return int(np.unique(self.chain_ids).size)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.draws[:, self.names.index(name)]
        except ValueError:
            raise InputError(f"Paramètre inconnu dans la trace : {name}") from None

    def by_chain(self, values: np.ndarray) -> np.ndarray:
        """Matrice [chaînes x tirages] (les chaînes ont la même longueur)"""
        chains = np.unique(self.chain_ids)
        return np.stack([values[self.chain_ids == c] for c in chains])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.draws, columns=self.names)
        frame.insert(0, "chain", self.chain_ids)
        return frame

    def write_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)

    @classmethod
    def read_csv(cls, path) -> "PosteriorTrace":
        frame = pd.read_csv(path)
        return cls(names=list(frame.columns[1:]),
                   draws=frame.iloc[:, 1:].to_numpy(dtype=float),
                   chain_ids=frame["chain"].to_numpy())


@dataclass
class Summary:
    name: str
    mean: float
    median: float
    sd: float
    hpd_lower: float
    hpd_upper: float
    ess: float
    rhat: float


def hpd_interval(draws, mass: float = 0.95, min_draws: int = MIN_HPD_DRAWS):
    """Plus petit intervalle contenant ceil(mass * n) tirages triés

    À largeur égale, la borne inférieure la plus basse l'emporte.
    """
    values = np.sort(np.asarray(draws, dtype=float))
    n = values.size
    if not 0.0 < mass < 1.0:
        raise InputError(f"La masse doit être dans ]0, 1[ : {mass}")
    if n < max(min_draws, 1):
        raise TooFewDraws(f"{n} tirages, il en faut au moins {max(min_draws, 1)}")
    k = max(1, math.ceil(round(mass * n, 9)))
    widths = values[k - 1:] - values[:n - k + 1]
    start = int(np.argmin(widths))
    return float(values[start]), float(values[start + k - 1])


def _autocovariance(x: np.ndarray) -> np.ndarray:
    n = x.size
    centered = x - x.mean()
    spectrum = np.fft.rfft(centered, n=2 * n)
    return np.fft.irfft(spectrum * np.conj(spectrum), n=2 * n)[:n] / n


def effective_sample_size(chains: np.ndarray) -> float:
    """ESS multi-chaînes, troncature par séquence initiale monotone"""
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    n_chains, n_draws = chains.shape
    total = n_chains * n_draws
    if n_draws < 4 or np.ptp(chains) == 0:
        return float("nan")

    acov = np.stack([_autocovariance(chain) for chain in chains])
    mean_var = float(np.mean(acov[:, 0])) * n_draws / (n_draws - 1)
    var_plus = mean_var * (n_draws - 1) / n_draws
    if n_chains > 1:
        var_plus += float(np.var(chains.mean(axis=1), ddof=1))
    mean_acov = acov.mean(axis=0)

    rho = np.zeros(n_draws)
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - mean_acov[1]) / var_plus
    rho[0], rho[1] = rho_even, rho_odd
    t = 1
    while t < n_draws - 4 and rho_even + rho_odd > 0:
        rho_even = 1.0 - (mean_var - mean_acov[t + 1]) / var_plus
        rho_odd = 1.0 - (mean_var - mean_acov[t + 2]) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t + 1], rho[t + 2] = rho_even, rho_odd
        t += 2
    max_t = t
    if rho_even > 0:
        rho[max_t + 1] = rho_even

    for s in range(1, max_t - 2, 2):
        if rho[s + 1] + rho[s + 2] > rho[s - 1] + rho[s]:
            rho[s + 1] = (rho[s - 1] + rho[s]) / 2
            rho[s + 2] = rho[s + 1]

    tau = -1.0 + 2.0 * rho[:max_t].sum() + rho[max_t + 1]
    return float(min(total / tau, total))


def split_rhat(chains: np.ndarray) -> float:
    """Facteur de réduction d'échelle potentielle sur chaînes coupées en deux"""
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    n_draws = chains.shape[1]
    half = n_draws // 2
    if half < 2:
        return float("nan")
    if np.ptp(chains) == 0:
        return float("nan")
    halves = np.concatenate([chains[:, :half], chains[:, n_draws - half:]])
    within = float(np.mean(np.var(halves, axis=1, ddof=1)))
    between = half * float(np.var(halves.mean(axis=1), ddof=1))
    var_plus = (half - 1) / half * within + between / half
    return math.sqrt(var_plus / within)


def summarize_values(name: str, values: np.ndarray, chains: np.ndarray, mass: float = 0.95) -> Summary:
    try:
        lower, upper = hpd_interval(values, mass)
    except TooFewDraws:
        logger.warning(f"Trop peu de tirages pour l'intervalle HPD de {name}")
        lower = upper = float("nan")
    return Summary(
        name=name,
        mean=float(np.mean(values)),
        median=float(np.median(values)),
        sd=float(np.std(values, ddof=1)) if values.size > 1 else 0.0,
        hpd_lower=lower,
        hpd_upper=upper,
        ess=effective_sample_size(chains),
        rhat=split_rhat(chains),
    )


def summarize(trace: PosteriorTrace, mass: float = 0.95) -> List[Summary]:
    """Résumé par paramètre, plus d = e^m calculé tirage par tirage"""
    if trace.draws.shape[0] == 0:
        raise InputError("Trace vide")
    summaries = []
    for i, name in enumerate(trace.names):
        values = trace.draws[:, i]
        summaries.append(summarize_values(name, values, trace.by_chain(values), mass))
        if name == "m":
            d_values = np.exp(values)
            summaries.append(summarize_values("d", d_values, trace.by_chain(d_values), mass))
    return summaries


def summaries_frame(summaries: List[Summary]) -> pd.DataFrame:
    return pd.DataFrame([s.__dict__ for s in summaries])


def grade_name(climber_id: str, page: int) -> str:
    return f"grade[{climber_id}][{page}]"


def grade_paths(trace: PosteriorTrace, data: PreparedDataset, mass: float = 0.95) -> pd.DataFrame:
    """Cote de chaque grimpeur à chaque page : moyenne a posteriori et HPD"""
    rows = []
    for climber_id in data.climbers:
        for page in range(1, data.n_pages + 1):
            values = trace.column(grade_name(climber_id, page))
            try:
                lower, upper = hpd_interval(values, mass)
            except TooFewDraws:
                lower = upper = float("nan")
            rows.append({
                "climber_id": climber_id,
                "page": page,
                "month": page_start(page, data.window_start).isoformat() if data.window_start else "",
                "mean": float(np.mean(values)),
                "hpd_lower": lower,
                "hpd_upper": upper,
            })
    return pd.DataFrame(rows, columns=["climber_id", "page", "month", "mean", "hpd_lower", "hpd_upper"])
