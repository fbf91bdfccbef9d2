"""
Estimateurs par régression (sans MCMC)

- par grimpeur : log(échecs / réussites) en fonction de la cotation, la pente
  estime m et l'abscisse du log-rapport nul estime la cote du grimpeur ;
- communauté : décroissance exponentielle du nombre de réussites par cotation,
  N = e^{-r x}, avec en comparaison l'ajustement en loi de puissance.
"""
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from .errors import DegenerateDesign, InsufficientSupport, NoData
from .logbook import AscentRecord

logger = logging.getLogger(__name__)

HALDANE = 0.5

# Cotation (valeur d'axe) -> nombre de réussites
GradeHistogram = Dict[float, float]
MEAN_SLOPE_LABEL = "log-linear regression, mean of per-climber slopes"


@dataclass(frozen=True)
class GradeOddsPoint:
    grade: float
    failures: float
    successes: float

    @property
    def corrected(self) -> bool:
        return self.failures == 0

    @property
    def log_odds(self) -> float:
        """log(échecs / réussites), correction de Haldane si aucun échec"""
        if self.corrected:
            return math.log((self.failures + HALDANE) / (self.successes + HALDANE))
        return math.log(self.failures / self.successes)


@dataclass
class OddsTable:
    climber_id: str
    points: List[GradeOddsPoint]
    # Cotations sans réussite (log-rapport indéfini) et nombre d'ascensions écartées
    excluded: Dict[float, int] = field(default_factory=dict)


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int

    @property
    def zero_crossing(self) -> float:
        """Abscisse où la droite s'annule : la cote estimée du grimpeur"""
        return -self.intercept / self.slope if self.slope != 0 else float("nan")


@dataclass(frozen=True)
class CommunityFit:
    fit: RegressionFit
    excluded: Tuple[float, ...] = ()

    @property
    def decay(self) -> float:
        """r > 0 : décroissance du log du nombre de réussites par cran"""
        return -self.fit.slope


def ordinary_least_squares(x, y) -> RegressionFit:
    """Moindres carrés ordinaires de y sur x (avec constante)"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise DegenerateDesign("Au moins deux points sont nécessaires")
    if np.all(x == x[0]):
        raise DegenerateDesign("Toutes les cotations sont égales")
    design = np.column_stack([np.ones_like(x), x])
    (intercept, slope), *_ = np.linalg.lstsq(design, y, rcond=None)
    residual = y - (intercept + slope * x)
    total = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - float(np.sum(residual ** 2)) / total if total > 0 else 1.0
    return RegressionFit(slope=float(slope), intercept=float(intercept),
                         r_squared=r_squared, n_points=int(x.size))


def empirical_odds(records: Iterable[AscentRecord], climber: str) -> OddsTable:
    """Échecs et réussites par cotation tentée par un grimpeur"""
    failures: Dict[float, int] = defaultdict(int)
    successes: Dict[float, int] = defaultdict(int)
    for record in records:
        if record.climber_id != climber:
            continue
        grade = record.grade.value
        if record.success:
            successes[grade] += 1
        else:
            failures[grade] += 1
    grades = sorted(set(failures) | set(successes))
    if not grades:
        raise NoData(f"Aucune ascension pour le grimpeur {climber}")

    table = OddsTable(climber_id=climber, points=[])
    for grade in grades:
        if successes[grade] == 0:
            table.excluded[grade] = failures[grade]
            continue
        table.points.append(GradeOddsPoint(grade=grade, failures=failures[grade],
                                           successes=successes[grade]))
    if table.excluded:
        logger.debug(f"{climber} : cotations sans réussite écartées {sorted(table.excluded)}")
    return table


def fit_climber_slope(points: List[GradeOddsPoint]) -> RegressionFit:
    """Droite des log-rapports d'échec ; pente = estimation de m pour ce grimpeur"""
    return ordinary_least_squares([p.grade for p in points], [p.log_odds for p in points])


def _restrict(histogram: GradeHistogram, grade_range: Tuple[float, float]):
    low, high = grade_range
    inside = sorted((g, c) for g, c in histogram.items() if low <= g <= high)
    kept = [(g, c) for g, c in inside if c > 0]
    excluded = tuple(g for g, c in inside if c <= 0)
    return kept, excluded


def fit_community_exponential(histogram: GradeHistogram,
                              grade_range: Tuple[float, float]) -> CommunityFit:
    """Ajuste ln(nombre de réussites) = a - r * cotation sur l'intervalle donné"""
    kept, excluded = _restrict(histogram, grade_range)
    if len(kept) < 2:
        raise InsufficientSupport(
            f"Moins de deux cotations avec des réussites dans {grade_range}")
    if excluded:
        logger.info(f"Cotations sans réussite écartées de l'ajustement : {list(excluded)}")
    fit = ordinary_least_squares([g for g, _ in kept], [math.log(c) for _, c in kept])
    return CommunityFit(fit=fit, excluded=excluded)


def fit_community_power_law(histogram: GradeHistogram,
                            grade_range: Tuple[float, float]) -> CommunityFit:
    """Variante loi de puissance : ln(nombre) = a - r * ln(cotation), cotations > 0"""
    kept, excluded = _restrict(histogram, grade_range)
    kept = [(g, c) for g, c in kept if g > 0]
    if len(kept) < 2:
        raise InsufficientSupport(
            f"Moins de deux cotations positives avec des réussites dans {grade_range}")
    fit = ordinary_least_squares([math.log(g) for g, _ in kept], [math.log(c) for _, c in kept])
    return CommunityFit(fit=fit, excluded=excluded)


def climber_fits(records: List[AscentRecord]) -> Tuple[pd.DataFrame, pd.DataFrame, List[str]]:
    """Régression de chaque grimpeur ; un échec de régression écarte le grimpeur

    Renvoie (ajustements, points, grimpeurs écartés).
    """
    fits, points, skipped = [], [], []
    for climber in sorted({r.climber_id for r in records}):
        table = empirical_odds(records, climber)
        for p in table.points:
            points.append({"climber_id": climber, "grade": p.grade, "failures": p.failures,
                           "successes": p.successes, "log_odds": p.log_odds,
                           "corrected": p.corrected})
        try:
            fit = fit_climber_slope(table.points)
        except DegenerateDesign as e:
            logger.warning(f"Grimpeur {climber} écarté de la régression : {e}")
            skipped.append(climber)
            continue
        fits.append({"climber_id": climber, "slope": fit.slope, "intercept": fit.intercept,
                     "grade": fit.zero_crossing, "r_squared": fit.r_squared,
                     "n_points": fit.n_points, "excluded_grades": len(table.excluded)})
    fit_columns = ["climber_id", "slope", "intercept", "grade", "r_squared", "n_points",
                   "excluded_grades"]
    point_columns = ["climber_id", "grade", "failures", "successes", "log_odds", "corrected"]
    return (pd.DataFrame(fits, columns=fit_columns),
            pd.DataFrame(points, columns=point_columns), skipped)


def read_histogram(path) -> GradeHistogram:
    """Histogramme communautaire : colonnes grade (valeur d'axe) et count"""
    frame = pd.read_csv(path)
    missing = {"grade", "count"} - set(frame.columns)
    if missing:
        raise NoData(f"Colonnes manquantes dans {path} : {', '.join(sorted(missing))}")
    if (frame["count"] < 0).any():
        raise NoData(f"Comptes négatifs dans {path}")
    return {float(g): float(c) for g, c in zip(frame["grade"], frame["count"])}


def mean_slope(fits: pd.DataFrame) -> Optional[float]:
    return float(fits["slope"].mean()) if len(fits) else None
