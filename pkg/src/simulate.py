"""
Carnets synthétiques à paramètres connus.

Chaque grimpeur suit une marche aléatoire gaussienne de page en page ; chaque
ascension porte sur une voie de cotation (cote courante + décalage) et réussit
avec la probabilité du modèle. Un biais de déclaration optionnel retire des
échecs selon le décalage de la voie.
"""
import json
import logging
from datetime import date, timedelta
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator

from .errors import InputError
from .grades import GradeSystem, GradeValue
from .logbook import AscentRecord, page_start
from .model import ParameterState, p_send

logger = logging.getLogger(__name__)

SUCCESS_TICK = "redpoint"
FAILURE_TICK = "hangdog"
GRADE_DECIMALS = 4


class CountDistribution(str, Enum):
    FIXED = "fixed"
    POISSON = "poisson"


class OffsetDistribution(str, Enum):
    CONSTANT = "constant"
    UNIFORM = "uniform"
    NORMAL = "normal"


class AscentCount(BaseModel):
    """Nombre d'ascensions par grimpeur et par page"""

    distribution: CountDistribution = CountDistribution.POISSON
    mean: float = Field(default=2.5, gt=0)

    def draw(self, rng: np.random.Generator) -> int:
        if self.distribution is CountDistribution.FIXED:
            return int(round(self.mean))
        return int(rng.poisson(self.mean))


class RouteOffset(BaseModel):
    """Décalage cotation de voie - cote courante du grimpeur"""

    distribution: OffsetDistribution = OffsetDistribution.UNIFORM
    value: float = 0.0
    low: float = -3.0
    high: float = 3.0
    sd: float = Field(default=1.0, gt=0)

    def draw(self, rng: np.random.Generator) -> float:
        if self.distribution is OffsetDistribution.CONSTANT:
            return self.value
        if self.distribution is OffsetDistribution.UNIFORM:
            return float(rng.uniform(self.low, self.high))
        return float(rng.normal(self.value, self.sd))


class ReportingBias(BaseModel):
    """Probabilité de conserver un échec, selon que la voie est facile ou dure

    Une voie est facile quand son décalage est sous `threshold`.
    """

    threshold: float = 0.0
    easy_retention: float = Field(default=0.5, ge=0, le=1)
    hard_retention: float = Field(default=1.0, ge=0, le=1)

    def retention(self, offset: float) -> float:
        return self.easy_retention if offset < self.threshold else self.hard_retention


class SimSpec(BaseModel):
    true_m: float = Field(default=0.69, gt=0)
    n_climbers: int = Field(default=20, ge=1)
    n_pages: int = Field(default=24, ge=1)
    # Cotes initiales tirées selon la loi a priori des cotes du modèle
    initial_grade_mean: float = 18.0
    initial_grade_sd: float = Field(default=5.0, ge=0)
    walk_sd: float = Field(default=0.3, ge=0)
    ascents: AscentCount = AscentCount()
    offsets: RouteOffset = RouteOffset()
    reporting_bias: Optional[ReportingBias] = None
    seed: int = 0
    window_start: date = date(2014, 1, 1)
    system: GradeSystem = GradeSystem.EWBANK

    @field_validator("window_start")
    @classmethod
    def _first_of_month(cls, value: date) -> date:
        if value.day != 1:
            raise ValueError("window_start doit être le premier jour d'un mois")
        return value

    @field_validator("system")
    @classmethod
    def _numeric_system(cls, value: GradeSystem) -> GradeSystem:
        if value not in (GradeSystem.EWBANK, GradeSystem.VGRADE):
            raise ValueError("la simulation produit des cotations Ewbank ou V")
        return value

    @property
    def window_end(self) -> date:
        return page_start(self.n_pages + 1, self.window_start)

    @classmethod
    def load(cls, path) -> "SimSpec":
        try:
            return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValidationError) as e:
            raise InputError(f"Spécification de simulation invalide {path} : {e}") from e


def climber_name(index: int) -> str:
    return f"c{index:03d}"


def simulate(spec: SimSpec) -> Tuple[List[AscentRecord], ParameterState]:
    """Génère un carnet et la vérité terrain ; déterministe pour une graine donnée

    Les tirages aléatoires ne dépendent pas du biais de déclaration : avec et
    sans biais, la même graine produit les mêmes ascensions sous-jacentes.
    """
    rng = np.random.default_rng(spec.seed)
    C, P = spec.n_climbers, spec.n_pages

    grades = np.empty((C, P))
    grades[:, 0] = rng.normal(spec.initial_grade_mean, spec.initial_grade_sd, size=C) \
        if spec.initial_grade_sd > 0 else spec.initial_grade_mean
    for page in range(1, P):
        steps = rng.normal(0.0, spec.walk_sd, size=C) if spec.walk_sd > 0 else 0.0
        grades[:, page] = grades[:, page - 1] + steps

    records: List[AscentRecord] = []
    dropped = 0
    for c in range(C):
        for page in range(P):
            first_day = page_start(page + 1, spec.window_start)
            days = (page_start(page + 2, spec.window_start) - first_day).days
            for k in range(spec.ascents.draw(rng)):
                offset = spec.offsets.draw(rng)
                route = max(round(grades[c, page] + offset, GRADE_DECIMALS), 0.0)
                success = bool(rng.random() < p_send(grades[c, page], route, spec.true_m))
                day = first_day + timedelta(days=int(rng.integers(days)))
                keep_draw = rng.random()
                if (not success and spec.reporting_bias is not None
                        and keep_draw >= spec.reporting_bias.retention(offset)):
                    dropped += 1
                    continue
                records.append(AscentRecord(
                    climber_id=climber_name(c),
                    route_id=f"r{c:03d}-{page + 1:03d}-{k:02d}",
                    date=day,
                    grade=GradeValue(system=spec.system, value=route),
                    tick=SUCCESS_TICK if success else FAILURE_TICK,
                    success=success,
                ))

    records.sort(key=lambda r: (r.climber_id, r.date, r.route_id))
    if dropped:
        logger.info(f"Biais de déclaration : {dropped} échecs retirés")
    logger.info(f"Simulation : {C} grimpeurs, {P} pages, {len(records)} ascensions",
                extra={"seed": spec.seed, "true_m": spec.true_m})
    return records, ParameterState(m=spec.true_m, grades=grades)


def attempts_until_send(p: float, n_trials: int, seed: int = 0) -> np.ndarray:
    """Nombre d'échecs avant la première réussite, p constant, n_trials répétitions"""
    if not 0.0 < p <= 1.0:
        raise InputError(f"Probabilité hors de ]0, 1] : {p}")
    rng = np.random.default_rng(seed)
    return rng.geometric(p, size=n_trials) - 1


def write_ground_truth(spec: SimSpec, truth: ParameterState, path) -> None:
    """Fichier annexe JSON : m, d et trajectoires des cotes"""
    payload = {
        "true_m": truth.m,
        "d": float(np.exp(truth.m)),
        "window_start": spec.window_start.isoformat(),
        "grades": {
            climber_name(c): [float(g) for g in truth.grades[c]]
            for c in range(truth.grades.shape[0])
        },
        "spec": json.loads(spec.model_dump_json()),
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def read_ground_truth(path) -> ParameterState:
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    grades = np.array([payload["grades"][c] for c in sorted(payload["grades"])])
    return ParameterState(m=payload["true_m"], grades=grades)
