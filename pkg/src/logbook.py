"""
Carnets d'ascensions : lecture, classement des types d'ascension,
agrégation par session, sélection des grimpeurs et découpage mensuel.

Ordre de préparation : lecture -> (mode session : agrégation) -> sélection
-> pagination.
"""
import datetime
import json
import logging
import math
import re
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd
from dateutil.relativedelta import relativedelta
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .errors import (
    GradeError,
    InputError,
    MalformedRow,
    RecordOutOfWindow,
    UnknownTick,
)
from .grades import GradeSystem, GradeValue, format_grade, parse_grade

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("climber_id", "route_id", "date", "grade", "tick")


class GameMode(str, Enum):
    ATTEMPT = "attempt"
    SESSION = "session"


class InputFormat(str, Enum):
    DELIMITED = "delimited-table"
    JSON = "json-records"

    @classmethod
    def from_path(cls, path: Path) -> "InputFormat":
        return cls.JSON if Path(path).suffix.lower() == ".json" else cls.DELIMITED


class AscentRecord(BaseModel):
    """Une tentative et son résultat"""

    model_config = ConfigDict(frozen=True)

    climber_id: str
    route_id: str
    date: datetime.date
    grade: GradeValue
    tick: str
    success: bool
    style: Optional[str] = None


class TickPolicy(BaseModel):
    """Classement des types d'ascension en réussite / échec / ignoré"""

    model_config = ConfigDict(frozen=True)

    success_ticks: FrozenSet[str]
    failure_ticks: FrozenSet[str]
    ignored_ticks: FrozenSet[str] = frozenset()

    @field_validator("success_ticks", "failure_ticks", "ignored_ticks", mode="before")
    @classmethod
    def _lower(cls, ticks: Iterable[str]) -> FrozenSet[str]:
        return frozenset(t.strip().lower() for t in ticks)

    @model_validator(mode="after")
    def _disjoint(self) -> "TickPolicy":
        if (self.success_ticks & self.failure_ticks
                or self.success_ticks & self.ignored_ticks
                or self.failure_ticks & self.ignored_ticks):
            raise ValueError("les ensembles de types d'ascension doivent être disjoints")
        return self

    def classify(self, tick: str) -> Optional[str]:
        """'success', 'failure', 'ignored' ou None si inconnu"""
        tick = tick.strip().lower()
        if tick in self.success_ticks:
            return "success"
        if tick in self.failure_ticks:
            return "failure"
        if tick in self.ignored_ticks:
            return "ignored"
        return None


_FAILURE_TICKS = {"hangdog", "attempt", "retreat", "working"}
_IGNORED_TICKS = {"toprope", "second", "aid", "ghost", "target", "tick"}


def default_tick_policy(bouldering: bool = False) -> TickPolicy:
    """Politique par défaut : ascensions propres contre échecs explicites"""
    success = {"send", "flash", "onsight"} if bouldering else {"redpoint", "flash", "onsight"}
    return TickPolicy(
        success_ticks=success,
        failure_ticks=_FAILURE_TICKS,
        ignored_ticks=_IGNORED_TICKS,
    )


@dataclass
class IngestResult:
    records: List[AscentRecord]
    rows_read: int
    ignored: int = 0
    unknown: Dict[str, int] = field(default_factory=dict)
    style_excluded: int = 0


def _parser_error_line(error: Exception) -> int:
    """Numéro de ligne cité par pandas dans une erreur de lecture, 0 s'il manque"""
    found = re.search(r"line (\d+)", str(error))
    return int(found.group(1)) if found else 0


def _read_frame(path: Path, fmt: InputFormat) -> Tuple[pd.DataFrame, int]:
    """Charge le fichier brut ; renvoie aussi le numéro de la première ligne de données"""
    if fmt is InputFormat.DELIMITED:
        try:
            with open(path, encoding="utf-8") as handle:
                header = handle.readline()
        except UnicodeDecodeError as e:
            raise MalformedRow(1, f"encodage invalide (UTF-8 attendu) : {e.reason}", str(path)) from e
        separator = "\t" if "\t" in header else ","
        try:
            frame = pd.read_csv(path, sep=separator, dtype=str,
                                keep_default_na=False, encoding="utf-8")
        except pd.errors.ParserError as e:
            raise MalformedRow(_parser_error_line(e), str(e), str(path)) from e
        except UnicodeDecodeError as e:
            raise MalformedRow(0, f"encodage invalide (UTF-8 attendu) : {e.reason}", str(path)) from e
        return frame, 2

    with open(path, encoding="utf-8") as handle:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as e:
            raise MalformedRow(e.lineno, f"JSON invalide : {e.msg}", str(path)) from e
        except UnicodeDecodeError as e:
            raise MalformedRow(0, f"encodage invalide (UTF-8 attendu) : {e.reason}", str(path)) from e
    if not isinstance(payload, list) or not all(isinstance(item, dict) for item in payload):
        raise MalformedRow(0, "un tableau d'objets JSON est attendu", str(path))
    return pd.DataFrame.from_records(payload), 1


def _text(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return str(value).strip()


def ingest(path, fmt: Optional[InputFormat], system: GradeSystem, policy: TickPolicy,
           on_unknown: str = "warn", styles: Optional[Iterable[str]] = None) -> IngestResult:
    """Lit un carnet exporté et produit un enregistrement par ligne retenue

    Les types ignorés sont comptés puis écartés. Un type inconnu est soit
    signalé et écarté (`on_unknown="warn"`), soit une erreur (`"fail"`).
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"Carnet introuvable : {path}")
    fmt = InputFormat(fmt) if fmt else InputFormat.from_path(path)
    system = GradeSystem(system)
    frame, first_row = _read_frame(path, fmt)

    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise MalformedRow(1, f"colonnes manquantes : {', '.join(missing)}", str(path))

    wanted_styles = {s.strip().lower() for s in styles} if styles else None
    result = IngestResult(records=[], rows_read=len(frame))
    unknown: Counter = Counter()

    for offset, row in enumerate(frame.to_dict("records")):
        row_number = first_row + offset
        tick = _text(row.get("tick"))
        outcome = policy.classify(tick)
        if outcome == "ignored":
            result.ignored += 1
            continue
        if outcome is None:
            if on_unknown == "fail":
                raise UnknownTick(tick, row_number, str(path))
            unknown[tick] += 1
            continue

        style = _text(row.get("style")) or None
        if wanted_styles is not None and (style or "").lower() not in wanted_styles:
            result.style_excluded += 1
            continue

        climber_id = _text(row.get("climber_id"))
        route_id = _text(row.get("route_id"))
        if not climber_id or not route_id:
            raise MalformedRow(row_number, "climber_id et route_id sont requis", str(path))
        try:
            day = date.fromisoformat(_text(row.get("date"))[:10])
        except ValueError as e:
            raise MalformedRow(row_number, f"date invalide '{row.get('date')}'", str(path)) from e
        try:
            grade = parse_grade(_text(row.get("grade")), system)
        except GradeError as e:
            raise MalformedRow(row_number, str(e), str(path)) from e

        result.records.append(AscentRecord(
            climber_id=climber_id,
            route_id=route_id,
            date=day,
            grade=grade,
            tick=tick.lower(),
            success=outcome == "success",
            style=style,
        ))

    result.unknown = dict(sorted(unknown.items()))
    if unknown:
        logger.warning(f"Types d'ascension inconnus écartés dans {path.name} : {result.unknown}")
    logger.info(
        f"Lecture de {path.name} : {len(result.records)} ascensions retenues",
        extra={"rows_read": result.rows_read, "ignored": result.ignored,
               "unknown": sum(unknown.values()), "style_excluded": result.style_excluded},
    )
    return result


def aggregate_sessions(records: Iterable[AscentRecord]) -> List[AscentRecord]:
    """Garde le meilleur résultat de chaque grimpeur sur chaque voie chaque jour

    Le groupe est réussi si l'une de ses tentatives l'est. La cotation de la
    première tentative du groupe est conservée en cas de conflit.
    """
    groups: "OrderedDict[Tuple[str, str, date], List[AscentRecord]]" = OrderedDict()
    for record in records:
        groups.setdefault((record.climber_id, record.route_id, record.date), []).append(record)

    aggregated = []
    conflicts = 0
    for group in groups.values():
        first = group[0]
        if any(r.grade != first.grade for r in group):
            conflicts += 1
        success = next((r for r in group if r.success), None)
        if success is None or success is first:
            aggregated.append(first)
        else:
            aggregated.append(first.model_copy(update={"success": True, "tick": success.tick}))

    if conflicts:
        logger.warning(f"{conflicts} session(s) avec des cotations contradictoires, "
                       "première cotation conservée")
    return aggregated


def filter_climbers(records: Iterable[AscentRecord], min_ascents: int,
                    min_failures: int) -> List[AscentRecord]:
    """Garde les grimpeurs ayant assez d'ascensions et d'échecs explicites"""
    if min_ascents < 1 or min_failures < 0:
        raise InputError("min_ascents doit être >= 1 et min_failures >= 0")
    records = list(records)
    ascents: Counter = Counter(r.climber_id for r in records)
    failures: Counter = Counter(r.climber_id for r in records if not r.success)
    kept = {c for c in ascents if ascents[c] >= min_ascents and failures[c] >= min_failures}
    return [r for r in records if r.climber_id in kept]


def cap_climbers(records: Iterable[AscentRecord], max_climbers: Optional[int]) -> List[AscentRecord]:
    """Limite l'analyse aux grimpeurs les plus actifs (égalités : identifiant)"""
    records = list(records)
    if max_climbers is None:
        return records
    counts: Counter = Counter(r.climber_id for r in records)
    ranked = sorted(counts, key=lambda c: (-counts[c], c))
    kept = set(ranked[:max_climbers])
    return [r for r in records if r.climber_id in kept]


def failure_statistics(records: Iterable[AscentRecord]) -> Dict[str, float]:
    """Échecs explicites par grimpeur : médiane, étendue, quartiles de la proportion"""
    records = list(records)
    if not records:
        return {}
    frame = pd.DataFrame({
        "climber": [r.climber_id for r in records],
        "failure": [not r.success for r in records],
    })
    per_climber = frame.groupby("climber")["failure"].agg(["sum", "mean"])
    fractions = per_climber["mean"].to_numpy()
    return {
        "climbers": int(len(per_climber)),
        "median_failures": float(np.median(per_climber["sum"])),
        "min_failures": int(per_climber["sum"].min()),
        "max_failures": int(per_climber["sum"].max()),
        "failure_fraction_q1": float(np.percentile(fractions, 25)),
        "failure_fraction_median": float(np.median(fractions)),
        "failure_fraction_q3": float(np.percentile(fractions, 75)),
    }


# --- Pagination ---

def month_index(day: date, window_start: date) -> int:
    """Rang du mois calendaire de `day` depuis celui de `window_start` (base 0)"""
    return (day.year - window_start.year) * 12 + day.month - window_start.month


def page_start(page: int, window_start: date) -> date:
    """Premier jour du mois calendaire de la page (base 1)"""
    return window_start.replace(day=1) + relativedelta(months=page - 1)


@dataclass(frozen=True)
class PreparedDataset:
    """Tableaux prêts pour la vraisemblance ; pages et bornes en base 1"""

    climbers: List[str]
    n_pages: int
    min_page: np.ndarray
    max_page: np.ndarray
    y: np.ndarray
    page: np.ndarray
    climber_index: np.ndarray
    x: np.ndarray
    game_mode: GameMode = GameMode.ATTEMPT
    window_start: Optional[date] = None
    system: Optional[GradeSystem] = None

    @property
    def n_climbers(self) -> int:
        return len(self.climbers)

    @property
    def n_ascents(self) -> int:
        return int(self.y.shape[0])

    def validate(self) -> None:
        """Vérifie les invariants de structure"""
        C, P = self.n_climbers, self.n_pages
        if not (len(self.min_page) == len(self.max_page) == C):
            raise InputError("min_page / max_page doivent avoir une entrée par grimpeur")
        if not (len(self.page) == len(self.climber_index) == len(self.x) == self.n_ascents):
            raise InputError("les tableaux d'ascensions doivent avoir la même longueur")
        if np.any(self.min_page < 1) or np.any(self.min_page > self.max_page) or np.any(self.max_page > P):
            raise InputError("il faut 1 <= min_page <= max_page <= P pour chaque grimpeur")
        if self.n_ascents:
            if np.any((self.climber_index < 0) | (self.climber_index >= C)):
                raise InputError("indice de grimpeur hors limites")
            low = self.min_page[self.climber_index]
            high = self.max_page[self.climber_index]
            if np.any((self.page < low) | (self.page > high)):
                raise InputError("page d'ascension hors de [min_page, max_page] du grimpeur")
            if not np.all(np.isin(self.y, (0, 1))):
                raise InputError("les résultats doivent valoir 0 ou 1")


def paginate(records: Iterable[AscentRecord], window_start: date, window_end: date,
             page_length: str = "calendar-month", game_mode: GameMode = GameMode.ATTEMPT,
             system: Optional[GradeSystem] = None) -> PreparedDataset:
    """Découpe la fenêtre en mois calendaires et indexe les ascensions"""
    if page_length != "calendar-month":
        raise InputError(f"Longueur de page non prise en charge : {page_length}")
    if not window_start < window_end:
        raise InputError("window_start doit précéder window_end")
    records = list(records)
    for record in records:
        if not window_start <= record.date < window_end:
            raise RecordOutOfWindow(record.climber_id, record.date, window_start, window_end)

    n_pages = month_index(window_end - timedelta(days=1), window_start) + 1
    climbers = sorted({r.climber_id for r in records})
    position = {climber: i for i, climber in enumerate(climbers)}

    climber_index = np.array([position[r.climber_id] for r in records], dtype=np.int64)
    page = np.array([month_index(r.date, window_start) + 1 for r in records], dtype=np.int64)
    min_page = np.full(len(climbers), n_pages, dtype=np.int64)
    max_page = np.ones(len(climbers), dtype=np.int64)
    if records:
        np.minimum.at(min_page, climber_index, page)
        np.maximum.at(max_page, climber_index, page)

    dataset = PreparedDataset(
        climbers=climbers,
        n_pages=n_pages,
        min_page=min_page,
        max_page=max_page,
        y=np.array([int(r.success) for r in records], dtype=np.int64),
        page=page,
        climber_index=climber_index,
        x=np.array([r.grade.value for r in records], dtype=float),
        game_mode=GameMode(game_mode),
        window_start=window_start,
        system=system,
    )
    dataset.validate()
    logger.info(f"Pagination : {len(climbers)} grimpeurs, {n_pages} pages, {len(records)} ascensions")
    return dataset


# --- Fichiers ---

def write_logbook(records: Iterable[AscentRecord], path) -> None:
    """Écrit le format tabulaire standard lu par `ingest`"""
    records = list(records)
    rows = [{
        "climber_id": r.climber_id,
        "route_id": r.route_id,
        "date": r.date.isoformat(),
        "grade": format_grade(r.grade),
        "tick": r.tick,
        "style": r.style or "",
    } for r in records]
    columns = list(REQUIRED_COLUMNS)
    if any(r.style for r in records):
        columns.append("style")
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)


def write_prepared(records: Iterable[AscentRecord], window_start: date, path) -> None:
    """Écrit le jeu préparé (valeur d'axe et page comprises)"""
    rows = [{
        "climber_id": r.climber_id,
        "route_id": r.route_id,
        "date": r.date.isoformat(),
        "grade": format_grade(r.grade),
        "grade_value": r.grade.value,
        "tick": r.tick,
        "success": int(r.success),
        "style": r.style or "",
        "page": month_index(r.date, window_start) + 1,
    } for r in records]
    columns = ["climber_id", "route_id", "date", "grade", "grade_value",
               "tick", "success", "style", "page"]
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)


def load_prepared(path, system: GradeSystem) -> List[AscentRecord]:
    """Relit un jeu préparé écrit par `write_prepared`"""
    path = Path(path)
    if not path.exists():
        raise InputError(f"Jeu préparé introuvable : {path} (lancez d'abord 'prepare')")
    frame = pd.read_csv(path, dtype={"climber_id": str, "route_id": str, "tick": str,
                                     "style": str, "grade": str},
                        keep_default_na=False)
    system = GradeSystem(system)
    return [AscentRecord(
        climber_id=row["climber_id"],
        route_id=row["route_id"],
        date=date.fromisoformat(row["date"]),
        grade=GradeValue(system=system, value=float(row["grade_value"])),
        tick=row["tick"],
        success=bool(int(row["success"])),
        style=row["style"] or None,
    ) for row in frame.to_dict("records")]


class PreparationReport:
    """Comptes de lignes à chaque étape de la préparation"""

    def __init__(self, header: Dict[str, object]):
        self.header = dict(header)
        self.stages: List[Dict[str, object]] = []

    def add(self, stage: str, rows_in: int, rows_out: int, detail: str = "") -> None:
        self.stages.append({"stage": stage, "rows_in": rows_in,
                            "rows_out": rows_out, "detail": detail})
        logger.info(f"Étape {stage} : {rows_in} -> {rows_out} {detail}".rstrip())

    def stage(self, name: str) -> Dict[str, object]:
        return next(s for s in self.stages if s["stage"] == name)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.stages, columns=["stage", "rows_in", "rows_out", "detail"])

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            for key, value in self.header.items():
                handle.write(f"# {key}: {value}\n")
            self.to_frame().to_csv(handle, index=False)

    @staticmethod
    def read(path) -> pd.DataFrame:
        return pd.read_csv(path, comment="#", keep_default_na=False)
