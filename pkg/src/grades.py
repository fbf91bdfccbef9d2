"""
Systèmes de cotation : axes numériques ordonnés, lecture des cotations et
correspondances pour l'affichage.

Une unité sur un axe vaut exactement un cran de cotation du système.
Les échelles Française, UIAA et YDS sont des tables explicites ; seule
l'origine de chaque axe est arbitraire (elle n'affecte pas la pente).
"""
import math
import re
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, field_validator

from .errors import GradeError, ReportingOnlySystem, SystemMismatch, UnknownGrade

LADDER_VERSION = "1"


class GradeSystem(str, Enum):
    EWBANK = "ewbank"
    FRENCH = "french"
    UIAA = "uiaa"
    VGRADE = "vgrade"
    YDS = "yds"

    @property
    def is_analysis_system(self) -> bool:
        return self is not GradeSystem.YDS


ANALYSIS_SYSTEMS = [s for s in GradeSystem if s.is_analysis_system]


class GradeValue(BaseModel):
    """Cotation sur l'axe natif de son système (valeurs fractionnaires permises)"""

    model_config = ConfigDict(frozen=True)

    system: GradeSystem
    value: float

    @field_validator("value")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("la valeur d'une cotation doit être finie")
        return value


class Ladder:
    """Échelle ordonnée de jetons, ancrée par un jeton de référence"""

    def __init__(self, system: GradeSystem, tokens: List[str], anchor: str, anchor_value: float):
        self.system = system
        self.tokens = tokens
        offset = anchor_value - tokens.index(anchor)
        self.value_of = {token: float(i + offset) for i, token in enumerate(tokens)}
        self.token_of = {value: token for token, value in self.value_of.items()}

    def __contains__(self, token: str) -> bool:
        return token in self.value_of


_FRENCH_TOKENS = ["1", "2", "3", "4a", "4b", "4c", "5a", "5b", "5c"] + [
    f"{number}{letter}{plus}"
    for number in (6, 7, 8, 9)
    for letter in "abc"
    for plus in ("", "+")
][:-1]  # s'arrête à 9c

_UIAA_TOKENS = ["I", "II", "III"] + [
    f"{roman}{modifier}"
    for roman in ("IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII")
    for modifier in ("-", "", "+")
]

_YDS_TOKENS = [f"5.{number}{letter}" for number in (11, 12, 13, 14, 15) for letter in "abcd"][3:]

LADDERS: Dict[GradeSystem, Ladder] = {
    GradeSystem.EWBANK: Ladder(GradeSystem.EWBANK, [str(n) for n in range(1, 40)], "1", 1.0),
    GradeSystem.FRENCH: Ladder(GradeSystem.FRENCH, _FRENCH_TOKENS, "7a", 23.0),
    GradeSystem.UIAA: Ladder(GradeSystem.UIAA, _UIAA_TOKENS, "VII", 17.0),
    GradeSystem.VGRADE: Ladder(GradeSystem.VGRADE, [f"V{n}" for n in range(0, 18)], "V0", 0.0),
    # Lecture seule : correspondance du tableau Ewbank 23-39
    GradeSystem.YDS: Ladder(GradeSystem.YDS, _YDS_TOKENS, "5.11d", 23.0),
}

# Plage Ewbank où Ewbank, Français et YDS se correspondent cran pour cran
CORRESPONDENCE_RANGE = (23, 39)
_CORRESPONDING = {GradeSystem.EWBANK, GradeSystem.FRENCH, GradeSystem.YDS}

_NUMERIC = re.compile(r"^\d+(\.\d+)?$")
_VGRADE = re.compile(r"^V(\d+(\.\d+)?)$")


def _normalize(text: str, system: GradeSystem) -> str:
    token = text.strip()
    if system in (GradeSystem.FRENCH, GradeSystem.YDS):
        return token.lower()
    if system is GradeSystem.UIAA:
        return token.upper().replace("−", "-").replace("–", "-")
    return token.upper()


def _matches(token: str, system: GradeSystem) -> bool:
    normalized = _normalize(token, system)
    if system is GradeSystem.EWBANK:
        return bool(_NUMERIC.match(normalized))
    if system is GradeSystem.VGRADE:
        return bool(_VGRADE.match(normalized))
    return normalized in LADDERS[system]


def parse_grade(text: str, system: GradeSystem) -> GradeValue:
    """Convertit un jeton de cotation en valeur sur l'axe natif

    Ewbank et V-grade : valeur faciale (décimales acceptées).
    Français et UIAA : rang dans l'échelle canonique, 7a = 23 et VII = 17.
    Les cotations doubles du type "23/24" sont refusées.
    """
    system = GradeSystem(system)
    if not system.is_analysis_system:
        raise ReportingOnlySystem(system.value)

    token = _normalize(text, system)
    if system is GradeSystem.EWBANK and _NUMERIC.match(token):
        return GradeValue(system=system, value=float(token))
    if system is GradeSystem.VGRADE:
        match = _VGRADE.match(token)
        if match:
            return GradeValue(system=system, value=float(match.group(1)))
    elif token in LADDERS[system]:
        return GradeValue(system=system, value=LADDERS[system].value_of[token])

    for other in GradeSystem:
        if other is not system and _matches(text, other):
            raise SystemMismatch(text, system.value, other.value)
    raise UnknownGrade(text, system.value)


def format_grade(grade: GradeValue) -> str:
    """Rendu inverse de parse_grade"""
    ladder = LADDERS[grade.system]
    if grade.value in ladder.token_of:
        return ladder.token_of[grade.value]
    if grade.system is GradeSystem.EWBANK:
        return _format_number(grade.value)
    if grade.system is GradeSystem.VGRADE:
        return "V" + _format_number(grade.value)
    raise GradeError(
        f"Aucun jeton {grade.system.value} pour la valeur {grade.value}")


def _format_number(value: float) -> str:
    return format(value, ".4f").rstrip("0").rstrip(".")


def convert_for_report(grade: GradeValue, target: GradeSystem) -> Optional[GradeValue]:
    """Cotation correspondante dans `target`, ou None si indisponible

    Les trois systèmes Ewbank / Français / YDS se correspondent cran pour
    cran de 23 à 39 (et partagent donc la même valeur d'axe). Aucune autre
    paire n'est tabulée.
    """
    target = GradeSystem(target)
    if target is grade.system:
        return grade
    if grade.system not in _CORRESPONDING or target not in _CORRESPONDING:
        return None
    low, high = CORRESPONDENCE_RANGE
    if not grade.value.is_integer() or not low <= grade.value <= high:
        return None
    return GradeValue(system=target, value=grade.value)


def ladder_table() -> List[Dict[str, object]]:
    """Table des échelles (système, jeton, valeur) pour audit"""
    rows = []
    for system, ladder in LADDERS.items():
        for token in ladder.tokens:
            rows.append({
                "version": LADDER_VERSION,
                "system": system.value,
                "token": token,
                "value": ladder.value_of[token],
            })
    return rows
