"""
Hiérarchie d'exceptions du projet

Deux familles : les erreurs d'entrée (données, manifeste, paramètres) et les
erreurs numériques. Chaque famille porte son code de sortie pour la CLI.
"""
from typing import Optional


class ClimbingGradesError(Exception):
    """Erreur de base du projet"""

    exit_code = 1


class InputError(ClimbingGradesError):
    """Entrée invalide : fichier, ligne, paramètre ou manifeste"""

    exit_code = 2


class NumericalError(ClimbingGradesError):
    """Échec numérique pendant le calcul"""

    exit_code = 3


# --- Cotations ---

class GradeError(InputError):
    """Erreur de lecture d'une cotation"""


class UnknownGrade(GradeError):
    def __init__(self, token: str, system: str):
        self.token = token
        self.system = system
        super().__init__(f"Cotation inconnue '{token}' pour le système {system}")


class SystemMismatch(GradeError):
    def __init__(self, token: str, system: str, actual: str):
        self.token = token
        self.system = system
        self.actual = actual
        super().__init__(
            f"La cotation '{token}' appartient au système {actual}, pas à {system}")


class ReportingOnlySystem(GradeError):
    def __init__(self, system: str):
        self.system = system
        super().__init__(
            f"Le système {system} sert uniquement à l'affichage, pas à l'analyse")


# --- Carnets d'ascensions ---

class MalformedRow(InputError):
    def __init__(self, row: int, reason: str, path: Optional[str] = None):
        self.row = row
        self.reason = reason
        self.path = path
        where = f"{path}, ligne {row}" if path else f"ligne {row}"
        super().__init__(f"Ligne invalide ({where}) : {reason}")


class UnknownTick(InputError):
    def __init__(self, tick: str, row: int, path: Optional[str] = None):
        self.tick = tick
        self.row = row
        self.path = path
        where = f"{path}, ligne {row}" if path else f"ligne {row}"
        super().__init__(f"Type d'ascension inconnu '{tick}' ({where})")


class RecordOutOfWindow(InputError):
    def __init__(self, climber_id: str, day, window_start, window_end):
        self.climber_id = climber_id
        self.day = day
        super().__init__(
            f"Ascension du {day} ({climber_id}) hors de la fenêtre "
            f"[{window_start}, {window_end})")


# --- Modèle, échantillonneur, régressions ---

class DimensionMismatch(InputError):
    """Dimensions de l'état incompatibles avec les données"""


class NoData(InputError):
    """Aucune donnée exploitable"""


class DegenerateDesign(InputError):
    """Toutes les cotations sont égales : pente indéfinie"""


class InsufficientSupport(InputError):
    """Pas assez de cotations non nulles dans l'intervalle demandé"""


class TooFewDraws(InputError):
    """Pas assez de tirages pour l'intervalle HPD"""


class ManifestError(InputError):
    """Manifeste ou fichier de configuration invalide"""


class DomainError(NumericalError):
    """Argument hors du domaine de définition"""


class NonFiniteDensity(NumericalError):
    """Densité a posteriori non finie"""
