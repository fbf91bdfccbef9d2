"""
Manifeste d'exécution : tout ce qu'il faut pour rejouer une commande.

Il est écrit à côté des sorties de chaque commande ; relancer la commande avec
ce seul fichier reproduit les mêmes sorties octet pour octet.
"""
import json
import logging
from datetime import date
from enum import Enum
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .errors import ManifestError
from .grades import GradeSystem
from .logbook import GameMode, InputFormat
from .model import ModelConfig
from .sampler import SamplerConfig

logger = logging.getLogger(__name__)

MANIFEST_SUFFIX = ".manifest.json"


class RegressMode(str, Enum):
    CLIMBER = "climber"
    COMMUNITY = "community"


class RunManifest(BaseModel):
    inputs: List[Path] = Field(default_factory=list)
    input_format: Optional[InputFormat] = None
    system: GradeSystem = GradeSystem.EWBANK
    game: GameMode = GameMode.SESSION
    window_start: Optional[date] = None
    window_end: Optional[date] = None
    min_ascents: int = Field(default=30, ge=1)
    min_failures: int = Field(default=1, ge=0)
    max_climbers: Optional[int] = Field(default=None, ge=1)
    styles: Optional[List[str]] = None
    on_unknown: str = "warn"
    bouldering: bool = False
    model: ModelConfig = ModelConfig()
    sampler: SamplerConfig = SamplerConfig()
    seed: int = Field(default=20160801, ge=0)
    threads: int = Field(default=1, ge=1)
    out_dir: Path = Path("out")
    hpd_mass: float = Field(default=0.95, gt=0, lt=1)

    # Métadonnées de la ligne de synthèse
    country: str = ""
    style: str = ""

    # Régression
    regress_mode: RegressMode = RegressMode.CLIMBER
    histogram: Optional[Path] = None
    grade_min: Optional[float] = None
    grade_max: Optional[float] = None

    # Simulation
    sim_spec: Optional[Path] = None

    @field_validator("on_unknown")
    @classmethod
    def _check_on_unknown(cls, value: str) -> str:
        if value not in ("warn", "fail"):
            raise ValueError("on_unknown doit valoir 'warn' ou 'fail'")
        return value

    @field_validator("system")
    @classmethod
    def _analysis_system(cls, value: GradeSystem) -> GradeSystem:
        if not GradeSystem(value).is_analysis_system:
            raise ValueError(f"{value.value} ne sert qu'aux rapports, pas à l'analyse")
        return value

    @model_validator(mode="after")
    def _consistent(self) -> "RunManifest":
        if self.window_start and self.window_end and not self.window_start < self.window_end:
            raise ValueError("window_start doit précéder window_end")
        if self.sampler.seed != self.seed:
            # La graine du manifeste fait foi
            self.sampler = self.sampler.model_copy(update={"seed": self.seed})
        return self

    @property
    def grade_range(self):
        return (self.grade_min if self.grade_min is not None else float("-inf"),
                self.grade_max if self.grade_max is not None else float("inf"))

    def save(self, directory, command: str) -> Path:
        """Écrit <commande>.manifest.json dans `directory`"""
        path = Path(directory) / f"{command}{MANIFEST_SUFFIX}"
        path.write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path


def load_manifest(path) -> RunManifest:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ManifestError(f"Manifeste illisible {path} : {e}") from e
    except json.JSONDecodeError as e:
        raise ManifestError(f"Manifeste JSON invalide {path} : {e.msg} (ligne {e.lineno})") from e
    return build_manifest(payload)


def build_manifest(payload: dict) -> RunManifest:
    """Valide un dictionnaire (manifeste + surcharges de la CLI)"""
    try:
        return RunManifest.model_validate(payload)
    except ValidationError as e:
        raise ManifestError(f"Manifeste invalide : {e}") from e
