"""
Configuration de l'application à partir des variables d'environnement
Copiez env_example.txt vers .env pour la surcharger localement.
"""
import os
from pathlib import Path

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator


class Settings(BaseModel):
    """Réglages ambiants (journalisation, parallélisme, sorties)"""

    log_level: str = "INFO"
    log_format: str = "text"
    debug_mode: bool = False
    threads: int = Field(default=1, ge=1)
    out_dir: Path = Path("out")

    @field_validator("log_format")
    @classmethod
    def _check_format(cls, value: str) -> str:
        value = value.lower()
        if value not in ("text", "json"):
            raise ValueError("LOG_FORMAT doit valoir 'text' ou 'json'")
        return value

    @property
    def effective_log_level(self) -> str:
        return "DEBUG" if self.debug_mode else self.log_level.upper()


def load_settings() -> Settings:
    """Charge .env puis lit les variables d'environnement"""
    load_dotenv()
    return Settings(
        log_level=os.getenv("LOG_LEVEL", "INFO"),
        log_format=os.getenv("LOG_FORMAT", "text"),
        debug_mode=os.getenv("DEBUG_MODE", "false").lower() in ("1", "true", "yes"),
        threads=int(os.getenv("GRADES_THREADS", "1")),
        out_dir=Path(os.getenv("GRADES_OUT_DIR", "out")),
    )
