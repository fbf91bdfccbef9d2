"""
Outil de régression log-linéaire sur un carnet d'ascensions
"""
import asyncio
import logging
from typing import Any, Dict, Optional

from ..errors import ClimbingGradesError
from ..grades import ANALYSIS_SYSTEMS, GradeSystem
from ..logbook import aggregate_sessions, default_tick_policy, filter_climbers, ingest
from ..regression import MEAN_SLOPE_LABEL, climber_fits, mean_slope

logger = logging.getLogger(__name__)


class RegressLogbookTool:
    """Pente par grimpeur de log(échecs/réussites) en fonction de la cotation"""

    def __init__(self):
        self.name = "regress_logbook"
        self.description = (
            "Lit un carnet d'ascensions et estime la pente m par régression "
            "log-linéaire pour chaque grimpeur (sans MCMC)"
        )
        self.parameters = {
            "type": "object",
            "properties": {
                "path": {"type": "string", "description": "Chemin du carnet (CSV/TSV ou JSON)"},
                "system": {
                    "type": "string",
                    "enum": [s.value for s in ANALYSIS_SYSTEMS],
                    "default": "ewbank",
                    "description": "Système de cotation du carnet"
                },
                "session": {
                    "type": "boolean",
                    "default": True,
                    "description": "Agrège les tentatives par session avant la régression"
                },
                "min_ascents": {"type": "integer", "default": 1, "minimum": 1},
                "min_failures": {"type": "integer", "default": 1, "minimum": 0}
            },
            "required": ["path"]
        }

    def _run(self, path: str, system: str, session: bool,
             min_ascents: int, min_failures: int) -> Dict[str, Any]:
        result = ingest(path, None, GradeSystem(system), default_tick_policy())
        records = aggregate_sessions(result.records) if session else result.records
        records = filter_climbers(records, min_ascents, min_failures)
        fits, _, skipped = climber_fits(records)
        return {
            "estimator": MEAN_SLOPE_LABEL,
            "mean_slope": mean_slope(fits),
            "climbers": fits.to_dict("records"),
            "skipped": skipped,
        }

    async def execute(self, path: str, system: str = "ewbank", session: bool = True,
                      min_ascents: int = 1, min_failures: int = 1) -> Dict[str, Any]:
        try:
            data = await asyncio.to_thread(self._run, path, system, session, min_ascents, min_failures)
        except (ClimbingGradesError, ValueError, OSError) as e:
            logger.error(f"Régression impossible sur {path}: {e}")
            return {"success": False, "error": str(e)}

        slope: Optional[float] = data["mean_slope"]
        message = (f"Pente moyenne {slope:.3f} sur {len(data['climbers'])} grimpeurs"
                   if slope is not None else "Aucun grimpeur exploitable")
        return {"success": True, "data": data, "message": message}
