"""
Outil de calcul des chances de réussite
"""
import math
from typing import Any, Dict

from ..errors import ClimbingGradesError
from ..model import expected_failures, p_send


class SendOddsTool:
    """Probabilité de réussite et nombre moyen d'échecs avant la réussite"""

    def __init__(self):
        self.name = "send_odds"
        self.description = (
            "Calcule la probabilité de réussir une voie, le nombre moyen d'échecs "
            "avant la réussite et le facteur de difficulté par cran d = e^m"
        )
        self.parameters = {
            "type": "object",
            "properties": {
                "climber_grade": {"type": "number", "description": "Cote du grimpeur sur l'axe"},
                "route_grade": {"type": "number", "description": "Cotation de la voie sur le même axe"},
                "m": {"type": "number", "default": 0.69, "description": "Pente de l'échelle (> 0)"}
            },
            "required": ["climber_grade", "route_grade"]
        }

    async def execute(self, climber_grade: float, route_grade: float, m: float = 0.69) -> Dict[str, Any]:
        if m <= 0:
            return {"success": False, "error": "Le paramètre 'm' doit être strictement positif"}
        try:
            p = p_send(float(climber_grade), float(route_grade), float(m))
            failures = expected_failures(p) if p > 0 else math.inf
        except ClimbingGradesError as e:
            return {"success": False, "error": str(e)}

        return {
            "success": True,
            "data": {
                "p_send": p,
                "expected_failures": failures,
                "d": math.exp(m),
            },
            "message": f"Réussite {p:.1%}, {failures:.2f} échecs par réussite en moyenne"
        }
