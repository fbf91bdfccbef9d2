"""
Outil de conversion de cotations pour le serveur MCP
"""
from typing import Any, Dict

from ..errors import ClimbingGradesError
from ..grades import ANALYSIS_SYSTEMS, GradeSystem, convert_for_report, format_grade, parse_grade


class ConvertGradeTool:
    """Lit une cotation et donne ses correspondances dans les autres systèmes"""

    def __init__(self):
        self.name = "convert_grade"
        self.description = "Convertit une cotation d'escalade en valeur d'axe et en cotations correspondantes"
        self.parameters = {
            "type": "object",
            "properties": {
                "token": {
                    "type": "string",
                    "description": "Cotation à lire, par exemple '7a', '23', 'VII+' ou 'V5'"
                },
                "system": {
                    "type": "string",
                    "enum": [s.value for s in ANALYSIS_SYSTEMS],
                    "default": "french",
                    "description": "Système de la cotation"
                }
            },
            "required": ["token"]
        }

    async def execute(self, token: str, system: str = "french") -> Dict[str, Any]:
        try:
            grade = parse_grade(token, GradeSystem(system))
        except (ClimbingGradesError, ValueError) as e:
            return {"success": False, "error": str(e)}

        correspondences = {}
        for target in GradeSystem:
            converted = convert_for_report(grade, target)
            correspondences[target.value] = format_grade(converted) if converted else None

        return {
            "success": True,
            "data": {
                "token": token,
                "system": grade.system.value,
                "value": grade.value,
                "correspondences": correspondences,
            },
            "message": f"Cotation {token} ({grade.system.value}) = {grade.value:g} sur l'axe"
        }
