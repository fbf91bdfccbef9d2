"""
Serveur MCP principal : expose les outils de cotation sur stdio
"""
import json
import logging
from typing import Any, Dict, List

from mcp.server import Server
from mcp.server.stdio import stdio_server
from mcp.types import TextContent, Tool

from .tools import ConvertGradeTool, RegressLogbookTool, SendOddsTool

logger = logging.getLogger(__name__)

SERVER_NAME = "climbing-grades-mcp-server"


def _text(payload: Dict[str, Any]) -> List[TextContent]:
    return [TextContent(type="text", text=json.dumps(payload, indent=2, ensure_ascii=False))]


class ClimbingGradesServer:
    """Serveur MCP pour les cotations d'escalade"""

    def __init__(self):
        self.server = Server(SERVER_NAME)
        self.tools = {tool.name: tool for tool in (ConvertGradeTool(), SendOddsTool(), RegressLogbookTool())}
        self._setup_tools()

    def tool_definitions(self) -> List[Tool]:
        return [
            Tool(name=tool.name, description=tool.description, inputSchema=tool.parameters)
            for tool in self.tools.values()
        ]

    async def call(self, name: str, arguments: Dict[str, Any]) -> Dict[str, Any]:
        """Exécute un outil ; les erreurs reviennent sous forme de JSON"""
        logger.info(f"Appel de l'outil: {name} avec arguments: {arguments}")
        tool = self.tools.get(name)
        if tool is None:
            return {"error": f"Outil inconnu: {name}"}

        missing = [key for key in tool.parameters.get("required", []) if key not in arguments]
        if missing:
            return {"error": f"Paramètre(s) requis manquant(s): {', '.join(missing)}"}
        try:
            return await tool.execute(**arguments)
        except TypeError as e:
            return {"error": f"Arguments invalides: {e}"}
        except Exception as e:
            logger.error(f"Erreur lors de l'exécution de l'outil {name}: {e}")
            return {"error": f"Erreur lors de l'exécution: {str(e)}"}

    def _setup_tools(self):
        """Configure les outils disponibles"""

        @self.server.call_tool()
        async def handle_call_tool(name: str, arguments: Dict[str, Any]) -> List[TextContent]:
            return _text(await self.call(name, arguments or {}))

        @self.server.list_tools()
        async def handle_list_tools() -> List[Tool]:
            logger.info("Demande de liste des outils")
            return self.tool_definitions()

    def get_server(self) -> Server:
        return self.server


def create_mcp_server() -> Server:
    """Factory pour créer le serveur MCP"""
    logger.info("Création du serveur MCP de cotations")
    return ClimbingGradesServer().get_server()


async def run_stdio_server() -> None:
    """Sert les outils sur stdio jusqu'à la fermeture du flux"""
    logger.info("Démarrage du serveur MCP...")
    server = create_mcp_server()
    try:
        async with stdio_server() as (read_stream, write_stream):
            logger.info("Serveur MCP en écoute sur stdio...")
            await server.run(read_stream, write_stream, server.create_initialization_options())
    finally:
        logger.info("Serveur MCP arrêté")
