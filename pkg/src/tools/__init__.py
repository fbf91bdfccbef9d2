"""
Module des outils MCP
"""
from .grades import ConvertGradeTool
from .odds import SendOddsTool
from .regression import RegressLogbookTool

__all__ = ["ConvertGradeTool", "SendOddsTool", "RegressLogbookTool"]
