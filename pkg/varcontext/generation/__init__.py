"""Referring-expression generation."""
from .decoder import ExpressionDecoder

__all__ = ["ExpressionDecoder"]
