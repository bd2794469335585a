"""Program-based task-oriented dialogue runtime over schema-guided services."""

from .dsl import parse_statement, render_statement
from .engine import Environment, ExecutionContext, execute
from .schema import linearize_header, load_schema_catalog

__version__ = "0.1.0"

__all__ = [
    "Environment",
    "ExecutionContext",
    "execute",
    "linearize_header",
    "load_schema_catalog",
    "parse_statement",
    "render_statement",
]
