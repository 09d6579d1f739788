"""Schema-aware code prompts for triple extraction, plus parsing and strict-F1 scoring."""

from importlib import resources
from pathlib import Path

from .core import (
    UNKNOWN,
    Document,
    EntityMention,
    EntityType,
    RelationTriple,
    RelationType,
    Schema,
    detect_overlap,
    load_schema,
    normalize_surface,
    validate_schema,
)

__version__ = "0.1.0"


def data_path(name: str = "") -> Path:
    """Filesystem path of a bundled data file (schemas, toy dataset)."""
    return Path(str(resources.files(__name__).joinpath("data", name)))


__all__ = [
    "UNKNOWN",
    "Document",
    "EntityMention",
    "EntityType",
    "RelationTriple",
    "RelationType",
    "Schema",
    "data_path",
    "detect_overlap",
    "load_schema",
    "normalize_surface",
    "validate_schema",
]
