"""
JSON experiment-config loading with line-numbered validation errors.
"""

import json
import re
from pathlib import Path
from typing import Any, Dict, Sequence, Tuple, Type, TypeVar, Union

import structlog
from pydantic import BaseModel, TypeAdapter, ValidationError

from ..utils.exceptions import ConfigError

logger = structlog.get_logger(__name__)

ModelType = TypeVar("ModelType")


def read_config(path: Union[str, Path]) -> Tuple[Dict[str, Any], str]:
    """Parse a JSON config file; returns the object and the raw text."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno, path=str(path)) from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", line=1, path=str(path))
    return data, text


def locate_key(text: str, loc: Sequence[Union[str, int]]) -> int:
    """
    1-based line of the deepest key of ``loc`` found in ``text``.

    Keys are searched in order, each after the previous match, so nested keys
    resolve to the occurrence inside their parent.
    """
    position, line = 0, 1
    for part in loc:
        if not isinstance(part, str):
            continue
        match = re.compile(rf'"{re.escape(part)}"\s*:').search(text, position)
        if match is None:
            continue
        position = match.start()
        line = text.count("\n", 0, position) + 1
    return line


def validate_config(
    schema: Union[Type[ModelType], TypeAdapter], data: Dict[str, Any], text: str
) -> ModelType:
    """Validate ``data`` against a model or adapter, mapping errors to lines."""
    adapter = schema if isinstance(schema, TypeAdapter) else TypeAdapter(schema)
    try:
        return adapter.validate_python(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = tuple(first["loc"])
        field = ".".join(str(part) for part in loc) or "config"
        raise ConfigError(
            f"{field}: {first['msg']}",
            line=locate_key(text, loc),
            errors=exc.error_count(),
        ) from exc


def load_config(path: Union[str, Path], schema: Type[ModelType]) -> ModelType:
    """Read and validate one config file."""
    data, text = read_config(path)
    config = validate_config(schema, data, text)
    logger.debug("config_loaded", path=str(path))
    return config


def dump_config(config: BaseModel) -> Dict[str, Any]:
    """JSON-compatible form of a validated config, for manifests."""
    return config.model_dump(mode="json")
