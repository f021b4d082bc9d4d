"""Flat ``key=value`` run configuration files.

The files use dotenv syntax: blank lines and ``#`` comments are ignored and
values may be quoted. Keys use ``_`` where the matching command-line flag
uses ``-``.
"""
import io
import logging
import re
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from dotenv.parser import Binding, parse_stream

from .exceptions import ConfigFileError

logger = logging.getLogger(__name__)

KEY_PATTERN = re.compile(r"^[a-z][a-z0-9_]*$")


def binding_line(binding: Binding) -> int:
    """1-based line of the binding's first non-blank character."""
    text = binding.original.string
    leading = text[:len(text) - len(text.lstrip())]
    return binding.original.line + leading.count("\n")


def parse_config_text(text: str) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for binding in parse_stream(io.StringIO(text)):
        number = binding_line(binding)
        if binding.error or (binding.key is not None and binding.value is None):
            raise ConfigFileError(
                f"Line {number}: expected key=value, got {binding.original.string.strip()!r}", line=number
            )
        if binding.key is None:
            continue
        key = binding.key.replace("-", "_")
        if not KEY_PATTERN.match(key):
            raise ConfigFileError(f"Line {number}: invalid key {key!r}", key=key, line=number)
        if key in values:
            raise ConfigFileError(f"Line {number}: duplicate key {key!r}", key=key, line=number)
        values[key] = binding.value
    return values


def load_config_file(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigFileError(f"Cannot read config file {path}: {e}") from e
    values = parse_config_text(text)
    logger.debug(f"Loaded {len(values)} keys from {path}")
    return values


def merge_options(file_values: Mapping[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """File values overridden by every command-line option that was given."""
    merged = dict(file_values)
    merged.update({key: value for key, value in overrides.items() if value is not None})
    return merged


def render_value(value: Any) -> str:
    """``value`` as dotenv text, single-quoted when it would otherwise lose a ``#``."""
    text = str(value)
    if "#" in text and "'" not in text:
        return f"'{text}'"
    return text


def render_config(values: Mapping[str, Any], header: Optional[str] = None) -> str:
    lines = [f"# {header}"] if header else []
    lines.extend(f"{key} = {render_value(value)}" for key, value in sorted(values.items()))
    return "\n".join(lines) + "\n"
