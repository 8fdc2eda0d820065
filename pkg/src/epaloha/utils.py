import os
import json
import enum
import logging
import math
import sys
from typing import Any, Dict, Optional, Type, Union, get_args, get_origin
from .exceptions import TypeCastingError

try:
    import tomllib
except ImportError:
    tomllib = None  # type: ignore

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(verbosity: int = 0, quiet: bool = False) -> None:
    """
    Configure the root logger for command-line use.

    Records go to stderr so CSV written to stdout stays clean.
    verbosity 0 -> WARNING, 1 -> INFO, 2+ -> DEBUG.
    """
    if quiet:
        level = logging.ERROR
    elif verbosity >= 2:
        level = logging.DEBUG
    elif verbosity == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Load configuration from a file (flat key = value text, .json, .toml).
    """
    _, ext = os.path.splitext(path)
    ext = ext.lower()

    if ext == '.json':
        return _parse_json(path)
    elif ext == '.toml':
        return _parse_toml(path)
    else:
        return _parse_flat(path)


def _parse_json(path: str) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise TypeCastingError(f"Error parsing JSON file {path}: {e}") from e
    if not isinstance(data, dict):
        raise TypeCastingError(f"JSON config {path} must hold an object at top level")
    return data


def _parse_toml(path: str) -> Dict[str, Any]:
    if tomllib is None:
        raise ImportError("TOML support requires Python 3.11+ (standard library 'tomllib')")

    try:
        with open(path, 'rb') as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise TypeCastingError(f"Error parsing TOML file {path}: {e}") from e


def _strip_value(value: str) -> str:
    """Drop a trailing '# comment' and surrounding quotes from a raw value."""
    if value[:1] in ('"', "'"):
        quote = value[0]
        end = value.find(quote, 1)
        if end != -1:
            return value[1:end]
        return value
    if '#' in value:
        value = value.split('#', 1)[0]
    return value.strip()


def _parse_flat(path: str) -> Dict[str, str]:
    """
    Parse a flat ``key = value`` file.
    Blank lines and lines starting with '#' are skipped; inline comments are allowed.
    """
    values: Dict[str, str] = {}
    with open(path, 'r', encoding='utf-8') as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            if '=' not in line:
                raise TypeCastingError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = line.split('=', 1)
            values[key.strip()] = _strip_value(value.strip())
    return values


def cast_value(value: Any, target_type: Type[Any]) -> Any:
    """
    Cast a raw value (usually a string from a file or the environment) to the target type.
    Supports str, int, float, bool, Enum subclasses and Optional[T].
    """
    origin = get_origin(target_type)
    args = get_args(target_type)

    if origin is Union:
        non_none_args = [arg for arg in args if arg is not type(None)]
        if type(None) in args and (value is None or value == "" or
                                   (isinstance(value, str) and value.lower() == "none")):
            return None
        if non_none_args:
            target_type = non_none_args[0]

    if isinstance(target_type, type) and issubclass(target_type, enum.Enum):
        if isinstance(value, target_type):
            return value
        text = str(value).strip().lower()
        for member in target_type:
            if text in (str(member.value).lower(), member.name.lower()):
                return member
        raise TypeCastingError(
            f"Cannot cast '{value}' to {target_type.__name__}; "
            f"expected one of {[m.value for m in target_type]}")

    if target_type == str:
        return str(value)

    if target_type == bool:
        if isinstance(value, bool):
            return value
        lower_val = str(value).lower()
        if lower_val in ('true', '1', 'yes', 'on'):
            return True
        if lower_val in ('false', '0', 'no', 'off'):
            return False
        raise TypeCastingError(f"Cannot cast '{value}' to bool")

    if target_type == int:
        if isinstance(value, bool):
            raise TypeCastingError(f"Cannot cast '{value}' to int")
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        try:
            return int(str(value))
        except ValueError:
            raise TypeCastingError(f"Cannot cast '{value}' to int")

    if target_type == float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        try:
            return float(str(value))
        except ValueError:
            raise TypeCastingError(f"Cannot cast '{value}' to float")

    raise TypeCastingError(f"Unsupported type: {target_type}")


def format_number(value: Any) -> str:
    """Render a CSV cell: reals with 9 significant digits, everything else via str()."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.9g}"
    if hasattr(value, "dtype"):
        return format_number(value.item())
    return str(value)


def parse_assignment(text: str) -> tuple:
    """Split a ``key=value`` command-line override."""
    if '=' not in text:
        raise TypeCastingError(f"Expected key=value, got {text!r}")
    key, value = text.split('=', 1)
    return key.strip(), _strip_value(value.strip())
