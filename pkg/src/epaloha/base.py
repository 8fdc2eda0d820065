import os
import logging
from typing import Any, Dict, List, Sequence, Tuple, Union, get_type_hints
from .fields import Var
from .exceptions import MissingVariableError, ValidationError, TypeCastingError, FrozenInstanceError
from .utils import load_config_file, cast_value

logger = logging.getLogger(__name__)

ENV_PREFIX = "EPALOHA_"


class BaseConfig:
    """
    Immutable, validated configuration object.

    Values are resolved per field from, lowest priority first: the declared
    default, config files, ``EPALOHA_``-prefixed environment variables, and
    keyword overrides passed to the constructor.
    """

    def __init__(self, env_path: Union[str, Sequence[str], None] = None,
                 strict: bool = True, **overrides: Any):
        """
        Initialize the configuration.

        Args:
            env_path: Path(s) to configuration file(s); later files win.
            strict: Raise ValidationError when any constraint is violated.
                    With strict=False the instance is built anyway and
                    ``check()`` reports the problems.
            **overrides: Field values by attribute name (or file key).
        """
        object.__setattr__(self, '_frozen', False)
        self._loaded_files: List[str] = self._resolve_paths(env_path)

        raw = self._load_and_merge(self._loaded_files)
        raw.update(self._normalize_overrides(overrides))

        self._apply_fields(raw)

        if strict:
            errors = self.check()
            if errors:
                raise ValidationError(
                    f"{self.__class__.__name__} is invalid: " + "; ".join(errors), errors)

        self._frozen = True

    @classmethod
    def fields(cls) -> List[Tuple[str, Any, Var]]:
        """Declared fields as (attribute, type hint, Var) in declaration order."""
        try:
            hints = get_type_hints(cls)
        except Exception:
            hints = cls.__annotations__
        result = []
        for name, hint in hints.items():
            if name.startswith('_'):
                continue
            declared = getattr(cls, name, Var(default=...))
            if not isinstance(declared, Var):
                declared = Var(default=declared)
            result.append((name, hint, declared))
        return result

    @classmethod
    def _key_of(cls, name: str, var: Var) -> str:
        return var.key or name

    def _resolve_paths(self, env_path: Union[str, Sequence[str], None]) -> List[str]:
        if env_path is None:
            return []
        if isinstance(env_path, (str, os.PathLike)):
            return [os.fspath(env_path)]
        return [os.fspath(p) for p in env_path]

    def _load_and_merge(self, paths: List[str]) -> Dict[str, Any]:
        combined: Dict[str, Any] = {}
        known = {self._key_of(n, v) for n, _, v in self.fields()}

        for path in paths:
            if not os.path.isfile(path):
                raise MissingVariableError(f"Config file not found: {path}")
            file_vars = load_config_file(path)
            for key in file_vars:
                if key not in known:
                    logger.debug("ignoring unknown key %r in %s", key, path)
            combined.update(file_vars)

        for env_key, value in os.environ.items():
            if env_key.startswith(ENV_PREFIX):
                combined[env_key[len(ENV_PREFIX):]] = value
        return combined

    def _normalize_overrides(self, overrides: Dict[str, Any]) -> Dict[str, Any]:
        by_attr = {n: self._key_of(n, v) for n, _, v in self.fields()}
        keys = set(by_attr.values())
        normalized = {}
        for name, value in overrides.items():
            if name in by_attr:
                normalized[by_attr[name]] = value
            elif name in keys:
                normalized[name] = value
            else:
                raise TypeError(f"{self.__class__.__name__} has no field '{name}'")
        return normalized

    def _apply_fields(self, raw: Dict[str, Any]) -> None:
        for field_name, field_type, var_config in self.fields():
            key = self._key_of(field_name, var_config)
            raw_value = raw.get(key)

            if raw_value is None:
                if var_config.default is ...:
                    raise MissingVariableError(f"Missing required variable: {key}")
                final_value = var_config.default
            else:
                try:
                    final_value = cast_value(raw_value, field_type)
                except TypeCastingError as e:
                    raise TypeCastingError(f"Error casting {key}: {e}") from e

            object.__setattr__(self, field_name, final_value)

    def check(self) -> List[str]:
        """Return every violated constraint; an empty list means the config is valid."""
        errors: List[str] = []
        for field_name, _, var_config in self.fields():
            value = getattr(self, field_name)
            key = self._key_of(field_name, var_config)
            if value is None:
                continue

            if var_config.choices is not None and value not in var_config.choices:
                errors.append(f"{key} = {value!r} not in {list(var_config.choices)}")
                continue

            if isinstance(value, (int, float)) and not isinstance(value, bool):
                if var_config.min_val is not None and value < var_config.min_val:
                    errors.append(f"{key} >= {var_config.min_val:g} violated ({key} = {value})")
                if var_config.max_val is not None and value > var_config.max_val:
                    errors.append(f"{key} <= {var_config.max_val:g} violated ({key} = {value})")

            if var_config.validator is not None and not var_config.validator(value):
                errors.append(var_config.message or f"Custom validation failed for {key}")

        errors.extend(self.hook())
        return errors

    def hook(self) -> List[str]:
        """Override for cross-field validation; return the violated invariants."""
        return []

    def replace(self, strict: bool = True, **changes: Any) -> 'BaseConfig':
        """Return a new instance with some fields changed; files are not re-read."""
        values = {name: getattr(self, name) for name, _, _ in self.fields()}
        values.update(changes)
        return self.__class__(strict=strict, **values)

    def __setattr__(self, name: str, value: Any) -> None:
        if getattr(self, '_frozen', False):
            raise FrozenInstanceError(f"Configuration is immutable. Cannot modify '{name}'.")
        super().__setattr__(name, value)

    def to_dict(self, by_key: bool = False) -> Dict[str, Any]:
        """Field values by attribute name (or by file key when by_key=True)."""
        result = {}
        for name, _, var_config in self.fields():
            label = self._key_of(name, var_config) if by_key else name
            result[label] = getattr(self, name)
        return result

    def _identity(self) -> tuple:
        return tuple(self.to_dict().items())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BaseConfig) or type(other) is not type(self):
            return NotImplemented
        return self._identity() == other._identity()

    def __hash__(self) -> int:
        return hash((type(self).__name__, self._identity()))

    def __getstate__(self) -> Dict[str, Any]:
        return dict(self.__dict__)

    def __setstate__(self, state: Dict[str, Any]) -> None:
        self.__dict__.update(state)

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v!r}" for k, v in self.to_dict().items())
        return f"{self.__class__.__name__}({inner})"

    @classmethod
    def example(cls) -> str:
        """Commented template listing every key with its type, default and bounds."""
        lines = [f"# {cls.__name__}"]
        for name, hint, var_config in cls.fields():
            key = cls._key_of(name, var_config)
            t_name = getattr(hint, '__name__', str(hint).replace("typing.", ""))
            notes = [f"type: {t_name}"]
            if var_config.default is ...:
                notes.append("required")
                val_str = ""
            else:
                default = var_config.default
                val_str = "" if default is None else str(getattr(default, 'value', default))
            if var_config.min_val is not None:
                notes.append(f"min: {var_config.min_val:g}")
            if var_config.max_val is not None:
                notes.append(f"max: {var_config.max_val:g}")
            if var_config.choices:
                notes.append(f"choices: {[getattr(c, 'value', c) for c in var_config.choices]}")
            if var_config.help:
                lines.append(f"# {var_config.help}")
            lines.append(f"{key} = {val_str}  # " + " | ".join(notes))
        return "\n".join(lines)
