from dataclasses import dataclass
from typing import Any, Callable, Optional


@dataclass(frozen=True)
class Var:
    """
    Declaration of a single configuration key.

    Attributes:
        default: Value used when no source provides the key.
                 Use Ellipsis (...) to mark it as required.
        min_val: Minimum allowed value (numbers only).
        max_val: Maximum allowed value (numbers only).
        choices: Allowed values.
        validator: Predicate on the cast value; False is reported with `message`.
        key: Name of the key in files and the environment when it differs from
             the attribute name (``lambda`` is a Python keyword, for instance).
        message: Error text for a failed validator.
        help: One-line description, used by ``epaloha config --example``.
    """
    default: Any = ...
    min_val: Optional[float] = None
    max_val: Optional[float] = None
    choices: Optional[tuple] = None
    validator: Optional[Callable[[Any], bool]] = None
    key: Optional[str] = None
    message: Optional[str] = None
    help: str = ""
