# config_utils.py
from typing import Any, Dict, Tuple, Union, get_args, get_origin, get_type_hints
import dataclasses

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def python_type_to_string(python_type: Any) -> str:
    type_map = {
        int: "integer",
        float: "number",
        str: "string",
        bool: "boolean",
        tuple: "list",
    }
    origin = get_origin(python_type)
    if origin is Union:
        inner = [a for a in get_args(python_type) if a is not type(None)]
        return python_type_to_string(inner[0]) if inner else "string"
    if origin in (tuple, Tuple):
        return "list"
    return type_map.get(python_type, "string")


def _parse_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got '{raw}'")


def coerce_value(raw: str, annotation: Any) -> Any:
    """Convert a config string to the dataclass field type.

    Supports int, float, bool, str, Optional[...] and tuples written as
    comma-separated items.
    """
    raw = raw.strip()
    origin = get_origin(annotation)
    if origin is Union:
        inner = [a for a in get_args(annotation) if a is not type(None)]
        if raw.lower() in ("", "none", "null"):
            return None
        return coerce_value(raw, inner[0])
    if origin in (tuple, Tuple):
        args = get_args(annotation)
        items = [item.strip() for item in raw.split(",") if item.strip()]
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(coerce_value(item, args[0]) for item in items)
        if len(items) != len(args):
            raise ValueError(f"expected {len(args)} comma-separated values, got {len(items)}")
        return tuple(coerce_value(item, arg) for item, arg in zip(items, args))
    if annotation is bool:
        return _parse_bool(raw)
    if annotation is int:
        return int(raw)
    if annotation is float:
        return float(raw)
    return raw


def field_types(cls: type) -> Dict[str, Any]:
    """Resolved annotations of a dataclass's init fields."""
    hints = get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls) if f.init}
