"""Canonical key-sorted `key=value` text, shared by configs, checkpoint
metadata, and report headers. Rendering is deterministic: keys sorted,
floats via repr (shortest round-trip), booleans as true/false."""

from __future__ import annotations

import dataclasses
import typing


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(format_value(v) for v in value)
    text = str(value)
    if "\n" in text or "=" in text:
        raise ValueError(f"value {text!r} cannot be serialized on one line")
    return text


def render_items(items: dict[str, object]) -> str:
    return "".join(f"{k}={format_value(items[k])}\n" for k in sorted(items))


def parse_items(text: str) -> dict[str, str]:
    items: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        items[key.strip()] = value.strip()
    return items


def _coerce(kind, raw: str):
    origin = typing.get_origin(kind)
    if origin in (tuple, list):
        elem = typing.get_args(kind)[0]
        parts = [p for p in raw.split(",") if p != ""]
        seq = [_coerce(elem, p) for p in parts]
        return tuple(seq) if origin is tuple else seq
    if kind is bool:
        if raw not in ("true", "false"):
            raise ValueError(f"expected true/false, got {raw!r}")
        return raw == "true"
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind is str:
        return raw
    if kind == int | None or kind == typing.Optional[int]:
        return None if raw == "" else int(raw)
    raise TypeError(f"unsupported config field type {kind}")


def dataclass_items(obj, prefix: str) -> dict[str, object]:
    return {
        f"{prefix}.{f.name}": getattr(obj, f.name) for f in dataclasses.fields(obj)
    }


def dataclass_from_items(cls, prefix: str, items: dict[str, str]):
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for f in dataclasses.fields(cls):
        key = f"{prefix}.{f.name}"
        if key in items:
            kwargs[f.name] = _coerce(hints[f.name], items[key])
    return cls(**kwargs)
