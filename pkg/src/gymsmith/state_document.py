"""JSON-like value model for environment state.

State payloads are plain Python trees (``None`` / ``bool`` / ``int`` /
``float`` / ``str`` / ``list`` / ``dict``) validated to carry 64-bit
float number semantics: every number must be finite and exactly
representable as a double. Canonical serialization fixes key order and
number rendering so that structurally equal trees digest identically.

Structural equality treats ``1`` and ``1.0`` as the same number but
keeps booleans distinct from numbers (Python's ``True == 1`` must not
leak into state comparison).
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass
from typing import Any, Iterator

StateValue = Any  # None | bool | int | float | str | list | dict

DIGEST_ALGORITHM = "sha256"

# Largest integer magnitude exactly representable as a double.
_MAX_SAFE_INT = 2**53


class StateValidationError(ValueError):
    """Raised when a value does not fit the state model."""


class KeyPathError(ValueError):
    """Raised for unparseable key-path text."""


class _Absent:
    """Singleton marking 'no value at this path' (distinct from null)."""

    _instance = None

    def __new__(cls) -> "_Absent":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ABSENT"

    def __bool__(self) -> bool:
        return False


ABSENT = _Absent()


def validate_state(value: StateValue, path: str = "$") -> None:
    """Reject anything outside the JSON-like model (NaN/Inf included)."""
    if value is None or isinstance(value, (bool, str)):
        return
    if isinstance(value, int):
        if abs(value) > _MAX_SAFE_INT:
            raise StateValidationError(
                f"{path}: integer {value} exceeds double precision"
            )
        return
    if isinstance(value, float):
        if not math.isfinite(value):
            raise StateValidationError(f"{path}: non-finite number {value!r}")
        return
    if isinstance(value, list):
        for i, item in enumerate(value):
            validate_state(item, f"{path}[{i}]")
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise StateValidationError(f"{path}: non-text record key {key!r}")
            validate_state(item, f"{path}.{key}")
        return
    raise StateValidationError(f"{path}: unsupported value type {type(value).__name__}")


def _reject_constant(name: str) -> None:
    raise StateValidationError(f"non-finite JSON constant {name}")


def _unique_pairs(pairs: list[tuple[str, StateValue]]) -> dict[str, StateValue]:
    record: dict[str, StateValue] = {}
    for key, value in pairs:
        if key in record:
            raise StateValidationError(f"duplicate record key {key!r}")
        record[key] = value
    return record


def parse_state(data: str | bytes) -> StateValue:
    """Parse JSON text into a validated StateValue."""
    try:
        value = json.loads(
            data, parse_constant=_reject_constant, object_pairs_hook=_unique_pairs
        )
    except json.JSONDecodeError as exc:
        raise StateValidationError(f"invalid JSON: {exc}") from exc
    validate_state(value)
    return value


def _canonical(value: StateValue) -> StateValue:
    """Normalize numbers so equal values serialize to equal text."""
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        # Integral doubles render in integer form; 1.0 and 1 must digest alike.
        if value.is_integer() and abs(value) <= _MAX_SAFE_INT:
            return int(value)
        return value
    if isinstance(value, list):
        return [_canonical(item) for item in value]
    return {key: _canonical(item) for key, item in value.items()}


def canonical_serialize(value: StateValue) -> bytes:
    """Deterministic UTF-8 JSON bytes: sorted keys, compact, canonical numbers."""
    return json.dumps(
        _canonical(value),
        ensure_ascii=False,
        sort_keys=True,
        separators=(",", ":"),
        allow_nan=False,
    ).encode("utf-8")


def digest(value: StateValue) -> str:
    """Collision-resistant lowercase-hex id of the canonical serialization."""
    return hashlib.sha256(canonical_serialize(value)).hexdigest()


def state_eq(a: StateValue, b: StateValue) -> bool:
    """Structural equality: numbers by value, booleans as their own kind."""
    a_bool, b_bool = isinstance(a, bool), isinstance(b, bool)
    if a_bool or b_bool:
        return a_bool and b_bool and a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return float(a) == float(b)
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(state_eq(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(state_eq(v, b[k]) for k, v in a.items())
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, str) and isinstance(b, str):
        return a == b
    return False


# Field names that can render without bracket quoting.
_BARE_NAME = re.compile(r'[^.\[\]"]+$')


def _render_segment(segment: str | int, first: bool) -> str:
    if isinstance(segment, int):
        return f"[{segment}]"
    if _BARE_NAME.match(segment):
        return segment if first else f".{segment}"
    escaped = segment.replace("\\", "\\\\").replace('"', '\\"')
    return f'["{escaped}"]'


@dataclass(frozen=True)
class KeyPath:
    """Address of a subtree: field names and array indices in order.

    Canonical text form joins fields with ``.`` and wraps indices in
    ``[i]``; field names containing ``.``, ``[``, ``]``, or ``"`` (or
    empty names) render bracket-quoted, e.g. ``["a.b"].c``.
    """

    segments: tuple[str | int, ...] = ()

    def render(self) -> str:
        return "".join(
            _render_segment(seg, i == 0) for i, seg in enumerate(self.segments)
        )

    def __str__(self) -> str:
        return self.render()

    def child(self, segment: str | int) -> "KeyPath":
        return KeyPath(self.segments + (segment,))

    @classmethod
    def parse(cls, text: str) -> "KeyPath":
        return cls(tuple(_parse_segments(text)))


def _parse_segments(text: str) -> Iterator[str | int]:
    pos = 0
    first = True
    while pos < len(text):
        ch = text[pos]
        if ch == "[":
            seg, pos = _parse_bracket(text, pos)
            yield seg
        elif ch == "." and not first:
            pos += 1
            seg, pos = _parse_bare(text, pos)
            yield seg
        elif first:
            seg, pos = _parse_bare(text, pos)
            yield seg
        else:
            raise KeyPathError(f"unexpected {ch!r} at offset {pos} in {text!r}")
        first = False


def _parse_bare(text: str, pos: int) -> tuple[str, int]:
    end = pos
    while end < len(text) and text[end] not in '.[]"':
        end += 1
    if end < len(text) and text[end] in ']"':
        raise KeyPathError(f"unexpected {text[end]!r} at offset {end} in {text!r}")
    if end == pos:
        raise KeyPathError(f"empty field name at offset {pos} in {text!r}")
    return text[pos:end], end


def _parse_bracket(text: str, pos: int) -> tuple[str | int, int]:
    pos += 1  # consume '['
    if pos >= len(text):
        raise KeyPathError(f"unterminated bracket in {text!r}")
    if text[pos] == '"':
        pos += 1
        chars: list[str] = []
        while pos < len(text) and text[pos] != '"':
            if text[pos] == "\\":
                pos += 1
                if pos >= len(text) or text[pos] not in '\\"':
                    raise KeyPathError(f"bad escape in {text!r}")
            chars.append(text[pos])
            pos += 1
        if pos >= len(text):
            raise KeyPathError(f"unterminated quoted name in {text!r}")
        pos += 1  # closing quote
        if pos >= len(text) or text[pos] != "]":
            raise KeyPathError(f"expected ']' at offset {pos} in {text!r}")
        return "".join(chars), pos + 1
    end = text.find("]", pos)
    if end < 0:
        raise KeyPathError(f"unterminated bracket in {text!r}")
    index_text = text[pos:end]
    if not index_text.isdigit():
        raise KeyPathError(f"invalid index {index_text!r} in {text!r}")
    return int(index_text), end + 1


def get_at(value: StateValue, path: KeyPath) -> StateValue | _Absent:
    """Resolve a path; any miss (key, range, kind) yields ABSENT, never an error."""
    node = value
    for segment in path.segments:
        if isinstance(segment, str):
            if not isinstance(node, dict) or segment not in node:
                return ABSENT
            node = node[segment]
        else:
            if not isinstance(node, list) or not 0 <= segment < len(node):
                return ABSENT
            node = node[segment]
    return node


def deep_merge(base: StateValue, patch: StateValue) -> StateValue:
    """Record-wise recursive merge; anything non-record replaces wholesale."""
    if isinstance(base, dict) and isinstance(patch, dict):
        merged = dict(base)
        for key, value in patch.items():
            merged[key] = deep_merge(base[key], value) if key in base else value
        return merged
    return patch
