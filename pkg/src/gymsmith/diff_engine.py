"""Flat key-path diff between two state snapshots.

Rules, in order:

1. Volatile masking: subtrees matching any mask pattern are stripped
   from both inputs before comparison (masked array elements are nulled
   in place so later indices keep their positions).
2. Leaf entries: every leaf path (scalar or empty container) present in
   either masked tree whose resolved values differ yields one entry.
3. Atomic arrays: every array path whose subtrees differ yields an
   entry carrying the full old/new arrays, in addition to any leaf
   entries inside it. Reward authors may therefore match either the
   whole array or individual indexed fields like ``channels[0].name``.

An empty report is equivalent to structural equality of the masked
inputs. ABSENT marks a path that does not resolve on one side; entries
never have both sides ABSENT.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .state_document import (
    ABSENT,
    KeyPath,
    KeyPathError,
    StateValue,
    _Absent,
    state_eq,
)

DEFAULT_MASK_PATTERNS = ("*.lastViewedAt",)


class _Wildcard:
    _instance = None

    def __new__(cls) -> "_Wildcard":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "*"


WILDCARD = _Wildcard()


@dataclass(frozen=True)
class VolatileMask:
    """Key-path patterns whose subtrees are invisible to the diff.

    A bare ``*`` segment matches any single field name or index. A
    pattern also matches every descendant of a matched prefix.
    """

    patterns: tuple[tuple[str | int | _Wildcard, ...], ...] = ()

    @classmethod
    def from_texts(cls, texts: tuple[str, ...] | list[str]) -> "VolatileMask":
        parsed = []
        for text in texts:
            segments = KeyPath.parse(text).segments
            if not segments:
                raise KeyPathError("empty mask pattern")
            parsed.append(
                tuple(WILDCARD if seg == "*" else seg for seg in segments)
            )
        return cls(tuple(parsed))

    def matches(self, path: KeyPath) -> bool:
        return matches_mask(path, self)


EMPTY_MASK = VolatileMask()


def _segment_matches(pattern_seg: str | int | _Wildcard, path_seg: str | int) -> bool:
    if pattern_seg is WILDCARD:
        return True
    return type(pattern_seg) is type(path_seg) and pattern_seg == path_seg


def matches_mask(path: KeyPath, mask: VolatileMask) -> bool:
    """True when some pattern aligns with a prefix of the path."""
    for pattern in mask.patterns:
        if len(pattern) > len(path.segments):
            continue
        if all(
            _segment_matches(ps, xs) for ps, xs in zip(pattern, path.segments)
        ):
            return True
    return False


def apply_mask(value: StateValue, mask: VolatileMask, _path: KeyPath = KeyPath()) -> StateValue:
    """Masked copy: matched record keys dropped, matched array slots nulled."""
    if not mask.patterns:
        return value
    if isinstance(value, dict):
        return {
            key: apply_mask(item, mask, _path.child(key))
            for key, item in value.items()
            if not matches_mask(_path.child(key), mask)
        }
    if isinstance(value, list):
        return [
            None
            if matches_mask(_path.child(i), mask)
            else apply_mask(item, mask, _path.child(i))
            for i, item in enumerate(value)
        ]
    return value


@dataclass(frozen=True)
class DiffEntry:
    path: KeyPath
    old: StateValue | _Absent
    new: StateValue | _Absent

    def to_wire(self) -> dict:
        # ABSENT travels as null plus a side-specific absence flag.
        wire: dict = {
            "old": None if self.old is ABSENT else self.old,
            "new": None if self.new is ABSENT else self.new,
        }
        if self.old is ABSENT:
            wire["old_absent"] = True
        if self.new is ABSENT:
            wire["new_absent"] = True
        return wire


@dataclass
class DiffReport:
    """Flat map from canonical path text to one changed-field entry."""

    entries: dict[str, DiffEntry] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, path_text: str) -> bool:
        return path_text in self.entries

    def to_wire(self) -> dict:
        return {
            text: self.entries[text].to_wire() for text in sorted(self.entries)
        }


def _is_leaf(value: StateValue | _Absent) -> bool:
    if value is ABSENT:
        return False
    if isinstance(value, (dict, list)):
        return len(value) == 0
    return True


def compute_diff(
    initial: StateValue,
    current: StateValue,
    mask: VolatileMask = EMPTY_MASK,
) -> DiffReport:
    masked_initial = apply_mask(initial, mask)
    masked_current = apply_mask(current, mask)
    report = DiffReport()
    _walk(masked_initial, masked_current, KeyPath(), report)
    return report


def _walk(
    old: StateValue | _Absent,
    new: StateValue | _Absent,
    path: KeyPath,
    report: DiffReport,
) -> None:
    if old is not ABSENT and new is not ABSENT and state_eq(old, new):
        return

    old_is_array = isinstance(old, list)
    new_is_array = isinstance(new, list)
    if _is_leaf(old) or _is_leaf(new) or old_is_array or new_is_array:
        report.entries[path.render()] = DiffEntry(path, old, new)

    old_is_record = isinstance(old, dict)
    new_is_record = isinstance(new, dict)
    if old_is_record and new_is_record:
        for key in old.keys() | new.keys():
            _walk(old.get(key, ABSENT), new.get(key, ABSENT), path.child(key), report)
    else:
        if old_is_record:
            for key, item in old.items():
                _walk(item, ABSENT, path.child(key), report)
        if new_is_record:
            for key, item in new.items():
                _walk(ABSENT, item, path.child(key), report)

    if old_is_array and new_is_array:
        for i in range(max(len(old), len(new))):
            _walk(
                old[i] if i < len(old) else ABSENT,
                new[i] if i < len(new) else ABSENT,
                path.child(i),
                report,
            )
    else:
        if old_is_array:
            for i, item in enumerate(old):
                _walk(item, ABSENT, path.child(i), report)
        if new_is_array:
            for i, item in enumerate(new):
                _walk(ABSENT, item, path.child(i), report)
