"""Shared generators and independent oracles used across the test suite.

The diff oracle here deliberately avoids the production recursion: it
enumerates node paths with an explicit stack and resolves values with
``get_at``, so agreement with ``compute_diff`` is a real cross-check.
"""

from __future__ import annotations

import random
import string

from gymsmith.state_document import ABSENT, KeyPath, get_at, state_eq

_KEY_ALPHABET = string.ascii_lowercase + string.digits
_NASTY_KEYS = ["a.b", "x[0]", 'q"q', "", "with space", "tail]", "\\back"]


def random_scalar(rng: random.Random):
    kind = rng.randrange(6)
    if kind == 0:
        return None
    if kind == 1:
        return rng.random() < 0.5
    if kind == 2:
        return rng.randrange(-1000, 1000)
    if kind == 3:
        return round(rng.uniform(-100, 100), 3)
    if kind == 4:
        return ""
    return "".join(rng.choice(_KEY_ALPHABET) for _ in range(rng.randrange(1, 8)))


def random_key(rng: random.Random, nasty: bool = False) -> str:
    if nasty and rng.random() < 0.15:
        return rng.choice(_NASTY_KEYS)
    return "".join(rng.choice(_KEY_ALPHABET) for _ in range(rng.randrange(1, 6)))


def random_state(rng: random.Random, depth: int = 4, fanout: int = 5, nasty: bool = False):
    """Random JSON-like tree with bounded depth and fan-out."""
    if depth <= 0 or rng.random() < 0.35:
        return random_scalar(rng)
    size = rng.randrange(0, fanout + 1)
    if rng.random() < 0.5:
        return [random_state(rng, depth - 1, fanout, nasty) for _ in range(size)]
    record = {}
    for _ in range(size):
        record[random_key(rng, nasty)] = random_state(rng, depth - 1, fanout, nasty)
    return record


def mutate_state(rng: random.Random, value, depth: int = 4):
    """A structurally related variant: edits, inserts, and deletions."""
    if rng.random() < 0.25:
        return random_state(rng, depth=2)
    if isinstance(value, dict):
        out = {}
        for key, item in value.items():
            roll = rng.random()
            if roll < 0.15:
                continue  # drop key
            out[key] = mutate_state(rng, item, depth - 1) if roll < 0.6 else item
        if rng.random() < 0.3:
            out[random_key(rng)] = random_state(rng, depth=2)
        return out
    if isinstance(value, list):
        out = [
            mutate_state(rng, item, depth - 1) if rng.random() < 0.4 else item
            for item in value
        ]
        if out and rng.random() < 0.25:
            out.pop(rng.randrange(len(out)))
        if rng.random() < 0.25:
            out.append(random_scalar(rng))
        return out
    return random_scalar(rng)


def enumerate_nodes(tree):
    """All (KeyPath, value) nodes, stack-based (no recursion)."""
    stack = [(KeyPath(), tree)]
    while stack:
        path, node = stack.pop()
        yield path, node
        if isinstance(node, dict):
            for key, item in node.items():
                stack.append((path.child(key), item))
        elif isinstance(node, list):
            for i, item in enumerate(node):
                stack.append((path.child(i), item))


def _is_leaf_node(node) -> bool:
    if isinstance(node, (dict, list)):
        return len(node) == 0
    return True


def oracle_diff(initial, current) -> dict[str, tuple]:
    """Brute-force diff: leaf-path and array-path enumeration + get_at.

    Returns {path_text: (old, new)} with ABSENT for unresolvable sides.
    """
    candidates: dict[str, KeyPath] = {}
    for tree in (initial, current):
        for path, node in enumerate_nodes(tree):
            if _is_leaf_node(node) or isinstance(node, list):
                candidates[path.render()] = path
    report = {}
    for text, path in candidates.items():
        old = get_at(initial, path)
        new = get_at(current, path)
        if old is ABSENT and new is ABSENT:
            continue
        if old is ABSENT or new is ABSENT or not state_eq(old, new):
            report[text] = (old, new)
    return report
