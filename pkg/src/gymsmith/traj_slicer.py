"""Deterministic trajectory slicing for fixed-budget training samples.

A rollout alternates environment turns (user/tool) and assistant turns
after an optional leading system message. Every ``interval`` turn-pairs
a slice is emitted: its prompt is the system message plus the first
``collapsed_length`` turn-pairs with screenshots replaced by a text
placeholder, its response is everything after, fully multimodal. Each
slice carries the full episode reward, undiscounted. Slices whose
counted tokens exceed the budget degrade to dummy slices (all loss
flags off) but keep their list position.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Union

IMAGE_PLACEHOLDER = "<image collapsed>"
DEFAULT_SLICE_INTERVAL = 10
MAX_TOOL_CALLS_PER_TURN = 10

ENVIRONMENT_ROLES = ("user", "tool")
ROLES = ("system", "user", "tool", "assistant")


@dataclass(frozen=True)
class Text:
    text: str


@dataclass(frozen=True)
class ImageRef:
    id: str


Item = Union[Text, ImageRef]


@dataclass(frozen=True)
class Turn:
    role: str
    items: tuple[Item, ...]
    cached_logprob_present: bool = True
    tool_call_count: int = 0

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role != "assistant" and self.tool_call_count != 0:
            raise ValueError("tool_call_count only applies to assistant turns")

    def collapsed(self) -> "Turn":
        """View with every image replaced by the placeholder text."""
        if not any(isinstance(item, ImageRef) for item in self.items):
            return self
        items = tuple(
            Text(IMAGE_PLACEHOLDER) if isinstance(item, ImageRef) else item
            for item in self.items
        )
        return replace(self, items=items)

    def image_count(self) -> int:
        return sum(1 for item in self.items if isinstance(item, ImageRef))


@dataclass(frozen=True)
class Trajectory:
    turns: tuple[Turn, ...]
    episode_reward: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.episode_reward <= 1.0:
            raise ValueError("episode reward must lie in [0, 1]")
        for i, turn in enumerate(self.turns):
            if turn.role == "system" and i != 0:
                raise ValueError("system turn only allowed at position 0")
        body = list(self.turns)
        if body and body[0].role == "system":
            body = body[1:]
        for i, turn in enumerate(body):
            expected_env = i % 2 == 0
            if expected_env and turn.role not in ENVIRONMENT_ROLES:
                raise ValueError(f"turn {i}: expected user/tool, got {turn.role}")
            if not expected_env and turn.role != "assistant":
                raise ValueError(f"turn {i}: expected assistant, got {turn.role}")

    @property
    def system_turn(self) -> Turn | None:
        if self.turns and self.turns[0].role == "system":
            return self.turns[0]
        return None

    def turn_pairs(self) -> list[tuple[Turn, ...]]:
        body = list(self.turns[1:] if self.system_turn else self.turns)
        pairs = [tuple(body[i : i + 2]) for i in range(0, len(body) - 1, 2)]
        return pairs

    def trailing_turn(self) -> Turn | None:
        body = self.turns[1:] if self.system_turn else self.turns
        if len(body) % 2 == 1:
            return body[-1]
        return None


@dataclass(frozen=True)
class SliceMessage:
    turn: Turn
    loss: bool
    in_prompt: bool


@dataclass(frozen=True)
class Slice:
    collapsed_length: int
    messages: tuple[SliceMessage, ...]
    reward: float
    is_dummy: bool = False
    overflow_cause: str | None = None


TokenCounter = Callable[[Turn], int]


def default_token_counter(image_tokens: int = 1024) -> TokenCounter:
    """Length-proportional stand-in for a model tokenizer."""

    def count(turn: Turn) -> int:
        total = 4  # per-message framing
        for item in turn.items:
            if isinstance(item, ImageRef):
                total += image_tokens
            else:
                total += max(1, len(item.text) // 4)
        return total

    return count


def compute_loss_flags(
    messages: Iterable[SliceMessage], is_dummy: bool = False
) -> tuple[bool, ...]:
    """Prompt and environment messages never train; assistant messages
    train unless their cached logprob is missing or they exceed the
    tool-call cap. Dummy slices train nothing."""
    flags = []
    for message in messages:
        if is_dummy or message.in_prompt:
            flags.append(False)
        elif message.turn.role != "assistant":
            flags.append(False)
        else:
            flags.append(
                message.turn.cached_logprob_present
                and message.turn.tool_call_count <= MAX_TOOL_CALLS_PER_TURN
            )
    return tuple(flags)


def _with_flags(messages: list[SliceMessage], is_dummy: bool) -> tuple[SliceMessage, ...]:
    flags = compute_loss_flags(messages, is_dummy)
    return tuple(
        replace(message, loss=flag) for message, flag in zip(messages, flags)
    )


def slice_trajectory(
    trajectory: Trajectory,
    interval: int = DEFAULT_SLICE_INTERVAL,
    budget: int = 1 << 30,
    counter: TokenCounter | None = None,
) -> list[Slice]:
    """Emit slices at collapsed lengths 0, interval, 2*interval, ...

    The schedule runs over every multiple of ``interval`` strictly below
    the trajectory's turn-pair count, so a trailing partial window still
    yields a final slice.
    """
    if interval < 1:
        raise ValueError("interval must be at least 1")
    if budget <= 0:
        raise ValueError("budget must be positive")
    counter = counter or default_token_counter()

    system = trajectory.system_turn
    if system is not None and counter(system) > budget:
        raise ValueError("token budget smaller than the system message alone")

    pairs = trajectory.turn_pairs()
    trailing = trajectory.trailing_turn()
    slices: list[Slice] = []
    for collapsed_length in range(0, len(pairs) or 0, interval):
        messages: list[SliceMessage] = []
        if system is not None:
            messages.append(SliceMessage(system, False, in_prompt=True))
        for pair in pairs[:collapsed_length]:
            for turn in pair:
                messages.append(SliceMessage(turn.collapsed(), False, in_prompt=True))
        for pair in pairs[collapsed_length:]:
            for turn in pair:
                messages.append(SliceMessage(turn, False, in_prompt=False))
        if trailing is not None:
            messages.append(SliceMessage(trailing, False, in_prompt=False))

        tokens = sum(counter(message.turn) for message in messages)
        is_dummy = tokens > budget
        cause = f"counted {tokens} tokens > budget {budget}" if is_dummy else None
        slices.append(
            Slice(
                collapsed_length=collapsed_length,
                messages=_with_flags(messages, is_dummy),
                reward=trajectory.episode_reward,
                is_dummy=is_dummy,
                overflow_cause=cause,
            )
        )
    return slices


def attribute_reward(slices: list[Slice], episode_reward: float) -> list[Slice]:
    """Replicate the episode reward onto every slice, undiscounted."""
    if not 0.0 <= episode_reward <= 1.0:
        raise ValueError("episode reward must lie in [0, 1]")
    return [replace(s, reward=episode_reward) for s in slices]


# -- JSON lines serialization --------------------------------------------------


def _item_to_wire(item: Item) -> dict:
    if isinstance(item, ImageRef):
        return {"image": item.id}
    return {"text": item.text}


def _item_from_wire(doc: dict) -> Item:
    if "image" in doc:
        return ImageRef(str(doc["image"]))
    return Text(doc["text"])


def slice_to_wire(s: Slice) -> dict:
    doc = {
        "collapsed_length": s.collapsed_length,
        "is_dummy": s.is_dummy,
        "reward": s.reward,
        "messages": [
            {
                "role": m.turn.role,
                "in_prompt": m.in_prompt,
                "loss": m.loss,
                "items": [_item_to_wire(item) for item in m.turn.items],
            }
            for m in s.messages
        ],
    }
    if s.overflow_cause:
        doc["overflow_cause"] = s.overflow_cause
    return doc


def slices_to_jsonl(slices: list[Slice]) -> str:
    return "".join(json.dumps(slice_to_wire(s), ensure_ascii=False) + "\n" for s in slices)


def trajectory_from_wire(doc: dict) -> Trajectory:
    turns = tuple(
        Turn(
            role=turn["role"],
            items=tuple(_item_from_wire(item) for item in turn.get("items", [])),
            cached_logprob_present=bool(turn.get("cached_logprob_present", True)),
            tool_call_count=int(turn.get("tool_call_count", 0)),
        )
        for turn in doc["turns"]
    )
    return Trajectory(turns=turns, episode_reward=float(doc["episode_reward"]))
