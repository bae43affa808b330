"""Session-isolated snapshot storage with TTL garbage collection.

Each session owns an initial snapshot (what the world looked like
before the task), a current snapshot (what it looks like now), and a
set of uploaded files. Sessions are created lazily on first touch,
seeded from a shared default state, and expire one hour after their
last access unless configured otherwise.

Thread-safety: the store serializes writes per session (one lock per
session) while operations on distinct sessions proceed concurrently.
Snapshot values are treated as immutable once stored.
"""

from __future__ import annotations

import copy
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

from .state_document import StateValue, deep_merge, digest, validate_state

DEFAULT_TTL_SECONDS = 3600.0
DEFAULT_UPLOAD_QUOTA = 64 * 1024 * 1024

SET = "set"
SET_CURRENT = "set_current"
MERGE = "merge"
RESET = "reset"
VALID_ACTIONS = frozenset({SET, SET_CURRENT, MERGE, RESET})

_SID_PATTERN = re.compile(r"^[A-Za-z0-9_-]{1,128}$")


class SessionError(ValueError):
    """Base class for session-store rejections."""


class InvalidSessionId(SessionError):
    pass


class InvalidAction(SessionError):
    pass


class InvalidUploadName(SessionError):
    pass


class QuotaExceeded(SessionError):
    pass


def valid_sid(sid: str) -> bool:
    return isinstance(sid, str) and bool(_SID_PATTERN.match(sid))


@dataclass
class Upload:
    name: str
    content: bytes
    media_type: str

    @property
    def size(self) -> int:
        return len(self.content)


class UploadRef(NamedTuple):
    url: str
    name: str
    size: int


class ActionResult(NamedTuple):
    success: bool
    sid: str
    state_id: str


@dataclass
class Session:
    sid: str
    seed_ref: str
    initial_snapshot: StateValue | None = None
    current_snapshot: StateValue | None = None
    uploads: dict[str, Upload] = field(default_factory=dict)
    last_access: float = 0.0
    has_custom_state: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def upload_bytes(self) -> int:
        return sum(u.size for u in self.uploads.values())


class SessionStore:
    def __init__(
        self,
        seed_state: StateValue | None = None,
        ttl: float = DEFAULT_TTL_SECONDS,
        upload_quota: int = DEFAULT_UPLOAD_QUOTA,
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        self.seed_state: StateValue = {} if seed_state is None else seed_state
        validate_state(self.seed_state)
        self.seed_ref = digest(self.seed_state)
        self.ttl = float(ttl)
        self.upload_quota = int(upload_quota)
        self.clock = clock
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)

    def sids(self) -> list[str]:
        with self._lock:
            return list(self._sessions)

    def get_or_create(self, sid: str, now: float | None = None) -> Session:
        """Touch a session, creating it seeded if it does not exist."""
        if not valid_sid(sid):
            raise InvalidSessionId(f"invalid sid {sid!r}")
        now = self.clock() if now is None else now
        with self._lock:
            session = self._sessions.get(sid)
            if session is None:
                session = Session(
                    sid=sid,
                    seed_ref=self.seed_ref,
                    current_snapshot=copy.deepcopy(self.seed_state),
                    last_access=now,
                )
                self._sessions[sid] = session
            else:
                session.last_access = now
        return session

    def apply_action(
        self,
        sid: str,
        action: str,
        state: StateValue | None = None,
        now: float | None = None,
    ) -> ActionResult:
        """Run one injection action and report the resulting state id."""
        if action not in VALID_ACTIONS:
            raise InvalidAction(f"unknown action {action!r}")
        if action == RESET:
            if state is not None:
                raise InvalidAction("reset takes no state payload")
        elif state is None:
            raise InvalidAction(f"action {action!r} requires a state payload")

        session = self.get_or_create(sid, now)
        with session.lock:
            if action == SET:
                session.initial_snapshot = state
                session.current_snapshot = copy.deepcopy(state)
                session.has_custom_state = True
            elif action == SET_CURRENT:
                session.current_snapshot = state
                session.has_custom_state = True
            elif action == MERGE:
                base = session.current_snapshot
                if base is None:
                    base = copy.deepcopy(self.seed_state)
                session.current_snapshot = deep_merge(base, state)
                session.has_custom_state = True
            else:  # RESET
                session.initial_snapshot = None
                session.current_snapshot = copy.deepcopy(self.seed_state)
                session.uploads.clear()
                session.has_custom_state = False
            state_id = digest(session.current_snapshot)
        return ActionResult(True, sid, state_id)

    def store_upload(
        self,
        sid: str,
        name: str,
        content: bytes,
        media_type: str = "application/octet-stream",
        now: float | None = None,
    ) -> UploadRef:
        if (
            not name
            or name in (".", "..")
            or "/" in name
            or "\\" in name
            or ".." in name
        ):
            raise InvalidUploadName(f"invalid upload name {name!r}")
        session = self.get_or_create(sid, now)
        with session.lock:
            existing = session.uploads.get(name)
            used = session.upload_bytes() - (existing.size if existing else 0)
            if used + len(content) > self.upload_quota:
                raise QuotaExceeded(
                    f"upload quota {self.upload_quota} exceeded for sid {sid!r}"
                )
            session.uploads[name] = Upload(name, content, media_type)
        return UploadRef(f"/uploads/{sid}/{name}", name, len(content))

    def get_upload(self, sid: str, name: str, now: float | None = None) -> Upload | None:
        if not valid_sid(sid):
            return None
        now = self.clock() if now is None else now
        with self._lock:
            session = self._sessions.get(sid)
            if session is None:
                return None
            session.last_access = now
        with session.lock:
            return session.uploads.get(name)

    def gc_expired(self, now: float | None = None) -> int:
        """Drop every session idle strictly longer than the TTL."""
        now = self.clock() if now is None else now
        with self._lock:
            expired = [
                sid
                for sid, session in self._sessions.items()
                if now - session.last_access > self.ttl
            ]
            for sid in expired:
                del self._sessions[sid]
        return len(expired)
