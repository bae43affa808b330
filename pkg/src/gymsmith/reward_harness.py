"""Execution harness for setup / golden / reward scripts.

Scripts run inside an EnvironmentHandle: a working root (a sandbox
directory standing in for a VM), an interpreter command template, and
extra environment variables. Reward scripts follow the output protocol
of printing ``REWARD: <x>`` with x in [0, 1] as their last scoring
line; the harness parses the last matching line so earlier diagnostic
prints never shadow the final score.
"""

from __future__ import annotations

import os
import re
import signal
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

# Exit code reported when the harness kills a timed-out process tree.
TIMEOUT_EXIT_CODE = -1

DEFAULT_SETUP_TIMEOUT = 600.0
DEFAULT_REWARD_TIMEOUT = 300.0

# Environment variable telling scripts where the session id is persisted.
SID_FILE_ENV = "GYMSMITH_SID_FILE"

REWARD_LINE = re.compile(r"^REWARD:\s*([0-9]*\.?[0-9]+)\s*$")


class RewardError(Exception):
    """Base class for reward-protocol failures; carries the raw execution."""

    def __init__(self, message: str, result: "ExecutionResult") -> None:
        super().__init__(message)
        self.result = result


class RewardExecutionError(RewardError):
    """Reward script crashed or timed out before producing a score."""


class NoRewardLine(RewardError):
    """Script finished but printed no final ``REWARD: x`` line."""


class RewardOutOfRange(RewardError):
    """Parsed score falls outside [0, 1]."""

    def __init__(self, message: str, result: "ExecutionResult", value: float) -> None:
        super().__init__(message, result)
        self.value = value


@dataclass
class EnvironmentHandle:
    """One isolated execution target (local sandbox directory or remote)."""

    root: Path
    kind: str = "local-sandbox"
    env: dict[str, str] = field(default_factory=dict)
    interpreter: tuple[str, ...] = (sys.executable, "{script}")
    sid_file: Path | None = None

    def command(self, script: Path) -> list[str]:
        return [part.format(script=str(script)) for part in self.interpreter]


@dataclass(frozen=True)
class ExecutionResult:
    exit_code: int
    stdout: str
    stderr: str
    duration: float
    timed_out: bool

    @property
    def ok(self) -> bool:
        return self.exit_code == 0 and not self.timed_out


@dataclass(frozen=True)
class RewardOutcome:
    score: float
    raw: ExecutionResult


def run_script(
    handle: EnvironmentHandle, script: Path | str, timeout: float
) -> ExecutionResult:
    """Execute one script in the handle's root, capturing all output.

    Timeouts are reported in the result (never raised); the whole
    process tree is killed when the deadline passes. A missing script
    or spawn failure does raise.
    """
    script = Path(script)
    if not script.is_file():
        raise FileNotFoundError(f"script not found: {script}")
    env = dict(os.environ)
    env.update(handle.env)
    if handle.sid_file is not None:
        env[SID_FILE_ENV] = str(handle.sid_file)

    started = time.monotonic()
    proc = subprocess.Popen(
        handle.command(script),
        cwd=str(handle.root),
        env=env,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
        start_new_session=True,
    )
    try:
        stdout, stderr = proc.communicate(timeout=timeout)
        timed_out = False
        exit_code = proc.returncode
    except subprocess.TimeoutExpired:
        _kill_tree(proc)
        stdout, stderr = proc.communicate()
        timed_out = True
        exit_code = TIMEOUT_EXIT_CODE
    duration = time.monotonic() - started
    return ExecutionResult(exit_code, stdout or "", stderr or "", duration, timed_out)


def _kill_tree(proc: subprocess.Popen) -> None:
    try:
        os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()


def parse_reward_output(stdout: str, result: ExecutionResult) -> float:
    """Extract the score from the LAST matching ``REWARD: x`` line."""
    score: float | None = None
    for line in stdout.splitlines():
        match = REWARD_LINE.match(line)
        if match:
            score = float(match.group(1))
    if score is None:
        raise NoRewardLine("no 'REWARD: x' line in script output", result)
    if not 0.0 <= score <= 1.0:
        raise RewardOutOfRange(f"reward {score} outside [0, 1]", result, score)
    return score


def evaluate_reward(
    handle: EnvironmentHandle,
    reward_script: Path | str,
    timeout: float = DEFAULT_REWARD_TIMEOUT,
) -> RewardOutcome:
    """Run a reward script and parse its protocol output.

    Parse failures and out-of-range values raise (they are distinct
    from a legitimate 0.0), as do crashes and timeouts.
    """
    result = run_script(handle, reward_script, timeout)
    if result.timed_out:
        raise RewardExecutionError("reward script timed out", result)
    if result.exit_code != 0:
        raise RewardExecutionError(
            f"reward script exited {result.exit_code}", result
        )
    score = parse_reward_output(result.stdout, result)
    return RewardOutcome(score, result)
