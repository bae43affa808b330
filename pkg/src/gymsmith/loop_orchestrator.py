"""Generator / Discriminator round loop with an information barrier.

Each round: the generator runs in its own workdir and must produce
initial_setup.py and golden_patch.py; the discriminator runs in a
sandbox seeded with ONLY the task config, the two environment configs,
and the previous round's REVIEW, and must produce reward.py. The
verifier then evaluates the five agreement conditions on a fresh
environment pair. The REVIEW document is the sole feedback channel back
to the generator. The loop is capped at K rounds (default 5).

The sandbox is rebuilt from scratch every round; any foreign file found
there, before or after the discriminator runs, is a barrier violation
and aborts the run loudly. Accepted tuples can be emitted as a
self-contained seven-file bundle for downstream evaluators.
"""

from __future__ import annotations

import json
import logging
import re
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

from .agreement_verifier import (
    FAIL,
    AgreementReport,
    CandidateTuple,
    ConditionResult,
    Feedback,
    VerifierConfig,
    render_review,
    verify,
)
from .reward_harness import EnvironmentHandle

logger = logging.getLogger(__name__)

DEFAULT_MAX_ROUNDS = 5
DEFAULT_AGENT_TIMEOUT = 300.0

GENERATOR_OUTPUTS = ("initial_setup.py", "golden_patch.py")
DISCRIMINATOR_OUTPUTS = ("reward.py",)

# The only files allowed in the discriminator sandbox at invocation time.
SANDBOX_ALLOWED = ("task_config.json", "env_config_initial.json",
                   "env_config_golden.json", "REVIEW.md")

DEFAULT_OBSERVATION_TYPE = "screenshot"
DEFAULT_STEP_BUDGET = 100
DEFAULT_VM_IMAGE = "local-sandbox"
DEFAULT_SNAPSHOT = "clean"

BUNDLE_FILES = (
    "config.json",
    "meta.json",
    "initial_setup.py",
    "golden_patch.py",
    "reward.py",
    "REVIEW.md",
    "task_config.json",
)

_TASK_ID = re.compile(r"^[A-Za-z0-9]+_[A-Za-z0-9]+_[0-9]{3}$")
_DIFFICULTIES = ("easy", "medium", "hard")
MIN_CONTEXT_CHARS = 300


class BarrierViolationError(RuntimeError):
    """A file crossed the generator/discriminator information barrier."""


class OrchestratorError(RuntimeError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    instruction: str
    context: str
    difficulty: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not _TASK_ID.match(self.task_id):
            raise ValueError(
                f"task_id {self.task_id!r} must look like <domain>_<topic>_<3 digits>"
            )
        if self.difficulty not in _DIFFICULTIES:
            raise ValueError(f"difficulty must be one of {_DIFFICULTIES}")
        if len(self.context) < MIN_CONTEXT_CHARS:
            raise ValueError(
                f"context must carry at least {MIN_CONTEXT_CHARS} characters "
                f"(got {len(self.context)})"
            )

    @property
    def domain(self) -> str:
        return self.task_id.split("_")[0]

    @property
    def topic(self) -> str:
        return self.task_id.split("_")[1]

    def to_config(self) -> dict:
        return {
            "task_id": self.task_id,
            "instruction": self.instruction,
            "context": self.context,
            "difficulty": self.difficulty,
            "metadata": self.metadata,
        }

    @classmethod
    def from_config(cls, doc: dict) -> "TaskSpec":
        return cls(
            task_id=doc["task_id"],
            instruction=doc["instruction"],
            context=doc["context"],
            difficulty=doc["difficulty"],
            metadata=doc.get("metadata", {}),
        )


@dataclass(frozen=True)
class AgentInvocation:
    """External command template; {workdir} and {round} are substituted."""

    role: str  # "generator" | "discriminator"
    command: tuple[str, ...]
    timeout: float = DEFAULT_AGENT_TIMEOUT


@dataclass(frozen=True)
class Accepted:
    task: TaskSpec
    candidate: CandidateTuple
    report: AgreementReport
    rounds_used: int


@dataclass(frozen=True)
class Rejected:
    task: TaskSpec
    reason: str
    last_report: AgreementReport | None
    rounds_used: int


LoopOutcome = Union[Accepted, Rejected]

EnvFactory = Callable[[str, int], tuple[EnvironmentHandle, EnvironmentHandle]]


class LocalSandboxFactory:
    """Fresh disjoint sandbox-directory pairs, one pair per round."""

    def __init__(self, base: Path) -> None:
        self.base = Path(base)

    def __call__(self, task_id: str, round_no: int):
        round_dir = self.base / task_id / f"round_{round_no}"
        env_init_root = round_dir / "env_init"
        env_gold_root = round_dir / "env_gold"
        env_init_root.mkdir(parents=True)
        env_gold_root.mkdir(parents=True)
        return (
            EnvironmentHandle(root=env_init_root),
            EnvironmentHandle(root=env_gold_root),
        )


def _env_config(handle: EnvironmentHandle) -> dict:
    doc = {"kind": handle.kind, "root": str(handle.root)}
    if handle.sid_file is not None:
        doc["sid_file"] = str(handle.sid_file)
    return doc


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n")


def enforce_barrier(disc_workdir: Path, allow_outputs: bool = False) -> list[str]:
    """Violations in the sandbox: any entry outside the allowed set.

    Before invocation only SANDBOX_ALLOWED may exist; afterwards the
    discriminator's own outputs are additionally permitted.
    """
    allowed = set(SANDBOX_ALLOWED)
    if allow_outputs:
        allowed.update(DISCRIMINATOR_OUTPUTS)
    violations = []
    for entry in sorted(Path(disc_workdir).iterdir()):
        if entry.name not in allowed or entry.is_dir():
            violations.append(entry.name)
    return violations


def _synthesized_failure(task: TaskSpec, missing: str, detail: str) -> AgreementReport:
    evidence = f"not evaluated: {detail}"
    conditions = tuple(
        ConditionResult(cid, False, evidence) for cid in ("C1", "C2", "C3", "C4", "C5")
    )
    feedback = Feedback(
        ("C1", "C2", "C3", "C4", "C5"),
        (f"Produce the required artifact {missing}.",),
        f"Round aborted for task {task.task_id}: {detail}",
    )
    return AgreementReport(FAIL, conditions, feedback)


def _invoke_agent(agent: AgentInvocation, workdir: Path, round_no: int) -> str | None:
    """Run one agent command; returns an error description or None."""
    command = [
        part.format(workdir=str(workdir), round=round_no) for part in agent.command
    ]
    try:
        proc = subprocess.run(
            command,
            cwd=str(workdir),
            capture_output=True,
            text=True,
            timeout=agent.timeout,
        )
    except subprocess.TimeoutExpired:
        return f"{agent.role} command timed out after {agent.timeout}s"
    except OSError as exc:
        return f"{agent.role} command failed to start: {exc}"
    if proc.returncode != 0:
        tail = proc.stderr.strip().splitlines()[-1][:160] if proc.stderr.strip() else ""
        return f"{agent.role} command exited {proc.returncode}: {tail}"
    return None


def _seed_sandbox(disc_dir: Path, gen_dir: Path, prior_review: str | None) -> None:
    if disc_dir.exists():
        shutil.rmtree(disc_dir)
    disc_dir.mkdir(parents=True)
    for name in ("task_config.json", "env_config_initial.json", "env_config_golden.json"):
        shutil.copyfile(gen_dir / name, disc_dir / name)
    if prior_review is not None:
        (disc_dir / "REVIEW.md").write_text(prior_review)


def run_loop(
    task: TaskSpec,
    generator: AgentInvocation,
    discriminator: AgentInvocation,
    env_factory: EnvFactory,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    out_root: Path | str = "output",
    verifier_config: VerifierConfig | None = None,
) -> LoopOutcome:
    out_root = Path(out_root)
    gen_dir = out_root / "adversarial" / task.task_id
    disc_dir = out_root / "reward_sandbox" / task.task_id
    gen_dir.mkdir(parents=True, exist_ok=True)
    _write_json(gen_dir / "task_config.json", task.to_config())

    prior_review: str | None = None
    last_report: AgreementReport | None = None

    for round_no in range(1, max_rounds + 1):
        env_init, env_gold = env_factory(task.task_id, round_no)
        if Path(env_init.root).resolve() == Path(env_gold.root).resolve():
            raise OrchestratorError("environment factory returned a shared root")
        _write_json(gen_dir / "env_config_initial.json", _env_config(env_init))
        _write_json(gen_dir / "env_config_golden.json", _env_config(env_gold))

        # Generator phase: revise (or create) the two setup scripts.
        failure = _invoke_agent(generator, gen_dir, round_no)
        if failure is None:
            missing = [n for n in GENERATOR_OUTPUTS if not (gen_dir / n).is_file()]
            if missing:
                failure = f"generator did not produce {', '.join(missing)}"
        if failure is not None:
            logger.warning("task %s round %d: %s", task.task_id, round_no, failure)
            last_report = _synthesized_failure(task, GENERATOR_OUTPUTS[0], failure)
            prior_review = render_review(last_report)
            (gen_dir / "REVIEW.md").write_text(prior_review)
            continue

        # Discriminator phase: fresh sandbox behind the barrier.
        _seed_sandbox(disc_dir, gen_dir, prior_review)
        violations = enforce_barrier(disc_dir)
        if violations:
            raise BarrierViolationError(
                f"sandbox contaminated before invocation: {violations}"
            )
        failure = _invoke_agent(discriminator, disc_dir, round_no)
        post_violations = enforce_barrier(disc_dir, allow_outputs=True)
        if post_violations:
            raise BarrierViolationError(
                f"foreign files in sandbox after invocation: {post_violations}"
            )
        if failure is None and not (disc_dir / "reward.py").is_file():
            failure = "discriminator did not produce reward.py"
        if failure is not None:
            logger.warning("task %s round %d: %s", task.task_id, round_no, failure)
            last_report = _synthesized_failure(task, "reward.py", failure)
            prior_review = render_review(last_report)
            (gen_dir / "REVIEW.md").write_text(prior_review)
            continue

        candidate = CandidateTuple(
            task.task_id,
            gen_dir / "initial_setup.py",
            gen_dir / "golden_patch.py",
            disc_dir / "reward.py",
        )
        report = verify(candidate, env_init, env_gold, verifier_config)
        last_report = report
        review_text = render_review(report)
        (disc_dir / "REVIEW.md").write_text(review_text)
        (gen_dir / "REVIEW.md").write_text(review_text)

        if report.passed:
            # The accepted reward and verdict join the generator-side record.
            shutil.copyfile(disc_dir / "reward.py", gen_dir / "reward.py")
            logger.info(
                "task %s accepted after %d round(s)", task.task_id, round_no
            )
            return Accepted(task, candidate, report, round_no)
        prior_review = review_text

    failing = (
        ", ".join(last_report.feedback.failing_conditions)
        if last_report is not None
        else "no rounds executed"
    )
    return Rejected(
        task,
        f"no agreement after {max_rounds} rounds (failing: {failing})",
        last_report,
        max_rounds,
    )


def emit_bundle(outcome: Accepted, final_root: Path | str) -> Path:
    """Write the self-contained seven-file bundle for an accepted tuple."""
    final_root = Path(final_root)
    bundle_dir = final_root / outcome.task.task_id
    if bundle_dir.exists():
        raise FileExistsError(f"bundle destination already exists: {bundle_dir}")
    bundle_dir.mkdir(parents=True)

    candidate = outcome.candidate
    shutil.copyfile(candidate.initial_setup, bundle_dir / "initial_setup.py")
    shutil.copyfile(candidate.golden_patch, bundle_dir / "golden_patch.py")
    shutil.copyfile(candidate.reward, bundle_dir / "reward.py")
    (bundle_dir / "REVIEW.md").write_text(render_review(outcome.report))
    _write_json(bundle_dir / "task_config.json", outcome.task.to_config())

    metadata = dict(outcome.task.metadata)
    config = {
        "vm_image": metadata.pop("vm_image", DEFAULT_VM_IMAGE),
        "snapshot": metadata.pop("snapshot", DEFAULT_SNAPSHOT),
        "observation_type": metadata.pop("observation_type", DEFAULT_OBSERVATION_TYPE),
        "step_budget": metadata.pop("step_budget", DEFAULT_STEP_BUDGET),
        "evaluator": {"entry_points": ["reward.py"]},
    }
    source_pass = metadata.pop("source_pass", "breadth")
    # Unconsumed metadata rides along untouched for downstream evaluators.
    config.update(metadata)
    _write_json(bundle_dir / "config.json", config)

    meta = {
        "task_id": outcome.task.task_id,
        "domain": outcome.task.domain,
        "topic": outcome.task.topic,
        "difficulty": outcome.task.difficulty,
        "source_pass": source_pass,
        "rounds_used": outcome.rounds_used,
    }
    _write_json(bundle_dir / "meta.json", meta)
    return bundle_dir
