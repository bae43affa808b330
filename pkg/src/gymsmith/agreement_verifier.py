"""Five-condition agreement check over a candidate task tuple.

A tuple (task, initial_setup, golden_patch, reward) is accepted only
when all five conditions hold:

- C1: initial_setup runs to completion (exit 0) on the initial env.
- C2: golden_patch runs to completion (exit 0) on the golden env.
- C3: the reward scores the golden env exactly 1.0.
- C4: the reward scores the initial env 0.0 (configurable epsilon).
- C5: the reward source contains no forbidden pattern.

The static scan runs first and gates reward execution: a reward that
fails integrity is never run, and C3/C4 are recorded as skipped
failures. C3 is likewise skipped when the golden setup fails, C4 when
the initial setup fails; everything runnable still runs so a single
round yields maximal feedback. Failures never raise from ``verify``;
they surface as failed conditions with evidence.

The verdict travels as a REVIEW document (rendered / parsed here) whose
field order is stable and machine-parseable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .pattern_scanner import PARSE_ERROR, ScannerConfig, scan
from .reward_harness import (
    DEFAULT_REWARD_TIMEOUT,
    DEFAULT_SETUP_TIMEOUT,
    EnvironmentHandle,
    ExecutionResult,
    RewardError,
    evaluate_reward,
    run_script,
)

PASS = "PASS"
FAIL = "FAIL"

CONDITION_IDS = ("C1", "C2", "C3", "C4", "C5")

REVIEW_KEYS = {
    "C1": "C1_initial_executes",
    "C2": "C2_golden_executes",
    "C3": "C3_golden_reward_eq_1",
    "C4": "C4_initial_reward_eq_0",
    "C5": "C5_no_forbidden_pattern",
}
_KEY_TO_ID = {v: k for k, v in REVIEW_KEYS.items()}


class ReviewSchemaError(ValueError):
    """REVIEW text violating the schema; message names the field path."""


@dataclass(frozen=True)
class CandidateTuple:
    task_ref: str
    initial_setup: Path
    golden_patch: Path
    reward: Path

    def paths(self) -> tuple[Path, Path, Path]:
        return (self.initial_setup, self.golden_patch, self.reward)


@dataclass(frozen=True)
class ConditionResult:
    id: str
    passed: bool
    evidence: str
    observed: float | None = None
    matched_pattern: str | None = None


@dataclass(frozen=True)
class Feedback:
    failing_conditions: tuple[str, ...] = ()
    setup_issues: tuple[str, ...] = ()
    recommended_action: str = ""


@dataclass(frozen=True)
class AgreementReport:
    verdict: str
    conditions: tuple[ConditionResult, ...]
    feedback: Feedback

    def condition(self, condition_id: str) -> ConditionResult:
        for result in self.conditions:
            if result.id == condition_id:
                return result
        raise KeyError(condition_id)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS


@dataclass
class VerifierConfig:
    golden_tolerance: float = 1e-9
    init_epsilon: float = 0.0
    setup_timeout: float = DEFAULT_SETUP_TIMEOUT
    reward_timeout: float = DEFAULT_REWARD_TIMEOUT
    scanner: ScannerConfig = field(default_factory=ScannerConfig)


def _run_evidence(result: ExecutionResult) -> str:
    if result.timed_out:
        return f"timed out after {result.duration:.1f}s"
    tail = ""
    if result.exit_code != 0 and result.stderr.strip():
        tail = f"; stderr: {result.stderr.strip().splitlines()[-1][:160]}"
    return f"exit {result.exit_code} in {result.duration:.2f}s{tail}"


def _setup_condition(
    condition_id: str, env: EnvironmentHandle, script: Path, timeout: float
) -> ConditionResult:
    try:
        result = run_script(env, script, timeout)
    except OSError as exc:
        return ConditionResult(condition_id, False, f"could not run script: {exc}")
    return ConditionResult(condition_id, result.ok, _run_evidence(result))


def _reward_condition(
    condition_id: str,
    env: EnvironmentHandle,
    reward: Path,
    timeout: float,
    gate_ok: bool,
    gate_evidence: str,
    check,
) -> ConditionResult:
    if not gate_ok:
        return ConditionResult(condition_id, False, f"skipped: {gate_evidence}")
    try:
        outcome = evaluate_reward(env, reward, timeout)
    except RewardError as exc:
        return ConditionResult(condition_id, False, str(exc))
    except OSError as exc:
        return ConditionResult(condition_id, False, f"could not run reward: {exc}")
    observed = outcome.score
    return ConditionResult(
        condition_id, check(observed), f"observed {observed}", observed=observed
    )


def verify(
    candidate: CandidateTuple,
    env_init: EnvironmentHandle,
    env_gold: EnvironmentHandle,
    config: VerifierConfig | None = None,
) -> AgreementReport:
    """Evaluate all five conditions and assemble the REVIEW report."""
    config = config or VerifierConfig()
    if Path(env_init.root).resolve() == Path(env_gold.root).resolve():
        raise ValueError("initial and golden environments must not share a root")

    # C5 first: cheapest check, and an unsafe reward must never execute.
    try:
        reward_source = Path(candidate.reward).read_text()
        findings = scan(reward_source, config.scanner)
    except OSError as exc:
        findings = None
        c5 = ConditionResult(
            "C5", False, f"reward unreadable: {exc}", matched_pattern=PARSE_ERROR
        )
    if findings is not None:
        if findings:
            first = findings[0]
            matched = first.pattern.value if first.pattern else PARSE_ERROR
            c5 = ConditionResult(
                "C5",
                False,
                f"matched {matched} at line {first.line}: {first.explanation}",
                matched_pattern=matched,
            )
        else:
            c5 = ConditionResult("C5", True, "clean", matched_pattern=None)

    c1 = _setup_condition("C1", env_init, candidate.initial_setup, config.setup_timeout)
    c2 = _setup_condition("C2", env_gold, candidate.golden_patch, config.setup_timeout)

    gate3_ok = c2.passed and c5.passed
    gate3_why = "golden setup failed" if not c2.passed else "reward failed integrity scan"
    c3 = _reward_condition(
        "C3",
        env_gold,
        candidate.reward,
        config.reward_timeout,
        gate3_ok,
        gate3_why,
        lambda score: abs(score - 1.0) <= config.golden_tolerance,
    )

    gate4_ok = c1.passed and c5.passed
    gate4_why = "initial setup failed" if not c1.passed else "reward failed integrity scan"
    c4 = _reward_condition(
        "C4",
        env_init,
        candidate.reward,
        config.reward_timeout,
        gate4_ok,
        gate4_why,
        lambda score: score <= config.init_epsilon,
    )

    conditions = (c1, c2, c3, c4, c5)
    verdict = PASS if all(c.passed for c in conditions) else FAIL
    return AgreementReport(verdict, conditions, _build_feedback(conditions))


def _build_feedback(conditions: tuple[ConditionResult, ...]) -> Feedback:
    failing = tuple(c.id for c in conditions if not c.passed)
    if not failing:
        return Feedback((), (), "No issues found.")
    issues = []
    for c in conditions:
        if c.passed:
            continue
        if c.id == "C1":
            issues.append(f"Fix initial_setup so it runs cleanly ({c.evidence}).")
        elif c.id == "C2":
            issues.append(f"Fix golden_patch so it runs cleanly ({c.evidence}).")
        elif c.id == "C3":
            if c.observed is not None:
                issues.append(
                    f"Golden state scores {c.observed} instead of 1.0; align "
                    f"golden_patch with every reward component."
                )
            else:
                issues.append(f"Golden reward not evaluated ({c.evidence}).")
        elif c.id == "C4":
            if c.observed is not None:
                issues.append(
                    f"Initial state scores {c.observed} but must score 0.0; "
                    f"remove task-completion artifacts from initial_setup."
                )
            else:
                issues.append(f"Initial reward not evaluated ({c.evidence}).")
        else:
            issues.append(
                f"Reward script must be rewritten without forbidden patterns "
                f"({c.evidence})."
            )
    recommendation = (
        "Address the failing conditions "
        + ", ".join(failing)
        + " before the next round: "
        + " ".join(issues)
    )
    return Feedback(failing, tuple(issues), recommendation)


# -- REVIEW document rendering / parsing --------------------------------------


def _scalar(value: object) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        text = repr(value)
        # YAML float resolution needs a dot in the mantissa ("1e-09" -> str).
        if "e" in text and "." not in text.split("e")[0]:
            mantissa, exponent = text.split("e")
            text = f"{mantissa}.0e{exponent}"
        return text
    return json.dumps(value, ensure_ascii=False)


def render_review(report: AgreementReport) -> str:
    """Canonical REVIEW text: stable field order, LF endings, YAML-parseable."""
    lines = [f"verdict: {report.verdict}", "agreement_table:"]
    for condition_id in CONDITION_IDS:
        c = report.condition(condition_id)
        parts = [
            f"pass: {_scalar(c.passed)}",
            f"evidence: {_scalar(c.evidence)}",
            f"observed: {_scalar(c.observed)}",
        ]
        if condition_id == "C5":
            parts.append(f"matched_pattern: {_scalar(c.matched_pattern)}")
        lines.append(f"  {REVIEW_KEYS[condition_id]}: {{{', '.join(parts)}}}")
    fb = report.feedback
    lines.append("feedback_to_setup_gen:")
    lines.append(
        "  failing_conditions: [" + ", ".join(fb.failing_conditions) + "]"
    )
    lines.append(
        "  setup_issues: ["
        + ", ".join(_scalar(issue) for issue in fb.setup_issues)
        + "]"
    )
    lines.append(f"  recommended_action: {_scalar(fb.recommended_action)}")
    return "\n".join(lines) + "\n"


def _require(mapping: dict, key: str, kinds, where: str):
    if not isinstance(mapping, dict) or key not in mapping:
        raise ReviewSchemaError(f"{where}: missing field '{key}'")
    value = mapping[key]
    if kinds is not None and not isinstance(value, kinds):
        raise ReviewSchemaError(f"{where}.{key}: unexpected type {type(value).__name__}")
    return value


def parse_review(text: str) -> AgreementReport:
    """Inverse of render_review; rejects schema violations with field paths."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ReviewSchemaError(f"unparseable REVIEW text: {exc}") from exc
    if not isinstance(doc, dict):
        raise ReviewSchemaError("REVIEW root must be a mapping")

    verdict = _require(doc, "verdict", str, "verdict")
    if verdict not in (PASS, FAIL):
        raise ReviewSchemaError(f"verdict: invalid value {verdict!r}")

    table = _require(doc, "agreement_table", dict, "agreement_table")
    if set(table) != set(_KEY_TO_ID):
        raise ReviewSchemaError(
            "agreement_table: expected exactly the five condition rows"
        )
    conditions = []
    for condition_id in CONDITION_IDS:
        key = REVIEW_KEYS[condition_id]
        row = table[key]
        where = f"agreement_table.{key}"
        passed = _require(row, "pass", bool, where)
        evidence = _require(row, "evidence", str, where)
        observed = _require(row, "observed", (int, float, type(None)), where)
        if isinstance(observed, bool):
            raise ReviewSchemaError(f"{where}.observed: unexpected type bool")
        matched = None
        if condition_id == "C5":
            matched = _require(row, "matched_pattern", (str, type(None)), where)
        conditions.append(
            ConditionResult(
                condition_id,
                passed,
                evidence,
                float(observed) if observed is not None else None,
                matched,
            )
        )

    fb = _require(doc, "feedback_to_setup_gen", dict, "feedback_to_setup_gen")
    where = "feedback_to_setup_gen"
    failing = _require(fb, "failing_conditions", list, where)
    for item in failing:
        if item not in CONDITION_IDS:
            raise ReviewSchemaError(f"{where}.failing_conditions: invalid id {item!r}")
    issues = _require(fb, "setup_issues", list, where)
    for i, item in enumerate(issues):
        if not isinstance(item, str):
            raise ReviewSchemaError(f"{where}.setup_issues[{i}]: not text")
    action = _require(fb, "recommended_action", str, where)

    report = AgreementReport(
        verdict,
        tuple(conditions),
        Feedback(tuple(failing), tuple(issues), action),
    )
    all_passed = all(c.passed for c in report.conditions)
    if (verdict == PASS) != all_passed:
        raise ReviewSchemaError("verdict: inconsistent with agreement_table")
    return report
