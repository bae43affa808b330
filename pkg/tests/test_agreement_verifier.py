import random
from pathlib import Path

import pytest

from gymsmith.agreement_verifier import (
    FAIL,
    PASS,
    AgreementReport,
    CandidateTuple,
    ConditionResult,
    Feedback,
    ReviewSchemaError,
    VerifierConfig,
    parse_review,
    render_review,
    verify,
)
from gymsmith.reward_harness import EnvironmentHandle

from .fixtures import (
    OPTIMISTIC_VALUES,
    PESSIMISTIC_VALUES,
    SUBPROCESS_REWARD,
    WORKBOOK_INITIAL_SETUP,
    WORKBOOK_REWARD,
    workbook_golden_patch,
)


def make_env_pair(tmp_path) -> tuple[EnvironmentHandle, EnvironmentHandle]:
    init_root = tmp_path / "env_init"
    gold_root = tmp_path / "env_gold"
    init_root.mkdir()
    gold_root.mkdir()
    return EnvironmentHandle(root=init_root), EnvironmentHandle(root=gold_root)


def write_tuple(tmp_path, golden_source, reward_source=WORKBOOK_REWARD):
    scripts = tmp_path / "scripts"
    scripts.mkdir(parents=True, exist_ok=True)
    initial = scripts / "initial_setup.py"
    golden = scripts / "golden_patch.py"
    reward = scripts / "reward.py"
    initial.write_text(WORKBOOK_INITIAL_SETUP)
    golden.write_text(golden_source)
    reward.write_text(reward_source)
    return CandidateTuple("calc_scenarios_008", initial, golden, reward)


class TestVerifyRoundTrace:
    def test_round_one_fails_on_golden_reward(self, tmp_path):
        candidate = write_tuple(tmp_path, workbook_golden_patch(PESSIMISTIC_VALUES))
        env_init, env_gold = make_env_pair(tmp_path)
        report = verify(candidate, env_init, env_gold)
        assert report.verdict == FAIL
        c3 = report.condition("C3")
        assert c3.passed is False
        assert abs(c3.observed - 0.65) <= 1e-9
        assert report.condition("C1").passed
        assert report.condition("C2").passed
        assert report.condition("C4").passed
        assert report.condition("C4").observed == 0.0
        assert report.condition("C5").passed
        assert report.feedback.failing_conditions == ("C3",)

    def test_round_two_passes(self, tmp_path):
        candidate = write_tuple(tmp_path, workbook_golden_patch(OPTIMISTIC_VALUES))
        env_init, env_gold = make_env_pair(tmp_path)
        report = verify(candidate, env_init, env_gold)
        assert report.verdict == PASS
        assert abs(report.condition("C3").observed - 1.0) <= 1e-9
        assert report.condition("C4").observed == 0.0
        assert report.feedback.recommended_action == "No issues found."

    def test_round_trip_through_review(self, tmp_path):
        candidate = write_tuple(tmp_path, workbook_golden_patch(PESSIMISTIC_VALUES))
        env_init, env_gold = make_env_pair(tmp_path)
        report = verify(candidate, env_init, env_gold)
        assert parse_review(render_review(report)) == report


class TestVerifyFailureModes:
    def test_initial_setup_failure_skips_c4(self, tmp_path):
        candidate = write_tuple(tmp_path, workbook_golden_patch(OPTIMISTIC_VALUES))
        candidate.initial_setup.write_text("raise SystemExit(1)\n")
        env_init, env_gold = make_env_pair(tmp_path)
        report = verify(candidate, env_init, env_gold)
        assert report.verdict == FAIL
        assert report.condition("C1").passed is False
        assert report.condition("C4").passed is False
        assert "skipped" in report.condition("C4").evidence
        # The golden side still runs for maximal feedback.
        assert report.condition("C2").passed
        assert report.condition("C3").passed

    def test_dirty_reward_is_never_executed(self, tmp_path):
        sentinel = tmp_path / "executed.marker"
        reward_source = SUBPROCESS_REWARD + f"open({str(sentinel)!r}, 'w').close()\n"
        candidate = write_tuple(
            tmp_path, workbook_golden_patch(OPTIMISTIC_VALUES), reward_source
        )
        env_init, env_gold = make_env_pair(tmp_path)
        report = verify(candidate, env_init, env_gold)
        assert report.verdict == FAIL
        c5 = report.condition("C5")
        assert c5.passed is False
        assert c5.matched_pattern == "P5_CHILD_PROCESS"
        assert "integrity" in report.condition("C3").evidence
        assert "integrity" in report.condition("C4").evidence
        assert not sentinel.exists()
        assert report.condition("C1").passed and report.condition("C2").passed

    def test_reward_without_protocol_line(self, tmp_path):
        candidate = write_tuple(
            tmp_path,
            workbook_golden_patch(OPTIMISTIC_VALUES),
            "print('looks good to me')\n",
        )
        env_init, env_gold = make_env_pair(tmp_path)
        report = verify(candidate, env_init, env_gold)
        assert report.condition("C3").passed is False
        assert "REWARD" in report.condition("C3").evidence
        assert report.condition("C3").observed is None

    def test_shared_root_rejected(self, tmp_path):
        candidate = write_tuple(tmp_path, workbook_golden_patch(OPTIMISTIC_VALUES))
        root = tmp_path / "env"
        root.mkdir()
        with pytest.raises(ValueError):
            verify(
                candidate,
                EnvironmentHandle(root=root),
                EnvironmentHandle(root=root),
            )

    def test_unreadable_reward_fails_c5(self, tmp_path):
        candidate = write_tuple(tmp_path, workbook_golden_patch(OPTIMISTIC_VALUES))
        candidate = CandidateTuple(
            candidate.task_ref,
            candidate.initial_setup,
            candidate.golden_patch,
            Path(tmp_path / "missing_reward.py"),
        )
        env_init, env_gold = make_env_pair(tmp_path)
        report = verify(candidate, env_init, env_gold)
        assert report.condition("C5").passed is False
        assert report.verdict == FAIL

    def test_init_epsilon_configurable(self, tmp_path):
        reward_source = "print('REWARD: 0.05')\n"
        candidate = write_tuple(
            tmp_path, workbook_golden_patch(OPTIMISTIC_VALUES), reward_source
        )
        env_init, env_gold = make_env_pair(tmp_path)
        strict = verify(candidate, env_init, env_gold)
        assert strict.condition("C4").passed is False
        relaxed_base = tmp_path / "relaxed"
        relaxed_base.mkdir()
        env_init2, env_gold2 = make_env_pair(relaxed_base)
        relaxed = verify(
            candidate,
            env_init2,
            env_gold2,
            VerifierConfig(init_epsilon=0.1),
        )
        assert relaxed.condition("C4").passed is True


def make_report(rng: random.Random) -> AgreementReport:
    tricky = [
        "clean",
        "exit 1 in 0.02s; stderr: Boom: unexpected 'token'",
        'quoted "evidence" with backslash \\ and unicode Ω',
        "line\nbreak and tab\tinside",
        "observed 0.65",
        "",
    ]
    conditions = []
    for condition_id in ("C1", "C2", "C3", "C4", "C5"):
        passed = rng.random() < 0.6
        observed = None
        if condition_id in ("C3", "C4") and rng.random() < 0.8:
            observed = rng.choice([0.0, 1.0, 0.65, 1e-9, 0.3333333333333333])
        matched = None
        if condition_id == "C5" and not passed:
            matched = rng.choice(["P5_CHILD_PROCESS", "P1_DIRECT_BOOL", "PARSE_ERROR"])
        conditions.append(
            ConditionResult(
                condition_id, passed, rng.choice(tricky), observed, matched
            )
        )
    failing = tuple(c.id for c in conditions if not c.passed)
    verdict = PASS if not failing else FAIL
    feedback = Feedback(
        failing,
        tuple(rng.choice(tricky) for _ in range(len(failing))),
        rng.choice(tricky) or "n/a",
    )
    return AgreementReport(verdict, tuple(conditions), feedback)


class TestReviewDocument:
    def test_verdict_is_first_field(self):
        report = make_report(random.Random(1))
        first_line = render_review(report).splitlines()[0]
        assert first_line.startswith("verdict: ")

    def test_round_trip_fuzz(self):
        rng = random.Random(71)
        for _ in range(200):
            report = make_report(rng)
            assert parse_review(render_review(report)) == report

    def test_failing_conditions_exact(self):
        rng = random.Random(5)
        while True:
            report = make_report(rng)
            failed = {c.id for c in report.conditions if not c.passed}
            if failed == {"C3", "C4"}:
                break
        parsed = parse_review(render_review(report))
        assert parsed.feedback.failing_conditions == ("C3", "C4")

    def test_comment_lines_tolerated(self):
        report = make_report(random.Random(9))
        text = "# review emitted by discriminator\n" + render_review(report)
        assert parse_review(text) == report

    @pytest.mark.parametrize(
        "mutate, fragment",
        [
            (lambda t: t.replace("verdict: ", "outcome: ", 1), "verdict"),
            (lambda t: t.replace("C3_golden_reward_eq_1", "C3_row"), "five condition"),
            (lambda t: t.replace("pass: true", "pass: maybe"), "pass"),
            (
                lambda t: t.replace("failing_conditions: [", "failing_conditions: [C9, ", 1),
                "failing_conditions",
            ),
            (lambda t: "verdict: WEIRD\n" + t.split("\n", 1)[1], "verdict"),
        ],
    )
    def test_schema_violations(self, mutate, fragment):
        rng = random.Random(3)
        report = make_report(rng)
        broken = mutate(render_review(report))
        with pytest.raises(ReviewSchemaError) as err:
            parse_review(broken)
        assert fragment.split()[0] in str(err.value) or fragment in str(err.value)

    def test_inconsistent_verdict_rejected(self):
        report = make_report(random.Random(4))
        flipped = AgreementReport(
            PASS if report.verdict == FAIL else FAIL,
            report.conditions,
            report.feedback,
        )
        with pytest.raises(ReviewSchemaError):
            parse_review(render_review(flipped))

    def test_lf_endings(self):
        text = render_review(make_report(random.Random(6)))
        assert "\r" not in text
        assert text.endswith("\n")
