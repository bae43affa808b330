import random

import pytest

from gymsmith.pattern_scanner import (
    PARSE_ERROR,
    Finding,
    PatternId,
    ScannerConfig,
    is_clean,
    scan,
)

from .fixtures import (
    CLEAN_STATE_DIFF_REWARD,
    HACK_A_DIRECT_BOOL,
    HACK_B_BARE_EXISTENCE,
    SUBPROCESS_REWARD,
    generate_clean_reward,
)


def patterns(source, config=None):
    return {f.pattern for f in scan(source, config)}


class TestHackFixtures:
    def test_hack_a_direct_bool(self):
        found = scan(HACK_A_DIRECT_BOOL)
        assert PatternId.P1_DIRECT_BOOL in {f.pattern for f in found}
        p1 = next(f for f in found if f.pattern is PatternId.P1_DIRECT_BOOL)
        assert "chart_verified" in p1.excerpt

    def test_hack_b_bare_existence(self):
        assert PatternId.P4_BARE_EXISTENCE in patterns(HACK_B_BARE_EXISTENCE)

    def test_subprocess_reference(self):
        assert PatternId.P5_CHILD_PROCESS in patterns(SUBPROCESS_REWARD)

    def test_canonical_reward_is_clean(self):
        assert scan(CLEAN_STATE_DIFF_REWARD) == []
        assert is_clean(CLEAN_STATE_DIFF_REWARD)

    def test_template_generated_rewards_are_clean(self):
        rng = random.Random(17)
        for _ in range(20):
            source = generate_clean_reward(rng)
            assert scan(source) == [], source


class TestP1DirectBool:
    def test_flag_must_guard_increment(self):
        source = "done_verified = True\nif done_verified:\n    print('hi')\n"
        assert PatternId.P1_DIRECT_BOOL not in patterns(source)

    def test_non_flag_name_ignored(self):
        source = "launched = True\nif launched:\n    score += 0.5\n"
        assert PatternId.P1_DIRECT_BOOL not in patterns(source)

    def test_computed_flag_ignored(self):
        source = (
            "chart_verified = check_chart()\nif chart_verified:\n    score += 0.5\n"
        )
        assert PatternId.P1_DIRECT_BOOL not in patterns(source)

    def test_score_eq_form_counts(self):
        source = "ok_flag = True\nif ok_flag:\n    score = score + 0.5\n"
        assert PatternId.P1_DIRECT_BOOL in patterns(source)


class TestP2Placeholder:
    def test_constant_flag_added_conditionally(self):
        source = (
            "points_ok = 0.4\n"
            "if condition:\n"
            "    score += points_ok\n"
        )
        assert PatternId.P2_PLACEHOLDER in patterns(source)

    def test_intervening_call_clears(self):
        source = (
            "points_ok = 0.4\n"
            "points_ok = recompute(points_ok)\n"
            "if condition:\n"
            "    score += points_ok\n"
        )
        assert PatternId.P2_PLACEHOLDER not in patterns(source)

    def test_intervening_reassignment_clears(self):
        source = (
            "points_ok = 0.4\n"
            "points_ok = other\n"
            "if condition:\n"
            "    score += points_ok\n"
        )
        assert PatternId.P2_PLACEHOLDER not in patterns(source)

    def test_unconditional_add_not_flagged(self):
        source = "points_ok = 0.4\nscore += points_ok\n"
        assert PatternId.P2_PLACEHOLDER not in patterns(source)


class TestP3HardcodedSuccess:
    def test_constant_success_no_reads(self):
        source = (
            "def check_format():\n"
            "    if True:\n"
            "        return 1.0\n"
            "    return 0.0\n"
        )
        assert PatternId.P3_HARDCODED_SUCCESS in patterns(source)

    def test_read_call_exonerates(self):
        source = (
            "def check_format(path):\n"
            "    data = open(path).read()\n"
            "    if 'title' in data:\n"
            "        return 1.0\n"
            "    return 0.0\n"
        )
        assert PatternId.P3_HARDCODED_SUCCESS not in patterns(source)

    def test_non_success_constants_ignored(self):
        source = "def weight():\n    return 0.3\n"
        assert PatternId.P3_HARDCODED_SUCCESS not in patterns(source)

    def test_half_point_constant_flagged(self):
        source = "def partial():\n    return 0.5\n"
        assert PatternId.P3_HARDCODED_SUCCESS in patterns(source)


class TestP4BareExistence:
    def test_exists_with_content_check_ok(self):
        source = (
            "import os\n"
            "if os.path.exists(p):\n"
            "    data = open(p).read()\n"
            "    if 'total' in data:\n"
            "        score += 0.3\n"
        )
        assert PatternId.P4_BARE_EXISTENCE not in patterns(source)

    def test_guard_mixing_content_call_ok(self):
        source = (
            "import os\n"
            "if os.path.exists(p) and parse(p).total > 0:\n"
            "    score += 0.3\n"
        )
        assert PatternId.P4_BARE_EXISTENCE not in patterns(source)

    def test_pathlib_variant_flagged(self):
        source = "if Path('/tmp/out.pdf').exists():\n    score += 1.0\n"
        assert PatternId.P4_BARE_EXISTENCE in patterns(source)

    def test_isfile_variant_flagged(self):
        source = "import os\nif os.path.isfile(p):\n    score += 0.4\n"
        assert PatternId.P4_BARE_EXISTENCE in patterns(source)

    def test_existence_without_increment_ok(self):
        source = "import os\nif os.path.exists(p):\n    found = True\n"
        assert PatternId.P4_BARE_EXISTENCE not in patterns(source)


class TestP5ChildProcess:
    def test_import_flagged(self):
        assert PatternId.P5_CHILD_PROCESS in patterns("import subprocess\n")

    def test_os_system_flagged(self):
        assert PatternId.P5_CHILD_PROCESS in patterns("import os\nos.system('ls')\n")

    def test_popen_attribute_flagged(self):
        assert PatternId.P5_CHILD_PROCESS in patterns("os.popen('ls').read()\n")

    def test_from_import_flagged(self):
        assert PatternId.P5_CHILD_PROCESS in patterns(
            "from subprocess import run\n"
        )

    def test_os_path_not_flagged(self):
        assert PatternId.P5_CHILD_PROCESS not in patterns(
            "import os.path\nos.path.exists('x')\n"
        )


class TestP6CommentOnly:
    def test_assume_comment_near_increment(self):
        source = (
            "# assume the chart is correct\n"
            "score += 0.5\n"
        )
        assert PatternId.P6_COMMENT_ONLY in patterns(source)

    def test_checked_guard_exonerates(self):
        source = (
            "# assume prior steps ran\n"
            "if check_chart(ws):\n"
            "    score += 0.5\n"
        )
        assert PatternId.P6_COMMENT_ONLY not in patterns(source)

    def test_distance_beyond_three_lines_ignored(self):
        source = (
            "# trust the setup\n"
            "a = 1\n"
            "b = 2\n"
            "c = 3\n"
            "score += 0.5\n"
        )
        assert PatternId.P6_COMMENT_ONLY not in patterns(source)

    def test_unguarded_increment_with_trust_comment(self):
        source = "x = 1\n# trust upstream validation here\nscore += 0.25\n"
        assert PatternId.P6_COMMENT_ONLY in patterns(source)


class TestScanContract:
    def test_parse_error_single_finding(self):
        found = scan("def broken(:\n")
        assert len(found) == 1
        assert found[0].pattern is None
        assert PARSE_ERROR in found[0].explanation
        assert not is_clean("def broken(:\n")

    def test_empty_source_clean(self):
        assert is_clean("")

    def test_deterministic(self):
        for _ in range(3):
            assert scan(HACK_A_DIRECT_BOOL) == scan(HACK_A_DIRECT_BOOL)

    def test_findings_ordered_by_line(self):
        source = HACK_B_BARE_EXISTENCE + "\n" + SUBPROCESS_REWARD
        lines = [f.line for f in scan(source)]
        assert lines == sorted(lines)

    def test_excerpt_appears_at_reported_line(self):
        for source in (HACK_A_DIRECT_BOOL, HACK_B_BARE_EXISTENCE, SUBPROCESS_REWARD):
            for finding in scan(source):
                assert finding.excerpt in source.splitlines()[finding.line - 1]

    def test_concatenation_monotonic(self):
        fragments = [
            HACK_A_DIRECT_BOOL,
            HACK_B_BARE_EXISTENCE,
            SUBPROCESS_REWARD,
            CLEAN_STATE_DIFF_REWARD,
        ]
        rng = random.Random(2)
        for _ in range(12):
            a, b = rng.choice(fragments), rng.choice(fragments)
            combined = scan(a + "\n" + b)
            combined_keys = {(f.pattern, f.line) for f in combined}
            offset = a.count("\n") + 1
            for f in scan(a):
                assert (f.pattern, f.line) in combined_keys
            for f in scan(b):
                assert (f.pattern, f.line + offset) in combined_keys

    def test_wire_shape(self):
        finding = scan(SUBPROCESS_REWARD)[0]
        wire = finding.to_wire()
        assert set(wire) == {"pattern", "line", "excerpt", "explanation"}

    def test_config_lexicons_must_be_nonempty(self):
        config = ScannerConfig(spawn_symbols=("sh_exec",))
        assert PatternId.P5_CHILD_PROCESS not in patterns(SUBPROCESS_REWARD, config)
        assert PatternId.P5_CHILD_PROCESS in patterns("sh_exec('ls')\n", config)
