"""Static scan of reward-script source for reward-hacking idioms.

Six patterns are detected through a mix of AST traversal, straight-line
dataflow, and comment/line rules:

- P1_DIRECT_BOOL: a literal True assigned to a verification-flag name
  that later guards a score increment.
- P2_PLACEHOLDER: a flag assigned a constant, then conditionally added
  to the score with no call or reassignment in between.
- P3_HARDCODED_SUCCESS: a function whose success path returns 0.5 or
  1.0 while its body never calls anything that reads the environment.
- P4_BARE_EXISTENCE: a score increment guarded solely by a
  path-existence call, with no content inspection in the guarded block.
- P5_CHILD_PROCESS: any reference to a child-process symbol.
- P6_COMMENT_ONLY: a score increment whose nearby comment asserts a
  check ("assume ...") while its guard performs no call at all.

The scanner is deliberately conservative: a false positive costs one
adversarial round, a false negative poisons a training tuple.
Unparseable source yields a single PARSE_ERROR finding.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from enum import Enum


class PatternId(str, Enum):
    P1_DIRECT_BOOL = "P1_DIRECT_BOOL"
    P2_PLACEHOLDER = "P2_PLACEHOLDER"
    P3_HARDCODED_SUCCESS = "P3_HARDCODED_SUCCESS"
    P4_BARE_EXISTENCE = "P4_BARE_EXISTENCE"
    P5_CHILD_PROCESS = "P5_CHILD_PROCESS"
    P6_COMMENT_ONLY = "P6_COMMENT_ONLY"


PARSE_ERROR = "PARSE_ERROR"


@dataclass(frozen=True)
class Finding:
    pattern: PatternId | None  # None marks a PARSE_ERROR finding
    line: int
    excerpt: str
    explanation: str

    def to_wire(self) -> dict:
        return {
            "pattern": self.pattern.value if self.pattern else PARSE_ERROR,
            "line": self.line,
            "excerpt": self.excerpt,
            "explanation": self.explanation,
        }


@dataclass(frozen=True)
class ScannerConfig:
    flag_lexicon: str = r"verified|passed|success|ok|correct|complete"
    spawn_symbols: tuple[str, ...] = ("subprocess", "os.system", "popen", "spawn")
    success_constants: frozenset[float] = frozenset({0.5, 1.0})
    read_symbols: tuple[str, ...] = (
        "open",
        "read",
        "load",
        "loads",
        "get",
        "fetch",
        "stat",
        "getsize",
        "listdir",
        "glob",
        "urlopen",
        "exists",
    )
    exist_symbols: tuple[str, ...] = ("exists", "isfile", "isdir", "lexists")
    comment_keywords: tuple[str, ...] = ("assume", "assumed", "trust")
    comment_distance: int = 3

    def __post_init__(self) -> None:
        lexicons = {
            "flag_lexicon": self.flag_lexicon,
            "spawn_symbols": self.spawn_symbols,
            "success_constants": self.success_constants,
            "read_symbols": self.read_symbols,
            "exist_symbols": self.exist_symbols,
            "comment_keywords": self.comment_keywords,
        }
        for name, lexicon in lexicons.items():
            if not lexicon:
                raise ValueError(f"scanner lexicon {name} must not be empty")

    def flag_re(self) -> re.Pattern[str]:
        return re.compile(self.flag_lexicon, re.IGNORECASE)


def _dotted(node: ast.AST) -> str | None:
    """Attribute chain like os.path.exists; on a dynamic base (call,
    subscript, ...) the trailing attribute chain alone is returned."""
    parts: list[str] = []
    while isinstance(node, ast.Attribute):
        parts.append(node.attr)
        node = node.value
    if isinstance(node, ast.Name):
        parts.append(node.id)
    if not parts:
        return None
    return ".".join(reversed(parts))


def _symbol_matches(dotted: str, symbol: str) -> bool:
    if "." in symbol:
        return dotted == symbol or dotted.startswith(symbol + ".")
    return symbol.lower() in (part.lower() for part in dotted.split("."))


def _calls_in(node: ast.AST) -> list[ast.Call]:
    return [n for n in ast.walk(node) if isinstance(n, ast.Call)]


def _call_names(node: ast.AST) -> list[str]:
    names = []
    for call in _calls_in(node):
        dotted = _dotted(call.func)
        if dotted:
            names.append(dotted)
    return names


def _is_score_increment(stmt: ast.stmt) -> bool:
    """score += x, or score = score + x."""
    if isinstance(stmt, ast.AugAssign) and isinstance(stmt.op, ast.Add):
        return True
    if (
        isinstance(stmt, ast.Assign)
        and len(stmt.targets) == 1
        and isinstance(stmt.targets[0], ast.Name)
        and isinstance(stmt.value, ast.BinOp)
        and isinstance(stmt.value.op, ast.Add)
        and isinstance(stmt.value.left, ast.Name)
        and stmt.value.left.id == stmt.targets[0].id
    ):
        return True
    return False


def _names_in(node: ast.AST) -> set[str]:
    return {n.id for n in ast.walk(node) if isinstance(n, ast.Name)}


class _Scan:
    def __init__(self, source: str, config: ScannerConfig) -> None:
        self.source = source
        self.lines = source.splitlines()
        self.config = config
        self.flag_re = config.flag_re()
        self.findings: list[Finding] = []

    def excerpt(self, line: int) -> str:
        if 1 <= line <= len(self.lines):
            return self.lines[line - 1].strip()[:120]
        return ""

    def add(self, pattern: PatternId, line: int, explanation: str) -> None:
        self.findings.append(Finding(pattern, line, self.excerpt(line), explanation))

    def run(self) -> list[Finding]:
        try:
            tree = ast.parse(self.source)
        except SyntaxError as exc:
            line = exc.lineno or 1
            return [
                Finding(
                    None,
                    line,
                    self.excerpt(line),
                    f"{PARSE_ERROR}: {exc.msg}",
                )
            ]
        parents: dict[ast.AST, ast.AST] = {}
        for node in ast.walk(tree):
            for child in ast.iter_child_nodes(node):
                parents[child] = node

        self.scan_child_process(tree)
        self.scan_direct_bool(tree)
        self.scan_placeholder(tree)
        self.scan_hardcoded_success(tree)
        self.scan_bare_existence(tree)
        self.scan_comment_only(tree, parents)

        ordered = sorted(
            self.findings, key=lambda f: (f.line, f.pattern.value if f.pattern else "")
        )
        unique: list[Finding] = []
        seen: set[tuple[PatternId | None, int]] = set()
        for finding in ordered:
            key = (finding.pattern, finding.line)
            if key not in seen:
                seen.add(key)
                unique.append(finding)
        return unique

    # P5 ------------------------------------------------------------------
    def scan_child_process(self, tree: ast.AST) -> None:
        for node in ast.walk(tree):
            if isinstance(node, (ast.Name, ast.Attribute)):
                self._check_spawn(_dotted(node), node.lineno)
            elif isinstance(node, ast.Import):
                for alias in node.names:
                    self._check_spawn(alias.name, node.lineno)
            elif isinstance(node, ast.ImportFrom):
                module = node.module or ""
                for alias in node.names:
                    self._check_spawn(
                        f"{module}.{alias.name}".lstrip("."), node.lineno
                    )

    def _check_spawn(self, dotted: str | None, line: int) -> None:
        if not dotted:
            return
        for symbol in self.config.spawn_symbols:
            if _symbol_matches(dotted, symbol):
                self.add(
                    PatternId.P5_CHILD_PROCESS,
                    line,
                    f"reference to child-process symbol '{symbol}' via '{dotted}'",
                )
                return

    # P1 ------------------------------------------------------------------
    def scan_direct_bool(self, tree: ast.AST) -> None:
        true_flags: dict[str, list[int]] = {}
        for node in ast.walk(tree):
            if (
                isinstance(node, ast.Assign)
                and len(node.targets) == 1
                and isinstance(node.targets[0], ast.Name)
                and isinstance(node.value, ast.Constant)
                and node.value.value is True
            ):
                name = node.targets[0].id
                if self.flag_re.search(name):
                    true_flags.setdefault(name, []).append(node.lineno)
        if not true_flags:
            return
        for node in ast.walk(tree):
            if not isinstance(node, ast.If):
                continue
            guard_names = _names_in(node.test)
            has_increment = any(
                _is_score_increment(inner)
                for stmt in node.body
                for inner in ast.walk(stmt)
                if isinstance(inner, (ast.AugAssign, ast.Assign))
            )
            if not has_increment:
                continue
            for name, assign_lines in true_flags.items():
                earlier = [line for line in assign_lines if line < node.lineno]
                if name in guard_names and earlier:
                    # Blame the nearest assignment above the guard.
                    self.add(
                        PatternId.P1_DIRECT_BOOL,
                        max(earlier),
                        f"flag '{name}' is assigned literal True and guards a "
                        f"score increment at line {node.lineno}",
                    )

    # P2 ------------------------------------------------------------------
    def scan_placeholder(self, tree: ast.AST) -> None:
        for block in self._blocks(tree):
            tracked: dict[str, int] = {}
            for stmt in block:
                if isinstance(stmt, ast.If):
                    for inner in stmt.body + stmt.orelse:
                        if not _is_score_increment(inner):
                            continue
                        value = (
                            inner.value
                            if isinstance(inner, ast.AugAssign)
                            else inner.value.right  # type: ignore[union-attr]
                        )
                        for name in _names_in(value) & tracked.keys():
                            self.add(
                                PatternId.P2_PLACEHOLDER,
                                tracked[name],
                                f"flag '{name}' holds a constant with no "
                                f"intervening evaluation when added to the score "
                                f"at line {inner.lineno}",
                            )
                if self._is_compound(stmt) or _calls_in(stmt):
                    tracked.clear()
                    continue
                if (
                    isinstance(stmt, ast.Assign)
                    and len(stmt.targets) == 1
                    and isinstance(stmt.targets[0], ast.Name)
                ):
                    name = stmt.targets[0].id
                    tracked.pop(name, None)
                    if isinstance(stmt.value, ast.Constant) and self.flag_re.search(
                        name
                    ):
                        tracked[name] = stmt.lineno
                elif isinstance(stmt, (ast.Assign, ast.AugAssign)):
                    for name in _names_in(
                        stmt.targets[0] if isinstance(stmt, ast.Assign) else stmt.target
                    ):
                        tracked.pop(name, None)

    @staticmethod
    def _is_compound(stmt: ast.stmt) -> bool:
        return isinstance(
            stmt,
            (
                ast.If,
                ast.For,
                ast.While,
                ast.With,
                ast.Try,
                ast.FunctionDef,
                ast.AsyncFunctionDef,
                ast.ClassDef,
            ),
        )

    def _blocks(self, tree: ast.AST):
        for node in ast.walk(tree):
            for attr in ("body", "orelse", "finalbody"):
                block = getattr(node, attr, None)
                if isinstance(block, list) and block and isinstance(block[0], ast.stmt):
                    yield block

    # P3 ------------------------------------------------------------------
    def scan_hardcoded_success(self, tree: ast.AST) -> None:
        for node in ast.walk(tree):
            if not isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                continue
            success_returns = [
                stmt
                for stmt in ast.walk(node)
                if isinstance(stmt, ast.Return)
                and isinstance(stmt.value, ast.Constant)
                and not isinstance(stmt.value.value, bool)
                and isinstance(stmt.value.value, (int, float))
                and float(stmt.value.value) in self.config.success_constants
            ]
            if not success_returns:
                continue
            reads = [
                name
                for name in _call_names(node)
                if any(
                    _symbol_matches(name, symbol)
                    for symbol in self.config.read_symbols
                )
            ]
            if reads:
                continue
            for stmt in success_returns:
                self.add(
                    PatternId.P3_HARDCODED_SUCCESS,
                    stmt.lineno,
                    f"function '{node.name}' returns constant "
                    f"{stmt.value.value} without inspecting the environment",
                )

    # P4 ------------------------------------------------------------------
    def scan_bare_existence(self, tree: ast.AST) -> None:
        for node in ast.walk(tree):
            if not isinstance(node, ast.If):
                continue
            test_calls = _calls_in(node.test)
            if not test_calls:
                continue
            existence = [
                call
                for call in test_calls
                if (_dotted(call.func) or "").split(".")[-1].lower()
                in self.config.exist_symbols
            ]
            if not existence:
                continue
            # "Solely existence": every call in the guard is either an
            # existence check or part of computing one (its receiver/args).
            absorbed: set[int] = set()
            for call in existence:
                absorbed.update(id(n) for n in ast.walk(call))
            if any(id(call) not in absorbed for call in test_calls):
                continue
            if not any(_is_score_increment(s) for s in node.body):
                continue
            content_symbols = [
                s for s in self.config.read_symbols if s not in self.config.exist_symbols
            ]
            body_reads = [
                name
                for stmt in node.body
                for name in _call_names(stmt)
                if any(_symbol_matches(name, symbol) for symbol in content_symbols)
            ]
            if body_reads:
                continue
            self.add(
                PatternId.P4_BARE_EXISTENCE,
                node.lineno,
                f"score awarded purely on {_dotted(existence[0].func)} with "
                f"no content inspection in the guarded block",
            )

    # P6 ------------------------------------------------------------------
    def scan_comment_only(
        self, tree: ast.AST, parents: dict[ast.AST, ast.AST]
    ) -> None:
        keyword_re = re.compile(
            r"#.*\b(" + "|".join(self.config.comment_keywords) + r")\b",
            re.IGNORECASE,
        )
        comment_lines = [
            i + 1 for i, text in enumerate(self.lines) if keyword_re.search(text)
        ]
        if not comment_lines:
            return
        increments = [
            stmt
            for stmt in ast.walk(tree)
            if isinstance(stmt, (ast.AugAssign, ast.Assign))
            and _is_score_increment(stmt)
        ]
        for stmt in increments:
            near = [
                c
                for c in comment_lines
                if 0 < stmt.lineno - c <= self.config.comment_distance
            ]
            if not near:
                continue
            guard = self._enclosing_if(stmt, parents)
            if guard is not None and _calls_in(guard.test):
                continue
            self.add(
                PatternId.P6_COMMENT_ONLY,
                stmt.lineno,
                f"score increment relies on the comment at line {near[-1]} "
                f"instead of a checked guard",
            )

    @staticmethod
    def _enclosing_if(
        node: ast.AST, parents: dict[ast.AST, ast.AST]
    ) -> ast.If | None:
        cursor = parents.get(node)
        while cursor is not None:
            if isinstance(cursor, ast.If):
                return cursor
            cursor = parents.get(cursor)
        return None


def scan(source: str, config: ScannerConfig | None = None) -> list[Finding]:
    """Deterministic findings, ordered by line then pattern id."""
    return _Scan(source, config or ScannerConfig()).run()


def is_clean(source: str, config: ScannerConfig | None = None) -> bool:
    return not scan(source, config)
