"""Static source-code metrics: size, cyclomatic complexity, Halstead family.

Token classification table (applied to the standard token stream):

================  =========================================================
operands          non-keyword NAME tokens, NUMBER, STRING, and the constant
                  keywords True/False/None
operators         all OP tokens except the closing brackets ) ] } (each
                  bracket pair counts once, via its opener), plus the keyword
                  operators and/or/not/in/is
ignored           statement keywords (def, return, if, for, ...), comments,
                  NEWLINE/NL/INDENT/DEDENT and other layout tokens
================  =========================================================

Soft keywords (match/case) tokenize as NAME and therefore count as operands.

Cyclomatic complexity is computed per block, where a block is a function or
method definition (nested definitions are separate blocks whose bodies do not
contribute to the enclosing block). Decision points: if / elif (If), ternary
expressions (IfExp), for / async for / while loops, each comprehension clause
plus each of its filter conditions, and/or connectives (n-1 per BoolOp chain),
except handlers, assert statements, and match cases. Block complexity is
1 + decision points; a file with no blocks reports average complexity 0.0.
"""

from __future__ import annotations

import ast
import io
import keyword
import math
import token as token_types
import tokenize
from dataclasses import dataclass

from .errors import SourceMetricError

KEYWORD_OPERATORS = frozenset({"and", "or", "not", "in", "is"})
CONSTANT_KEYWORDS = frozenset({"True", "False", "None"})
CLOSING_BRACKETS = frozenset({")", "]", "}"})

CODE_METRIC_NAMES = (
    "sloc",
    "lloc",
    "average_cc_file",
    "num_complexity_blocks",
    "hal_volume",
    "hal_difficulty",
    "hal_effort",
)


@dataclass(frozen=True)
class HalsteadCounts:
    distinct_operators: int
    distinct_operands: int
    total_operators: int
    total_operands: int

    @property
    def vocabulary(self) -> int:
        return self.distinct_operators + self.distinct_operands

    @property
    def length(self) -> int:
        return self.total_operators + self.total_operands

    @property
    def volume(self) -> float:
        if self.vocabulary == 0:
            return 0.0
        return self.length * math.log2(self.vocabulary)

    @property
    def difficulty(self) -> float:
        if self.distinct_operands == 0:
            return 0.0
        return (self.distinct_operators / 2.0) * (self.total_operands / self.distinct_operands)

    @property
    def effort(self) -> float:
        return self.volume * self.difficulty


@dataclass(frozen=True)
class CodeMetrics:
    sloc: int
    lloc: int
    average_cc_file: float
    num_complexity_blocks: int
    hal_volume: float
    hal_difficulty: float
    hal_effort: float

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in CODE_METRIC_NAMES}


def halstead_counts(source: str, filename: str = "<source>") -> HalsteadCounts:
    """Classify the token stream per the table in the module docstring."""
    operators: dict[str, int] = {}
    operands: dict[str, int] = {}
    try:
        tokens = list(tokenize.generate_tokens(io.StringIO(source).readline))
    except (tokenize.TokenError, IndentationError, SyntaxError) as exc:
        raise SourceMetricError(f"{filename}: cannot tokenize: {exc}") from exc

    for tok in tokens:
        if tok.type == token_types.OP:
            if tok.string not in CLOSING_BRACKETS:
                operators[tok.string] = operators.get(tok.string, 0) + 1
        elif tok.type == token_types.NAME:
            if tok.string in KEYWORD_OPERATORS:
                operators[tok.string] = operators.get(tok.string, 0) + 1
            elif tok.string in CONSTANT_KEYWORDS or not keyword.iskeyword(tok.string):
                operands[tok.string] = operands.get(tok.string, 0) + 1
        elif tok.type in (token_types.NUMBER, token_types.STRING):
            operands[tok.string] = operands.get(tok.string, 0) + 1

    return HalsteadCounts(
        distinct_operators=len(operators),
        distinct_operands=len(operands),
        total_operators=sum(operators.values()),
        total_operands=sum(operands.values()),
    )


_DECISION_SIMPLE = (ast.If, ast.IfExp, ast.For, ast.AsyncFor, ast.While, ast.ExceptHandler, ast.Assert)


def _decision_points(node: ast.AST) -> int:
    """Decision points in a subtree, not descending into nested blocks."""
    count = 0
    for child in ast.iter_child_nodes(node):
        if isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef)):
            continue
        if isinstance(child, _DECISION_SIMPLE):
            count += 1
        elif isinstance(child, ast.BoolOp):
            count += len(child.values) - 1
        elif isinstance(child, ast.comprehension):
            count += 1 + len(child.ifs)
        elif isinstance(child, ast.match_case):
            count += 1
        count += _decision_points(child)
    return count


def block_complexities(tree: ast.AST) -> list[int]:
    """Cyclomatic complexity (1 + decision points) of each function block."""
    blocks = []
    for node in ast.walk(tree):
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            blocks.append(1 + _decision_points(node))
    return blocks


def source_lines_of_code(source: str) -> int:
    """Physical lines that are neither blank nor comment-only."""
    count = 0
    for line in source.splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            count += 1
    return count


def logical_lines_of_code(tree: ast.AST) -> int:
    """Number of statement nodes in the module tree."""
    return sum(1 for node in ast.walk(tree) if isinstance(node, ast.stmt))


def analyze_source(source: str, filename: str = "<source>") -> CodeMetrics:
    """All code metrics of one source text; identical bytes give identical metrics."""
    try:
        tree = ast.parse(source, filename=filename)
    except (SyntaxError, ValueError) as exc:
        raise SourceMetricError(f"{filename}: cannot parse: {exc}") from exc
    counts = halstead_counts(source, filename)
    blocks = block_complexities(tree)
    return CodeMetrics(
        sloc=source_lines_of_code(source),
        lloc=logical_lines_of_code(tree),
        average_cc_file=(sum(blocks) / len(blocks)) if blocks else 0.0,
        num_complexity_blocks=len(blocks),
        hal_volume=counts.volume,
        hal_difficulty=counts.difficulty,
        hal_effort=counts.effort,
    )


def analyze_file(path: str) -> CodeMetrics:
    with open(path, encoding="utf-8") as fh:
        return analyze_source(fh.read(), filename=path)
