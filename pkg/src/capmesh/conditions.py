"""Tiny total expression language for branch and loop conditions.

Supported forms:

* comparisons ``=``/``==``, ``!=``, ``<``, ``<=``, ``>``, ``>=`` over numbers
  and strings (equality also over booleans)
* boolean ``and`` / ``or`` / ``not`` (short-circuit, operands must be boolean)
* ``len(expr)`` over lists
* ``has(key.path)`` presence test
* dotted paths into records and lists: ``candidate_cities.0.name``

Evaluation is deterministic and total: a missing key (outside ``has``) or a
type mismatch raises :class:`ConditionEvalError` instead of coercing.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any

from .errors import ConditionEvalError, ConditionParseError

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>-?\d+(?:\.\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>'[^']*'|"[^"]*")
  | (?P<op>==|!=|<=|>=|=|<|>)
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<dot>\.)
    """,
    re.VERBOSE,
)

_KEYWORDS = {"and", "or", "not", "true", "false", "len", "has"}


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _lex(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ConditionParseError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup or ""
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("eof", "", len(source)))
    return tokens


# --- AST ----------------------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    value: Any


@dataclass(frozen=True)
class Path:
    segments: tuple[str, ...]  # int indexes kept as digit strings


@dataclass(frozen=True)
class Len:
    arg: Any


@dataclass(frozen=True)
class Has:
    path: Path


@dataclass(frozen=True)
class Compare:
    op: str
    left: Any
    right: Any


@dataclass(frozen=True)
class BoolOp:
    op: str  # "and" | "or"
    left: Any
    right: Any


@dataclass(frozen=True)
class Not:
    arg: Any


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.next()
        if tok.kind != kind:
            raise ConditionParseError(f"expected {kind}, got {tok.text!r}", tok.pos)
        return tok

    def parse(self) -> Any:
        expr = self.or_expr()
        tok = self.peek()
        if tok.kind != "eof":
            raise ConditionParseError(f"trailing input {tok.text!r}", tok.pos)
        return expr

    def or_expr(self) -> Any:
        node = self.and_expr()
        while self.peek().kind == "ident" and self.peek().text == "or":
            self.next()
            node = BoolOp("or", node, self.and_expr())
        return node

    def and_expr(self) -> Any:
        node = self.not_expr()
        while self.peek().kind == "ident" and self.peek().text == "and":
            self.next()
            node = BoolOp("and", node, self.not_expr())
        return node

    def not_expr(self) -> Any:
        if self.peek().kind == "ident" and self.peek().text == "not":
            self.next()
            return Not(self.not_expr())
        return self.comparison()

    def comparison(self) -> Any:
        left = self.operand()
        if self.peek().kind == "op":
            op = self.next().text
            if op == "==":
                op = "="
            right = self.operand()
            return Compare(op, left, right)
        return left

    def operand(self) -> Any:
        tok = self.peek()
        if tok.kind == "number":
            self.next()
            text = tok.text
            return Literal(float(text) if "." in text else int(text))
        if tok.kind == "string":
            self.next()
            return Literal(tok.text[1:-1])
        if tok.kind == "lparen":
            self.next()
            node = self.or_expr()
            self.expect("rparen")
            return node
        if tok.kind == "ident":
            if tok.text == "true":
                self.next()
                return Literal(True)
            if tok.text == "false":
                self.next()
                return Literal(False)
            if tok.text == "len":
                self.next()
                self.expect("lparen")
                arg = self.or_expr()
                self.expect("rparen")
                return Len(arg)
            if tok.text == "has":
                self.next()
                self.expect("lparen")
                path = self.path()
                self.expect("rparen")
                return Has(path)
            if tok.text in ("and", "or", "not"):
                raise ConditionParseError(f"misplaced keyword {tok.text!r}", tok.pos)
            return self.path()
        raise ConditionParseError(f"unexpected token {tok.text!r}", tok.pos)

    def path(self) -> Path:
        tok = self.expect("ident")
        if tok.text in _KEYWORDS:
            raise ConditionParseError(f"{tok.text!r} is a reserved word", tok.pos)
        segments = [tok.text]
        while self.peek().kind == "dot":
            self.next()
            seg = self.next()
            if seg.kind not in ("ident", "number"):
                raise ConditionParseError("expected segment after '.'", seg.pos)
            if seg.kind == "number" and not seg.text.isdigit():
                raise ConditionParseError("list index must be a non-negative integer", seg.pos)
            segments.append(seg.text)
        return Path(tuple(segments))


def parse(source: str) -> Any:
    """Parse a condition into its AST. Raises ConditionParseError."""
    if not source or not source.strip():
        raise ConditionParseError("empty condition", 0)
    return _Parser(_lex(source)).parse()


def _resolve(path: Path, context: dict[str, Any]) -> Any:
    value: Any = context
    for seg in path.segments:
        if isinstance(value, dict):
            if seg not in value:
                raise ConditionEvalError(f"missing key {'.'.join(path.segments)!r}")
            value = value[seg]
        elif isinstance(value, list):
            if not seg.isdigit() or int(seg) >= len(value):
                raise ConditionEvalError(f"bad list index in {'.'.join(path.segments)!r}")
            value = value[int(seg)]
        else:
            raise ConditionEvalError(f"cannot descend into {'.'.join(path.segments)!r}")
    return value


_NUMERIC = (int, float)


def _eval(node: Any, context: dict[str, Any]) -> Any:
    if isinstance(node, Literal):
        return node.value
    if isinstance(node, Path):
        return _resolve(node, context)
    if isinstance(node, Len):
        value = _eval(node.arg, context)
        if not isinstance(value, list):
            raise ConditionEvalError("len() requires a list")
        return len(value)
    if isinstance(node, Has):
        try:
            _resolve(node.path, context)
            return True
        except ConditionEvalError:
            return False
    if isinstance(node, Not):
        value = _eval(node.arg, context)
        if not isinstance(value, bool):
            raise ConditionEvalError("'not' requires a boolean")
        return not value
    if isinstance(node, BoolOp):
        left = _eval(node.left, context)
        if not isinstance(left, bool):
            raise ConditionEvalError(f"'{node.op}' requires booleans")
        if node.op == "and" and not left:
            return False
        if node.op == "or" and left:
            return True
        right = _eval(node.right, context)
        if not isinstance(right, bool):
            raise ConditionEvalError(f"'{node.op}' requires booleans")
        return right
    if isinstance(node, Compare):
        return _compare(node, context)
    raise ConditionEvalError(f"unknown node {node!r}")


def _compare(node: Compare, context: dict[str, Any]) -> bool:
    left = _eval(node.left, context)
    right = _eval(node.right, context)
    left_num = isinstance(left, _NUMERIC) and not isinstance(left, bool)
    right_num = isinstance(right, _NUMERIC) and not isinstance(right, bool)
    if node.op in ("=", "!="):
        same_kind = (
            (left_num and right_num)
            or (isinstance(left, str) and isinstance(right, str))
            or (isinstance(left, bool) and isinstance(right, bool))
        )
        if not same_kind:
            raise ConditionEvalError(
                f"cannot compare {type(left).__name__} with {type(right).__name__}"
            )
        return (left == right) if node.op == "=" else (left != right)
    if left_num and right_num:
        pass
    elif isinstance(left, str) and isinstance(right, str):
        pass
    else:
        raise ConditionEvalError(
            f"'{node.op}' requires two numbers or two strings, "
            f"got {type(left).__name__} and {type(right).__name__}"
        )
    if node.op == "<":
        return left < right
    if node.op == "<=":
        return left <= right
    if node.op == ">":
        return left > right
    if node.op == ">=":
        return left >= right
    raise ConditionEvalError(f"unknown operator {node.op!r}")


def evaluate(source: str, context: dict[str, Any]) -> bool:
    """Evaluate a condition against a context map; result must be boolean."""
    result = _eval(parse(source), context)
    if not isinstance(result, bool):
        raise ConditionEvalError("condition did not evaluate to a boolean")
    return result


def referenced_keys(source: str) -> set[str]:
    """Root context keys the condition reads, excluding ``has()`` probes.

    Used by the plan validator: a key inside ``has()`` is being tested for
    presence, so it is not a hard requirement.
    """
    keys: set[str] = set()

    def walk(node: Any) -> None:
        if isinstance(node, Path):
            keys.add(node.segments[0])
        elif isinstance(node, Len):
            walk(node.arg)
        elif isinstance(node, Not):
            walk(node.arg)
        elif isinstance(node, BoolOp):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, Compare):
            walk(node.left)
            walk(node.right)
        # Literal and Has contribute nothing

    walk(parse(source))
    return keys


def is_valid(source: str) -> bool:
    try:
        parse(source)
        return True
    except ConditionParseError:
        return False
