"""Lexer, recursive-descent parser and printer for program statements.

The accepted language is a closed subset of Python assignment and call
statements::

    statement := target "=" expr | call | "parse_error"
    target    := IDENT ("." IDENT)?
    expr      := literal | IDENT | IDENT "." IDENT | call
    call      := (IDENT | IDENT "." IDENT) "(" [arg ("," arg)*] ")"
    arg       := expr | IDENT "=" expr
    literal   := STRING | INT | FLOAT | "True" | "False"
               | "[" [literal ("," literal)*] "]"

Keyword arguments must follow positional ones and be unique. Strings are
double-quoted and only ``\\"`` and ``\\\\`` escapes are recognised.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Union

from .errors import StatementSyntaxError

PARSE_ERROR = "parse_error"
_RESERVED = {"True", "False", PARSE_ERROR}


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column_start: int
    column_end: int


# -- AST ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Literal:
    """A constant. ``value`` is a str, int, float, bool or a tuple of Literal."""

    value: Union[str, int, float, bool, tuple]

    def __eq__(self, other):
        if not isinstance(other, Literal):
            return NotImplemented
        # True == 1 in Python; literals of different types must not compare equal.
        return type(self.value) is type(other.value) and self.value == other.value

    def __hash__(self):
        return hash((type(self.value), self.value))

    def to_python(self):
        if isinstance(self.value, tuple):
            return [item.to_python() for item in self.value]
        return self.value


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class AttrRef:
    base: str
    attribute: str


@dataclass(frozen=True)
class CallExpr:
    callee: Union[str, AttrRef]
    positional: tuple = ()
    keyword: tuple = ()  # ((name, Expr), ...) in source order

    @property
    def name(self) -> str:
        if isinstance(self.callee, AttrRef):
            return f"{self.callee.base}.{self.callee.attribute}"
        return self.callee

    def kwargs(self) -> dict:
        return dict(self.keyword)


Expr = Union[Literal, VarRef, AttrRef, CallExpr]


@dataclass(frozen=True)
class Target:
    variable: str
    attribute: str | None = None


@dataclass(frozen=True)
class Assign:
    target: Target
    value: Expr


@dataclass(frozen=True)
class BareCall:
    call: CallExpr


@dataclass(frozen=True)
class ParseErrorMarker:
    pass


Statement = Union[Assign, BareCall, ParseErrorMarker]


# -- lexer ----------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT, STRING, INT, FLOAT, OP, END
    text: str
    value: object
    start: int
    end: int


_NUMBER = re.compile(r"-?\d+(?:(\.\d+)(?:[eE][+-]?\d+)?|([eE][+-]?\d+))?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_OPS = set("=.,()[]")


def tokenize(text: str, line: int = 1) -> list[Token]:
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in " \t":
            i += 1
            continue
        if ch in "\r\n":
            raise _error("statements must fit on one line", line, i, i + 1)
        if ch in _OPS:
            tokens.append(Token("OP", ch, ch, i, i + 1))
            i += 1
            continue
        if ch == '"':
            value, end = _scan_string(text, i, line)
            tokens.append(Token("STRING", text[i:end], value, i, end))
            i = end
            continue
        match = _NUMBER.match(text, i)
        if match and match.end() > i and (ch.isdigit() or ch == "-"):
            end = match.end()
            if end < n and (text[end].isalnum() or text[end] == "_"):
                raise _error(f"malformed number {text[i:end + 1]!r}", line, i, end + 1)
            raw = match.group(0)
            if match.group(1) or match.group(2):
                tokens.append(Token("FLOAT", raw, float(raw), i, end))
            else:
                tokens.append(Token("INT", raw, int(raw), i, end))
            i = end
            continue
        match = _IDENT.match(text, i)
        if match:
            tokens.append(Token("IDENT", match.group(0), match.group(0), i, match.end()))
            i = match.end()
            continue
        raise _error(f"unexpected character {ch!r}", line, i, i + 1)
    tokens.append(Token("END", "", None, n, n))
    return tokens


def _scan_string(text: str, start: int, line: int) -> tuple[str, int]:
    out = []
    i = start + 1
    while i < len(text):
        ch = text[i]
        if ch == '"':
            return "".join(out), i + 1
        if ch == "\\":
            nxt = text[i + 1 : i + 2]
            if nxt not in ('"', "\\"):
                raise _error(f"unsupported escape '\\{nxt}'", line, i, i + 2)
            out.append(nxt)
            i += 2
            continue
        out.append(ch)
        i += 1
    raise _error("unterminated string literal", line, start, len(text))


def _error(message, line, start, end, text=""):
    return StatementSyntaxError(message, SourceSpan(line, start, max(start, end)), line, text)


# -- parser ---------------------------------------------------------------


class _Parser:
    def __init__(self, text: str, line: int):
        self.text = text
        self.line = line
        self.tokens = tokenize(text, line)
        self.pos = 0

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def at_op(self, op: str, offset: int = 0) -> bool:
        tok = self.peek(offset)
        return tok.kind == "OP" and tok.text == op

    def fail(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        what = "end of line" if tok.kind == "END" else repr(tok.text)
        return _error(f"{message}, found {what}", self.line, tok.start, tok.end, self.text)

    def expect_op(self, op: str) -> Token:
        if not self.at_op(op):
            raise self.fail(f"expected {op!r}")
        return self.advance()

    def expect_name(self) -> str:
        tok = self.peek()
        if tok.kind != "IDENT" or tok.text in _RESERVED:
            raise self.fail("expected an identifier")
        self.advance()
        return tok.text

    def statement(self) -> Statement:
        tok = self.peek()
        if tok.kind == "IDENT" and tok.text == PARSE_ERROR and self.peek(1).kind == "END":
            self.advance()
            return ParseErrorMarker()
        base = self.expect_name()
        attribute = None
        if self.at_op("."):
            self.advance()
            attribute = self.expect_name()
        if self.at_op("("):
            callee = AttrRef(base, attribute) if attribute else base
            stmt: Statement = BareCall(self.call_args(callee))
        elif self.at_op("="):
            self.advance()
            stmt = Assign(Target(base, attribute), self.expr())
        else:
            raise self.fail("expected '=' or '('")
        if self.peek().kind != "END":
            raise self.fail("unexpected trailing input")
        return stmt

    def expr(self) -> Expr:
        tok = self.peek()
        if tok.kind == "IDENT" and tok.text not in _RESERVED:
            name = self.advance().text
            if self.at_op("."):
                self.advance()
                attribute = self.expect_name()
                if self.at_op("("):
                    return self.call_args(AttrRef(name, attribute))
                return AttrRef(name, attribute)
            if self.at_op("("):
                return self.call_args(name)
            return VarRef(name)
        return self.literal()

    def literal(self) -> Literal:
        tok = self.peek()
        if tok.kind in ("STRING", "INT", "FLOAT"):
            self.advance()
            return Literal(tok.value)
        if tok.kind == "IDENT" and tok.text in ("True", "False"):
            self.advance()
            return Literal(tok.text == "True")
        if self.at_op("["):
            self.advance()
            items = []
            if not self.at_op("]"):
                items.append(self.literal())
                while self.at_op(","):
                    self.advance()
                    items.append(self.literal())
            self.expect_op("]")
            return Literal(tuple(items))
        raise self.fail("expected an expression")

    def call_args(self, callee) -> CallExpr:
        self.expect_op("(")
        positional, keyword, seen = [], [], set()
        if not self.at_op(")"):
            while True:
                tok = self.peek()
                if tok.kind == "IDENT" and self.at_op("=", 1):
                    name = self.expect_name()
                    if name in seen:
                        raise _error(f"duplicate keyword argument {name!r}", self.line, tok.start, tok.end, self.text)
                    seen.add(name)
                    self.advance()
                    keyword.append((name, self.expr()))
                else:
                    if keyword:
                        raise self.fail("positional argument follows keyword argument")
                    positional.append(self.expr())
                if not self.at_op(","):
                    break
                self.advance()
        self.expect_op(")")
        return CallExpr(callee, tuple(positional), tuple(keyword))


def parse_statement(text: str, line: int = 1) -> Statement:
    """Parse one source line into a Statement.

    Raises StatementSyntaxError carrying the span of the offending token.
    """
    if "\n" in text or "\r" in text:
        raise _error("statements must fit on one line", line, 0, len(text), text)
    return _Parser(text, line).statement()


def iter_program_lines(text: str) -> Iterator[tuple[int, str]]:
    """Yield ``(line number, stripped text)`` for every nonempty line."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.strip():
            yield lineno, raw.strip()


def split_program(text: str) -> list[Statement]:
    return [parse_statement(line, lineno) for lineno, line in iter_program_lines(text)]


# -- printer --------------------------------------------------------------


def _render_string(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_expr(expr: Expr) -> str:
    if isinstance(expr, Literal):
        value = expr.value
        if isinstance(value, bool):
            return "True" if value else "False"
        if isinstance(value, str):
            return _render_string(value)
        if isinstance(value, tuple):
            return "[" + ", ".join(render_expr(item) for item in value) + "]"
        return repr(value)
    if isinstance(expr, VarRef):
        return expr.name
    if isinstance(expr, AttrRef):
        return f"{expr.base}.{expr.attribute}"
    if isinstance(expr, CallExpr):
        args = [render_expr(a) for a in expr.positional]
        args += [f"{name}={render_expr(value)}" for name, value in expr.keyword]
        return f"{expr.name}({', '.join(args)})"
    raise TypeError(f"not an expression: {expr!r}")


def render_target(target: Target) -> str:
    return target.variable if target.attribute is None else f"{target.variable}.{target.attribute}"


def render_statement(stmt: Statement) -> str:
    if isinstance(stmt, ParseErrorMarker):
        return PARSE_ERROR
    if isinstance(stmt, Assign):
        return f"{render_target(stmt.target)} = {render_expr(stmt.value)}"
    if isinstance(stmt, BareCall):
        return render_expr(stmt.call)
    raise TypeError(f"not a statement: {stmt!r}")


# -- helpers used by the engine and dialogue manager -----------------------


def literal(value) -> Literal:
    """Wrap a Python value (str, int, float, bool, list) as a Literal."""
    if isinstance(value, (list, tuple)):
        return Literal(tuple(literal(v) for v in value))
    return Literal(value)


def call(callee: str, *positional, **keyword) -> CallExpr:
    def wrap(v):
        return v if isinstance(v, (Literal, VarRef, AttrRef, CallExpr)) else literal(v)

    return CallExpr(callee, tuple(wrap(p) for p in positional), tuple((k, wrap(v)) for k, v in keyword.items()))
