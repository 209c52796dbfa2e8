"""Advanced-filter query language: lexer, recursive-descent parser, evaluator.

Grammar (AND binds tighter than OR; keywords are uppercase only)::

    query   := or | <empty>              empty input matches everything
    or      := and ("OR" and)*
    and     := term ("AND" term)*
    term    := "(" or ")" | field op literal

Literals and fields are bare words or double-quoted strings ("\\"" escapes a
quote, "\\\\" a backslash). Comparison semantics, per object:

* ``==`` / ``!=`` compare whitespace-trimmed strings case-sensitively;
  ``!=`` additionally requires a non-empty (non-missing) value;
* ``>`` ``>=`` ``<`` ``<=`` parse both sides as decimal numbers and are
  false whenever either side does not parse;
* ``~`` is a case-insensitive substring test.

Additional operators can be plugged in through :func:`register_operator`.
The final selection a client sees is this query's mask ANDed with the range
filters' mask.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

from csn.filters import SelectionMask

_DECIMAL_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?\Z")


def parse_decimal(text: str) -> float | None:
    """Strict decimal-number parse ("1900", "-3.5", "1e3"); None when not a number."""
    s = text.strip()
    if not _DECIMAL_RE.match(s):
        return None
    return float(s)


class ParseError(Exception):
    """Lexing or parsing failed; position is a character offset into the input."""

    def __init__(self, position: int, expected: str, found: str):
        self.position = position
        self.expected = expected
        self.found = found
        super().__init__(f"at {position}: expected {expected}, found {found}")


class QueryFieldError(Exception):
    """The query references fields the collection does not have."""

    def __init__(self, errors: list[str], valid_fields: Sequence[str]):
        self.errors = list(errors)
        self.valid_fields = list(valid_fields)
        super().__init__("; ".join(errors) + f" (valid fields: {', '.join(valid_fields)})")


@dataclass(frozen=True)
class Cmp:
    field: str
    op: str  # operator symbol, e.g. "==" or "~"
    literal: str


@dataclass(frozen=True)
class And:
    children: tuple["Node", ...]


@dataclass(frozen=True)
class Or:
    children: tuple["Node", ...]


Node = Union[Cmp, And, Or]
# parse() returns None for the empty query: match-all is a distinguished
# value, not an AST node.
Query = Union[Node, None]


# --- operator registry -------------------------------------------------

Comparator = Callable[[str, str], bool]


def _cmp_eq(value: str, literal: str) -> bool:
    return value.strip() == literal.strip()


def _cmp_ne(value: str, literal: str) -> bool:
    v = value.strip()
    return v != "" and v != literal.strip()


def _numeric_cmp(relation: Callable[[float, float], bool]) -> Comparator:
    def cmp(value: str, literal: str) -> bool:
        a = parse_decimal(value)
        b = parse_decimal(literal)
        return a is not None and b is not None and relation(a, b)

    return cmp


def _cmp_contains(value: str, literal: str) -> bool:
    return literal.lower() in value.lower()


_OPERATORS: dict[str, Comparator] = {}
_OP_CHARS: set[str] = set()


def register_operator(symbol: str, fn: Comparator) -> None:
    """Add a comparison operator; evaluated per object as fn(value, literal).

    Symbols must be punctuation only (no letters, digits, whitespace, quotes
    or parentheses) so they cannot collide with bare words.
    """
    if not symbol or any(ch.isalnum() or ch.isspace() or ch in '()"' for ch in symbol):
        raise ValueError(f"invalid operator symbol {symbol!r}")
    _OPERATORS[symbol] = fn
    _OP_CHARS.update(symbol)


register_operator("==", _cmp_eq)
register_operator("!=", _cmp_ne)
register_operator(">", _numeric_cmp(lambda a, b: a > b))
register_operator(">=", _numeric_cmp(lambda a, b: a >= b))
register_operator("<", _numeric_cmp(lambda a, b: a < b))
register_operator("<=", _numeric_cmp(lambda a, b: a <= b))
register_operator("~", _cmp_contains)


# --- lexer --------------------------------------------------------------

LPAREN, RPAREN, AND, OR, OP, WORD, STRING = (
    "LPAREN", "RPAREN", "AND", "OR", "OP", "WORD", "STRING",
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str  # decoded text for STRING tokens
    pos: int


def _is_word_char(ch: str) -> bool:
    return not ch.isspace() and ch not in '()"' and ch not in _OP_CHARS


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    n = len(text)
    op_symbols = sorted(_OPERATORS, key=len, reverse=True)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch == "(":
            tokens.append(Token(LPAREN, "(", i))
            i += 1
        elif ch == ")":
            tokens.append(Token(RPAREN, ")", i))
            i += 1
        elif ch == '"':
            start = i
            i += 1
            buf = []
            while i < n and text[i] != '"':
                if text[i] == "\\" and i + 1 < n and text[i + 1] in '"\\':
                    buf.append(text[i + 1])
                    i += 2
                else:
                    buf.append(text[i])
                    i += 1
            if i >= n:
                raise ParseError(start, "closing '\"'", "end of input")
            i += 1
            tokens.append(Token(STRING, "".join(buf), start))
        elif ch in _OP_CHARS:
            for sym in op_symbols:
                if text.startswith(sym, i):
                    tokens.append(Token(OP, sym, i))
                    i += len(sym)
                    break
            else:
                raise ParseError(i, "a comparison operator", ch)
        else:
            start = i
            while i < n and _is_word_char(text[i]):
                i += 1
            word = text[start:i]
            if word == "AND":
                tokens.append(Token(AND, word, start))
            elif word == "OR":
                tokens.append(Token(OR, word, start))
            else:
                tokens.append(Token(WORD, word, start))
    return tokens


# --- parser -------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[Token], end_pos: int):
        self.tokens = tokens
        self.i = 0
        self.end_pos = end_pos

    def peek(self) -> Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def fail(self, expected: str) -> ParseError:
        tok = self.peek()
        if tok is None:
            return ParseError(self.end_pos, expected, "end of input")
        return ParseError(tok.pos, expected, tok.text)

    def parse(self) -> Query:
        if not self.tokens:
            return None
        node = self.or_expr()
        if self.peek() is not None:
            raise self.fail("'AND', 'OR' or end of input")
        return node

    def or_expr(self) -> Node:
        parts = [self.and_expr()]
        while (tok := self.peek()) is not None and tok.kind == OR:
            self.i += 1
            parts.append(self.and_expr())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def and_expr(self) -> Node:
        parts = [self.term()]
        while (tok := self.peek()) is not None and tok.kind == AND:
            self.i += 1
            parts.append(self.term())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def term(self) -> Node:
        tok = self.peek()
        if tok is None:
            raise self.fail("a field name or '('")
        if tok.kind == LPAREN:
            self.i += 1
            node = self.or_expr()
            closing = self.peek()
            if closing is None or closing.kind != RPAREN:
                raise self.fail("')'")
            self.i += 1
            return node
        if tok.kind not in (WORD, STRING):
            raise self.fail("a field name or '('")
        field = tok.text
        self.i += 1
        op_tok = self.peek()
        if op_tok is None or op_tok.kind != OP:
            raise self.fail("a comparison operator")
        self.i += 1
        lit_tok = self.peek()
        if lit_tok is None or lit_tok.kind not in (WORD, STRING):
            raise self.fail("a literal value")
        self.i += 1
        return Cmp(field, op_tok.text, lit_tok.text)


def parse(tokens: list[Token], end_pos: int | None = None) -> Query:
    """Parse a token list; None means the match-all (empty) query."""
    if end_pos is None:
        end_pos = tokens[-1].pos + len(tokens[-1].text) if tokens else 0
    return _Parser(tokens, end_pos).parse()


def parse_text(text: str) -> Query:
    return parse(tokenize(text), end_pos=len(text))


# --- pretty printer -----------------------------------------------------

def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _atom(s: str) -> str:
    if s and s not in ("AND", "OR") and all(_is_word_char(ch) for ch in s):
        return s
    return _quote(s)


def format_query(node: Query) -> str:
    """Render a query back to source text; reparsing yields an equal AST."""
    if node is None:
        return ""
    if isinstance(node, Cmp):
        return f"{_atom(node.field)} {node.op} {_quote(node.literal)}"
    sep = " AND " if isinstance(node, And) else " OR "
    parts = []
    for child in node.children:
        text = format_query(child)
        # parenthesize whenever the child binds no tighter than this node
        if isinstance(child, Or) or (isinstance(node, And) and isinstance(child, And)):
            text = f"({text})"
        parts.append(text)
    return sep.join(parts)


# --- evaluation ---------------------------------------------------------

class MetadataTable:
    """String columns plus cached trimmed/numeric/lowered views for evaluation."""

    def __init__(self, columns: Mapping[str, Sequence[str]]):
        self.columns = dict(columns)
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"metadata columns disagree on row count: {sorted(lengths)}")
        self.n = lengths.pop() if lengths else 0
        self._trimmed: dict[str, np.ndarray] = {}
        self._numeric: dict[str, np.ndarray] = {}
        self._lowered: dict[str, list[str]] = {}

    @classmethod
    def wrap(cls, table) -> "MetadataTable":
        return table if isinstance(table, MetadataTable) else cls(table)

    @property
    def field_names(self) -> list[str]:
        return list(self.columns)

    def raw(self, field: str) -> Sequence[str]:
        return self.columns[field]

    def trimmed(self, field: str) -> np.ndarray:
        arr = self._trimmed.get(field)
        if arr is None:
            arr = np.array([v.strip() for v in self.columns[field]], dtype=object)
            self._trimmed[field] = arr
        return arr

    def numeric(self, field: str) -> np.ndarray:
        arr = self._numeric.get(field)
        if arr is None:
            arr = np.array(
                [x if (x := parse_decimal(v)) is not None else np.nan for v in self.columns[field]],
                dtype=np.float64,
            )
            self._numeric[field] = arr
        return arr

    def lowered(self, field: str) -> list[str]:
        vals = self._lowered.get(field)
        if vals is None:
            vals = [v.lower() for v in self.columns[field]]
            self._lowered[field] = vals
        return vals


def validate_fields(ast: Query, fields) -> list[str]:
    """Unknown-field errors in left-to-right comparison order; empty when valid."""
    if hasattr(fields, "field_names"):
        fields = fields.field_names
    known = set(fields() if callable(fields) else fields)
    errors: list[str] = []

    def walk(node: Node) -> None:
        if isinstance(node, Cmp):
            if node.field not in known:
                errors.append(f"unknown field {node.field!r}")
        else:
            for child in node.children:
                walk(child)

    if ast is not None:
        walk(ast)
    return errors


_NUMERIC_RELATIONS = {
    ">": np.greater,
    ">=": np.greater_equal,
    "<": np.less,
    "<=": np.less_equal,
}


def _eval_cmp(node: Cmp, tbl: MetadataTable) -> np.ndarray:
    op = node.op
    if op == "==":
        return tbl.trimmed(node.field) == node.literal.strip()
    if op == "!=":
        t = tbl.trimmed(node.field)
        return (t != "") & (t != node.literal.strip())
    if op in _NUMERIC_RELATIONS:
        b = parse_decimal(node.literal)
        if b is None:
            return np.zeros(tbl.n, dtype=bool)
        return _NUMERIC_RELATIONS[op](tbl.numeric(node.field), b)  # NaN compares false
    if op == "~":
        needle = node.literal.lower()
        return np.fromiter((needle in v for v in tbl.lowered(node.field)), dtype=bool, count=tbl.n)
    fn = _OPERATORS[op]
    return np.fromiter((fn(v, node.literal) for v in tbl.raw(node.field)), dtype=bool, count=tbl.n)


def _eval_node(node: Node, tbl: MetadataTable) -> np.ndarray:
    if isinstance(node, Cmp):
        return _eval_cmp(node, tbl)
    parts = [_eval_node(c, tbl) for c in node.children]
    if isinstance(node, And):
        return np.logical_and.reduce(parts)
    return np.logical_or.reduce(parts)


def evaluate(ast: Query, table, n: int | None = None) -> SelectionMask:
    """Evaluate a parsed query over a metadata table into a SelectionMask.

    The match-all query (None) passes everything. Unknown fields raise
    QueryFieldError before any row is touched.
    """
    tbl = MetadataTable.wrap(table)
    size = tbl.n if tbl.columns else (n or 0)
    if ast is None:
        return SelectionMask.all_true(size)
    errors = validate_fields(ast, tbl.field_names)
    if errors:
        raise QueryFieldError(errors, tbl.field_names)
    return SelectionMask.from_bool(_eval_node(ast, tbl))


def selection_query(field: str, values: Iterable[str]) -> str:
    """Compile a categorical drop-down selection into query text (OR of equals)."""
    parts = [f"{_atom(field)} == {_quote(v)}" for v in values]
    return " OR ".join(parts)
