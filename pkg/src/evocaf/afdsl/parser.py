"""Tokenizer, recursive-descent parser and pretty-printer.

Grammar (EBNF)::

    program    = { statement sep } expr [ sep ] ;
    statement  = NAME "=" expr ;
    sep        = NEWLINE | ";" ;
    expr       = term { ("+" | "-") term } ;
    term       = unary { ("*" | "/") unary } ;
    unary      = "-" unary | power ;
    power      = atom [ "^" unary ] ;
    atom       = NUMBER | NAME | NAME "(" [ expr { "," expr } ] ")"
               | "(" expr ")" | "[" expr { "," expr } "]" ;

Newlines inside brackets are ignored and ``#`` starts a comment.
"""

from __future__ import annotations

import re

from .errors import ParseError
from .nodes import Assign, BinOp, Call, ListLit, Module, Name, Neg, Node, Num

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+|\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),;=\[\]])
    """,
    re.VERBOSE,
)


def tokenize(source: str) -> list[tuple[str, str, int]]:
    """Return ``(kind, text, pos)`` triples, ending with an ``eof`` token."""
    tokens = []
    depth = 0
    pos = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", pos, source)
        kind = m.lastgroup
        text = m.group()
        if kind == "op":
            if text in "([":
                depth += 1
            elif text in ")]":
                depth = max(0, depth - 1)
            tokens.append(("op", text, pos))
        elif kind == "nl":
            if depth == 0:
                tokens.append(("sep", "\n", pos))
        elif kind != "ws":
            tokens.append((kind, text, pos))
        pos = m.end()
    tokens.append(("eof", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        found = "end of input" if tok[0] == "eof" else repr(tok[1])
        return ParseError(f"{message}, found {found}", tok[2], self.source)

    def accept(self, text):
        tok = self.peek()
        if tok[0] in ("op", "sep") and tok[1] == text:
            self.i += 1
            return tok
        return None

    def expect(self, text):
        tok = self.accept(text)
        if tok is None:
            raise self.error(f"expected {text!r}")
        return tok

    def skip_seps(self):
        while self.peek()[0] == "sep" or (self.peek()[0] == "op" and self.peek()[1] == ";"):
            self.i += 1

    def module(self) -> Module:
        assigns = []
        self.skip_seps()
        while True:
            tok = self.peek()
            nxt = self.tokens[self.i + 1]
            if tok[0] == "name" and nxt[0] == "op" and nxt[1] == "=":
                self.i += 2
                assigns.append(Assign(tok[1], self.expr(), tok[2]))
                self._end_statement()
                continue
            result = self.expr()
            self._end_statement()
            if self.peek()[0] != "eof":
                raise self.error("expected end of program after result expression")
            return Module(tuple(assigns), result)

    def _end_statement(self):
        tok = self.peek()
        if tok[0] == "eof":
            return
        if tok[0] == "sep" or (tok[0] == "op" and tok[1] == ";"):
            self.skip_seps()
            return
        raise self.error("expected end of statement")

    def expr(self) -> Node:
        node = self.term()
        while True:
            tok = self.peek()
            if tok[0] == "op" and tok[1] in "+-":
                self.i += 1
                node = BinOp(tok[1], node, self.term(), tok[2])
            else:
                return node

    def term(self) -> Node:
        node = self.unary()
        while True:
            tok = self.peek()
            if tok[0] == "op" and tok[1] in "*/":
                self.i += 1
                node = BinOp(tok[1], node, self.unary(), tok[2])
            else:
                return node

    def unary(self) -> Node:
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.i += 1
            return Neg(self.unary(), tok[2])
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.i += 1
            return BinOp("^", base, self.unary(), tok[2])
        return base

    def atom(self) -> Node:
        tok = self.advance()
        kind, text, pos = tok
        if kind == "num":
            return Num(float(text), pos)
        if kind == "name":
            if self.accept("("):
                args = []
                if not self.accept(")"):
                    args.append(self.expr())
                    while self.accept(","):
                        args.append(self.expr())
                    self.expect(")")
                return Call(text, tuple(args), pos)
            return Name(text, pos)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "op" and text == "[":
            items = [self.expr()]
            while self.accept(","):
                items.append(self.expr())
            self.expect("]")
            return ListLit(tuple(items), pos)
        raise self.error("expected an expression", tok)


def parse_syntax(source: str) -> Module:
    """Parse source text into an untyped :class:`Module`."""
    if not source or not source.strip():
        raise ParseError("empty program", 0, source)
    return _Parser(source).module()


# precedence levels for printing
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_UNARY = 3
_POW = 4
_ATOM = 5


def _prec(node) -> int:
    if isinstance(node, BinOp):
        return _POW if node.op == "^" else _PREC[node.op]
    if isinstance(node, Neg):
        return _UNARY
    return _ATOM


def _fmt_num(v: float) -> str:
    if v < 0 or v != v or v in (float("inf"),):
        raise ValueError(f"literal {v!r} is not representable")
    v = float(v)
    if v.is_integer() and v < 1e15:
        return str(int(v))
    return repr(v)


def to_source(node) -> str:
    """Render an AST back to source with minimal parentheses."""
    if isinstance(node, Module):
        lines = [f"{a.name} = {to_source(a.value)}" for a in node.assigns]
        lines.append(to_source(node.result))
        return "\n".join(lines)
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Name):
        return node.id
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_source(a) for a in node.args)})"
    if isinstance(node, ListLit):
        return f"[{', '.join(to_source(a) for a in node.items)}]"
    if isinstance(node, Neg):
        inner = to_source(node.operand)
        # "--x" is fine for the parser but "-(a+b)" needs the parens
        if _prec(node.operand) < _UNARY:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, BinOp):
        p = _prec(node)
        left, right = to_source(node.left), to_source(node.right)
        if node.op == "^":
            if _prec(node.left) <= _POW:
                left = f"({left})"
            if _prec(node.right) < _UNARY:
                right = f"({right})"
            return f"{left}^{right}"
        if _prec(node.left) < p:
            left = f"({left})"
        if _prec(node.right) <= p:
            right = f"({right})"
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an AST node: {node!r}")
