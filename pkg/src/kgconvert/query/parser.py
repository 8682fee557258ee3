"""Parser for the SELECT subset of SPARQL used by lowering templates.

Supported: PREFIX, SELECT [DISTINCT] vars|*, basic graph patterns with
``a``/``;``/``,`` abbreviations, one level of OPTIONAL, FILTER, ORDER BY
and LIMIT. Anything else recognisable as SPARQL is rejected with an
``unsupported: ...`` error instead of a generic syntax error.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..terms import IRI, RDF, RDFS, XSD, BNode, Literal, Term, TermError, XSD_BOOLEAN, XSD_DECIMAL, XSD_INTEGER
from . import expr as ex


class QuerySyntaxError(ValueError):
    def __init__(self, message: str, pos: int = 0, text: str = ""):
        self.message = message
        self.pos = pos
        self.line = text.count("\n", 0, pos) + 1
        self.column = pos - (text.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"line {self.line}, column {self.column}: {message}")


class UnsupportedQueryError(QuerySyntaxError):
    pass


@dataclass(frozen=True)
class Var:
    name: str

    @property
    def hidden(self) -> bool:
        return self.name.startswith("_:")

    def __str__(self):
        return "?" + self.name


@dataclass
class GroupPattern:
    triples: list = field(default_factory=list)
    optionals: list = field(default_factory=list)
    filters: list = field(default_factory=list)

    def variables(self) -> list[str]:
        seen: dict[str, None] = {}
        for t in self.triples:
            for slot in t:
                if isinstance(slot, Var) and not slot.hidden:
                    seen.setdefault(slot.name)
        for opt in self.optionals:
            for v in opt.variables():
                seen.setdefault(v)
        return list(seen)


@dataclass
class Query:
    prefixes: dict
    projection: list | None  # None means '*'
    pattern: GroupPattern
    distinct: bool = False
    order_by: list = field(default_factory=list)  # (var name, ascending)
    limit: int | None = None

    def variables(self) -> list[str]:
        return self.projection if self.projection is not None else self.pattern.variables()


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<iri><[^<>"{}|^`\\\s]*>)
  | (?P<var>[?$][A-Za-z_][A-Za-z0-9_]*)
  | (?P<bnode>_:[A-Za-z0-9_]+)
  | (?P<string>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<lang>@[a-zA-Z]+(?:-[a-zA-Z0-9]+)*)
  | (?P<dtype>\^\^)
  | (?P<number>[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<pname>(?:[A-Za-z][\w\-.]*)?:(?:[\w\-:%]|\.(?=[\w\-:%]))*)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>&&|\|\||!=|<=|>=|[{}().;,*=<>!/|^+\-\[\]?])
    """,
    re.X,
)

_UNSUPPORTED_WORDS = {
    "UNION", "MINUS", "GRAPH", "SERVICE", "BIND", "VALUES", "GROUP", "HAVING",
    "CONSTRUCT", "ASK", "DESCRIBE", "FROM", "OFFSET", "REDUCED", "BASE",
    "EXISTS", "NOT", "INSERT", "DELETE", "LOAD", "CLEAR",
}
_FUNCTIONS = {"BOUND", "REGEX", "STR"}
_STR_ESC = {"t": "\t", "n": "\n", "r": "\r", "b": "\b", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int

    @property
    def upper(self):
        return self.text.upper() if self.kind == "word" else None


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, m.group(), pos))
        pos = m.end()
    return toks


class _Parser:
    def __init__(self, text: str, prefixes: dict | None = None):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.prefixes = {"rdf": RDF, "rdfs": RDFS, "xsd": XSD}
        self.declared: dict[str, str] = {}
        if prefixes:
            self.prefixes.update(prefixes)

    # helpers
    def peek(self, k: int = 0) -> _Tok | None:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def pos(self) -> int:
        tok = self.peek()
        return tok.pos if tok else len(self.text)

    def error(self, msg: str, tok: _Tok | None = None):
        raise QuerySyntaxError(msg, tok.pos if tok else self.pos(), self.text)

    def unsupported(self, what: str, tok: _Tok | None = None):
        raise UnsupportedQueryError(f"unsupported: {what}", tok.pos if tok else self.pos(), self.text)

    def next(self) -> _Tok:
        tok = self.peek()
        if tok is None:
            self.error("unexpected end of query")
        self.i += 1
        return tok

    def check_unsupported(self, tok: _Tok | None):
        if tok is not None and tok.upper in _UNSUPPORTED_WORDS:
            self.unsupported(tok.upper, tok)

    def accept_op(self, text: str) -> bool:
        tok = self.peek()
        if tok is not None and tok.kind == "op" and tok.text == text:
            self.i += 1
            return True
        return False

    def expect_op(self, text: str):
        tok = self.peek()
        if not self.accept_op(text):
            self.check_unsupported(tok)
            self.error(f"expected '{text}'" + (f", found {tok.text!r}" if tok else ""), tok)

    def accept_word(self, word: str) -> bool:
        tok = self.peek()
        if tok is not None and tok.upper == word:
            self.i += 1
            return True
        return False

    # terms
    def iri_of(self, tok: _Tok) -> IRI:
        if tok.kind == "iri":
            value = tok.text[1:-1]
        else:
            prefix, local = tok.text.split(":", 1)
            if prefix not in self.prefixes:
                self.error(f"undeclared prefix '{prefix}'", tok)
            value = self.prefixes[prefix] + local
        try:
            return IRI(value)
        except TermError as exc:
            self.error(str(exc), tok)

    def string_of(self, tok: _Tok) -> str:
        body = tok.text[1:-1]
        return re.sub(r"\\(.)", lambda m: _STR_ESC.get(m.group(1), m.group(1)), body)

    def literal_rest(self, lexical: str) -> Literal:
        tok = self.peek()
        if tok is not None and tok.kind == "lang":
            self.i += 1
            return Literal(lexical, language=tok.text[1:])
        if tok is not None and tok.kind == "dtype":
            self.i += 1
            dt = self.next()
            if dt.kind not in ("iri", "pname"):
                self.error("expected datatype IRI", dt)
            return Literal(lexical, datatype=self.iri_of(dt))
        return Literal(lexical)

    def number_of(self, tok: _Tok) -> Literal:
        t = tok.text
        if re.fullmatch(r"[+-]?\d+", t):
            return Literal(t, datatype=XSD_INTEGER)
        if "e" in t.lower():
            return Literal(t, datatype=IRI(XSD + "double"))
        return Literal(t, datatype=XSD_DECIMAL)

    def term(self, position: str):
        tok = self.next()
        if tok.kind == "var":
            return Var(tok.text[1:])
        if tok.kind in ("iri", "pname"):
            return self.iri_of(tok)
        if tok.kind == "op" and tok.text == "^" and position == "predicate":
            self.unsupported("property paths", tok)
        if tok.kind == "bnode":
            if position == "predicate":
                self.error("blank node not allowed as predicate", tok)
            return Var(tok.text)
        if tok.kind == "word" and tok.text == "a" and position == "predicate":
            return IRI(RDF + "type")
        if position == "object":
            if tok.kind == "string":
                return self.literal_rest(self.string_of(tok))
            if tok.kind == "number":
                return self.number_of(tok)
            if tok.upper in ("TRUE", "FALSE"):
                return Literal(tok.text.lower(), datatype=XSD_BOOLEAN)
        if tok.kind == "op" and tok.text in ("[", "("):
            self.unsupported("blank node / collection syntax", tok)
        self.check_unsupported(tok)
        self.error(f"unexpected {tok.text!r} in {position} position", tok)

    # query structure
    def parse(self) -> Query:
        selects = 0
        for tok in self.toks:
            self.check_unsupported(tok)
            if tok.upper == "SELECT":
                selects += 1
                if selects > 1:
                    self.unsupported("subqueries", tok)
        while True:
            tok = self.peek()
            if tok is not None and tok.upper == "PREFIX":
                self.i += 1
                p = self.next()
                if p.kind != "pname" or not p.text.endswith(":") or p.text.count(":") != 1:
                    self.error("expected prefix name", p)
                ns = self.next()
                if ns.kind != "iri":
                    self.error("expected namespace IRI", ns)
                self.prefixes[p.text[:-1]] = ns.text[1:-1]
                self.declared[p.text[:-1]] = ns.text[1:-1]
                continue
            break
        tok = self.peek()
        if tok is None or tok.upper != "SELECT":
            self.check_unsupported(tok)
            self.error("expected SELECT", tok)
        self.i += 1
        distinct = self.accept_word("DISTINCT")
        self.check_unsupported(self.peek())
        projection: list | None = []
        if self.accept_op("*"):
            projection = None
        else:
            while self.peek() is not None and self.peek().kind == "var":
                projection.append(self.next().text[1:])
            tok = self.peek()
            if tok is not None and tok.kind == "op" and tok.text == "(":
                self.unsupported("expressions in SELECT", tok)
            if not projection:
                self.error("expected projection variables or '*'", tok)
        self.check_unsupported(self.peek())
        self.accept_word("WHERE")
        pattern = self.group(depth=0)
        order_by = []
        limit = None
        self.check_unsupported(self.peek())
        if self.accept_word("ORDER"):
            if not self.accept_word("BY"):
                self.error("expected BY after ORDER")
            while True:
                tok = self.peek()
                if tok is None:
                    break
                if tok.kind == "var":
                    self.i += 1
                    order_by.append((tok.text[1:], True))
                elif tok.upper in ("ASC", "DESC"):
                    self.i += 1
                    self.expect_op("(")
                    v = self.next()
                    if v.kind != "var":
                        self.unsupported("ORDER BY expressions", v)
                    self.expect_op(")")
                    order_by.append((v.text[1:], tok.upper == "ASC"))
                elif tok.kind == "op" and tok.text == "(":
                    self.unsupported("ORDER BY expressions", tok)
                else:
                    break
            if not order_by:
                self.error("expected ORDER BY condition")
        self.check_unsupported(self.peek())
        if self.accept_word("LIMIT"):
            tok = self.next()
            if tok.kind != "number" or not tok.text.isdigit() or int(tok.text) < 1:
                self.error("LIMIT needs a positive integer", tok)
            limit = int(tok.text)
        tok = self.peek()
        if tok is not None:
            self.check_unsupported(tok)
            self.error(f"unexpected {tok.text!r} after query", tok)
        known = set(pattern.variables())
        for v in (projection or []):
            if v not in known:
                self.error(f"projected variable ?{v} does not appear in the pattern")
        return Query(self.declared, projection, pattern, distinct, order_by, limit)

    def group(self, depth: int) -> GroupPattern:
        start = self.peek()
        self.expect_op("{")
        g = GroupPattern()
        while True:
            tok = self.peek()
            if tok is None:
                self.error("unclosed '{'", start)
            if tok.kind == "op" and tok.text == "}":
                self.i += 1
                break
            if tok.kind == "op" and tok.text == ".":
                self.i += 1
                continue
            if tok.kind == "op" and tok.text == "{":
                nxt = self.peek(1)
                if nxt is not None and nxt.upper == "SELECT":
                    self.unsupported("subqueries", nxt)
                self.unsupported("nested group patterns", tok)
            if tok.upper == "SELECT":
                self.unsupported("subqueries", tok)
            if tok.upper == "OPTIONAL":
                if depth > 0:
                    self.unsupported("nested OPTIONAL", tok)
                self.i += 1
                g.optionals.append(self.group(depth + 1))
                continue
            if tok.upper == "FILTER":
                self.i += 1
                g.filters.append(self.constraint())
                continue
            self.check_unsupported(tok)
            self.triples_block(g)
        if not g.triples:
            self.error("group pattern needs at least one triple pattern", start)
        return g

    def triples_block(self, g: GroupPattern):
        subject = self.term("subject")
        while True:
            pred = self.term("predicate")
            tok = self.peek()
            if tok is not None and tok.kind == "op" and tok.text in ("/", "|", "^", "*", "+", "?"):
                self.unsupported("property paths", tok)
            while True:
                obj = self.term("object")
                g.triples.append((subject, pred, obj))
                if not self.accept_op(","):
                    break
            if self.accept_op(";"):
                tok = self.peek()
                if tok is None or (tok.kind == "op" and tok.text in (".", "}")):
                    break
                continue
            break
        tok = self.peek()
        if tok is not None and not (tok.kind == "op" and tok.text in (".", "}")):
            self.check_unsupported(tok)
            if tok.upper not in ("OPTIONAL", "FILTER"):
                self.error(f"expected '.' or '}}', found {tok.text!r}", tok)

    # filter expressions
    def constraint(self):
        tok = self.peek()
        if tok is not None and tok.kind == "op" and tok.text == "(":
            self.i += 1
            e = self.expression()
            self.expect_op(")")
            return e
        if tok is not None and tok.kind == "word":
            return self.primary()
        self.error("expected '(' after FILTER", tok)

    def expression(self):
        left = self.conjunction()
        while self.accept_op("||"):
            left = ex.Or(left, self.conjunction())
        return left

    def conjunction(self):
        left = self.relational()
        while self.accept_op("&&"):
            left = ex.And(left, self.relational())
        return left

    def relational(self):
        left = self.unary()
        tok = self.peek()
        if tok is not None and tok.kind == "op" and tok.text in ("=", "!=", "<", "<=", ">", ">="):
            self.i += 1
            return ex.Compare(tok.text, left, self.unary())
        if tok is not None and tok.upper in ("IN",):
            self.unsupported("IN", tok)
        return left

    def unary(self):
        if self.accept_op("!"):
            return ex.Not(self.unary())
        return self.primary()

    def primary(self):
        tok = self.next()
        if tok.kind == "op" and tok.text == "(":
            e = self.expression()
            self.expect_op(")")
            return e
        if tok.kind == "var":
            return ex.VarRef(tok.text[1:])
        if tok.kind in ("iri", "pname"):
            return ex.Const(self.iri_of(tok))
        if tok.kind == "string":
            return ex.Const(self.literal_rest(self.string_of(tok)))
        if tok.kind == "number":
            return ex.Const(self.number_of(tok))
        if tok.kind == "word":
            name = tok.upper
            if name in ("TRUE", "FALSE"):
                return ex.Const(Literal(tok.text.lower(), datatype=XSD_BOOLEAN))
            self.check_unsupported(tok)
            if name not in _FUNCTIONS:
                self.unsupported(f"function {tok.text}", tok)
            self.expect_op("(")
            if name == "BOUND":
                v = self.next()
                if v.kind != "var":
                    self.error("bound() takes a variable", v)
                self.expect_op(")")
                return ex.Bound(v.text[1:])
            if name == "STR":
                arg = self.expression()
                self.expect_op(")")
                return ex.Str(arg)
            arg = self.expression()
            self.expect_op(",")
            pattern = self.expression()
            flags = None
            if self.accept_op(","):
                flags = self.expression()
            self.expect_op(")")
            return ex.Regex(arg, pattern, flags)
        if tok.kind == "op" and tok.text in ("+", "-", "*", "/"):
            self.unsupported("arithmetic", tok)
        self.error(f"unexpected {tok.text!r} in expression", tok)


def parse_query(text: str, prefixes: dict | None = None) -> Query:
    """Parse a query; ``prefixes`` pre-declares namespaces (e.g. from a template)."""
    return _Parser(text, prefixes).parse()
