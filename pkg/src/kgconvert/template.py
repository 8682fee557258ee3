"""GTL: a small directive language for rendering query results as text.

Directives start with ``#`` and interpolations with ``${``::

    #query(lines, "PREFIX ot: <...> SELECT ?id ?name WHERE { ... } ORDER BY ?id")
    #index(byLine, journeys, lineId)
    #foreach(l in lines)
      <Line id="Line:${l.id}"><Name>${l.name}</Name>
      #foreach(j in byLine[l.id])<Ref ref="${j.id}"/>#end
      #if(bound(l.code))<PublicCode>${l.code}</PublicCode>#end
    #end

``${expr}`` is XML-escaped, ``${!expr}`` is emitted raw and ``##`` yields a
literal ``#``. A directive alone on its line swallows that line's
indentation and newline. Each ``#query`` runs once per execution of the
block that contains it. PREFIX declarations made by one query are visible
to the queries after it in the same template.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .gcpause import gc_paused
from .graph import Graph
from .query import Query, QuerySyntaxError, evaluate_query, parse_query
from .terms import IRI, BNode, Literal


class TemplateError(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


# -- expressions -------------------------------------------------------------

@dataclass(frozen=True)
class Ref:
    """``name``, ``name.field``, ``name[key]`` or ``name[key].field``."""

    name: str
    key: object = None  # Ref | Lit | None
    field: str | None = None

    def __str__(self):
        out = self.name
        if self.key is not None:
            out += f"[{self.key}]"
        if self.field is not None:
            out += "." + self.field
        return out


@dataclass(frozen=True)
class Lit:
    value: str

    def __str__(self):
        return '"' + self.value + '"'


@dataclass(frozen=True)
class Cond:
    op: str  # bound, nonempty, eq, ne, not, and, or
    args: tuple


# -- nodes -------------------------------------------------------------------

@dataclass
class Text:
    text: str


@dataclass
class Interp:
    expr: Ref | Lit
    raw: bool
    line: int


@dataclass
class QueryNode:
    name: str
    query: Query
    source: str
    line: int


@dataclass
class IndexNode:
    name: str
    source: str
    key: str
    line: int


@dataclass
class Foreach:
    var: str
    source: Ref
    body: list
    line: int


@dataclass
class If:
    cond: Cond
    body: list
    orelse: list
    line: int


@dataclass
class Template:
    nodes: list = field(default_factory=list)


_DIRECTIVES = ("query", "index", "foreach", "if", "else", "end")
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"


class _ExprParser:
    """Recursive descent over the argument text of a directive or interpolation."""

    _TOK = re.compile(r'\s*(?:(?P<str>"(?:[^"\\]|\\.)*")|(?P<op>==|!=|&&|\|\||[!()\[\].,])|(?P<name>' + _IDENT + r"))")

    def __init__(self, text: str, line: int):
        self.text = text
        self.line = line
        self.toks = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = self._TOK.match(text, pos)
            if not m:
                raise TemplateError(line, f"cannot parse {text!r}")
            kind = m.lastgroup
            self.toks.append((kind, m.group(kind)))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, text=None, kind=None):
        k, v = self.peek()
        if k is None or (text is not None and v != text) or (kind is not None and k != kind):
            raise TemplateError(self.line, f"cannot parse {self.text!r}: expected {text or kind}")
        self.i += 1
        return v

    def done(self):
        if self.i != len(self.toks):
            raise TemplateError(self.line, f"unexpected trailing input in {self.text!r}")

    def value(self):
        k, v = self.peek()
        if k == "str":
            self.i += 1
            return Lit(re.sub(r"\\(.)", r"\1", v[1:-1]))
        return self.ref()

    def ref(self) -> Ref:
        name = self.take(kind="name")
        key = None
        fld = None
        if self.peek()[1] == "[":
            self.i += 1
            key = self.value()
            self.take("]")
        if self.peek()[1] == ".":
            self.i += 1
            fld = self.take(kind="name")
        return Ref(name, key, fld)

    def cond(self) -> Cond:
        left = self.cond_and()
        while self.peek()[1] == "||":
            self.i += 1
            left = Cond("or", (left, self.cond_and()))
        return left

    def cond_and(self) -> Cond:
        left = self.cond_atom()
        while self.peek()[1] == "&&":
            self.i += 1
            left = Cond("and", (left, self.cond_atom()))
        return left

    def cond_atom(self) -> Cond:
        k, v = self.peek()
        if v == "!":
            self.i += 1
            return Cond("not", (self.cond_atom(),))
        if v == "(":
            self.i += 1
            c = self.cond()
            self.take(")")
            return c
        if k == "name" and v in ("bound", "nonempty") and self.toks[self.i + 1:self.i + 2] == [("op", "(")]:
            self.i += 2
            r = self.ref()
            self.take(")")
            return Cond(v, (r,))
        left = self.value()
        op = self.peek()[1]
        if op not in ("==", "!="):
            raise TemplateError(self.line, f"condition must be bound(...), nonempty(...) or a comparison: {self.text!r}")
        self.i += 1
        return Cond("eq" if op == "==" else "ne", (left, self.value()))


def _find_close(text: str, start: int, line: int) -> int:
    """Index of the ')' closing the '(' at ``start``, skipping quoted strings."""
    depth = 0
    i = start
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == '"':
            i += 1
            while i < n and text[i] != '"':
                i += 2 if text[i] == "\\" else 1
            if i >= n:
                raise TemplateError(line, "unterminated string in directive")
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return i
        i += 1
    raise TemplateError(line, "unclosed '(' in directive")


def _unescape(s: str) -> str:
    return re.sub(r'\\(["\\])', r"\1", s)


def _lex(text: str) -> list:
    """Split template text into (kind, start, end, payload) items."""
    items = []
    i = 0
    n = len(text)
    while i < n:
        j_hash = text.find("#", i)
        j_dollar = text.find("${", i)
        cands = [j for j in (j_hash, j_dollar) if j >= 0]
        if not cands:
            break
        j = min(cands)
        line = text.count("\n", 0, j) + 1
        if j == j_dollar:
            end = text.find("}", j)
            if end < 0:
                raise TemplateError(line, "unclosed '${'")
            items.append(("interp", j, end + 1, text[j + 2:end]))
            i = end + 1
            continue
        if text.startswith("##", j):
            items.append(("hash", j, j + 2, None))
            i = j + 2
            continue
        m = _NAME.match(text, j + 1)
        if not m:
            i = j + 1  # lone '#' is plain text
            continue
        name = m.group()
        if name not in _DIRECTIVES:
            raise TemplateError(line, f"unknown directive #{name}")
        k = m.end()
        args = None
        if name in ("query", "index", "foreach", "if"):
            if k >= n or text[k] != "(":
                raise TemplateError(line, f"#{name} needs arguments in parentheses")
            close = _find_close(text, k, line)
            args = (k + 1, close)
            k = close + 1
        items.append((name, j, k, args))
        i = k
    return items


def _gobble(text: str, start: int, end: int) -> tuple[int, int]:
    line_start = text.rfind("\n", 0, start) + 1
    line_end = text.find("\n", end)
    stop = len(text) if line_end < 0 else line_end
    if text[line_start:start].strip() or text[end:stop].strip():
        return start, end
    return line_start, (stop if line_end < 0 else line_end + 1)


def parse_template(text: str) -> Template:
    items = _lex(text)
    root: list = []
    stack = [("root", root, None, 0)]  # (kind, node list, node, line)
    scopes: list[dict] = [{}]
    prefixes: dict[str, str] = {}
    pos = 0

    def declared(name: str):
        for scope in reversed(scopes):
            if name in scope:
                return scope[name]
        return None

    for kind, start, end, payload in items:
        line = text.count("\n", 0, start) + 1
        if kind not in ("interp", "hash"):
            start, end = _gobble(text, start, end)
        if start > pos:
            stack[-1][1].append(Text(text[pos:start]))
        pos = end
        body = stack[-1][1]
        if kind == "hash":
            body.append(Text("#"))
        elif kind == "interp":
            raw = payload.startswith("!")
            p = _ExprParser(payload[1:] if raw else payload, line)
            expr = p.value()
            p.done()
            body.append(Interp(expr, raw, line))
        elif kind == "query":
            a, b = payload
            args = text[a:b]
            m = re.match(r"\s*(" + _IDENT + r')\s*,\s*"((?:[^"\\]|\\.)*)"\s*$', args, re.S)
            if not m:
                raise TemplateError(line, '#query expects (name, "query text")')
            qtext = _unescape(m.group(2))
            qline = text.count("\n", 0, a + m.start(2)) + 1
            try:
                q = parse_query(qtext, prefixes)
            except QuerySyntaxError as exc:
                raise TemplateError(qline + exc.line - 1, f"bad query {m.group(1)}: {exc.message}") from None
            prefixes.update(q.prefixes)
            scopes[-1][m.group(1)] = "query"
            body.append(QueryNode(m.group(1), q, qtext, line))
        elif kind == "index":
            a, b = payload
            parts = [x.strip() for x in text[a:b].split(",")]
            if len(parts) != 3 or not all(re.fullmatch(_IDENT, x) for x in parts):
                raise TemplateError(line, "#index expects (name, source, keyVar)")
            name, source, key = parts
            if declared(source) != "query":
                raise TemplateError(line, f"undeclared source: {source}")
            scopes[-1][name] = "index"
            body.append(IndexNode(name, source, key, line))
        elif kind == "foreach":
            a, b = payload
            m = re.match(r"\s*(" + _IDENT + r")\s+in\s+(.+?)\s*$", text[a:b], re.S)
            if not m:
                raise TemplateError(line, "#foreach expects (var in source)")
            p = _ExprParser(m.group(2), line)
            src = p.ref()
            p.done()
            if src.field is not None:
                raise TemplateError(line, f"cannot iterate over a field: {src}")
            kind_of = declared(src.name)
            if kind_of not in ("query", "index") or (kind_of == "index") != (src.key is not None):
                raise TemplateError(line, f"undeclared source: {src}")
            node = Foreach(m.group(1), src, [], line)
            body.append(node)
            stack.append(("foreach", node.body, node, line))
            scopes.append({m.group(1): "row"})
        elif kind == "if":
            a, b = payload
            p = _ExprParser(text[a:b], line)
            cond = p.cond()
            p.done()
            node = If(cond, [], [], line)
            body.append(node)
            stack.append(("if", node.body, node, line))
            scopes.append({})
        elif kind == "else":
            if stack[-1][0] != "if":
                raise TemplateError(line, "#else without #if")
            _, _, node, opened = stack.pop()
            stack.append(("else", node.orelse, node, opened))
            scopes[-1] = {}
        elif kind == "end":
            if len(stack) == 1:
                raise TemplateError(line, "#end without an open block")
            stack.pop()
            scopes.pop()
    if len(stack) > 1:
        kind, _, _, opened = stack[-1]
        kind = "if" if kind == "else" else kind
        raise TemplateError(opened, f"unclosed #{kind}")
    if pos < len(text):
        root.append(Text(text[pos:]))
    return Template(_merge_text(root))


def _merge_text(nodes: list) -> list:
    out: list = []
    for node in nodes:
        if isinstance(node, Text):
            if not node.text:
                continue
            if out and isinstance(out[-1], Text):
                out[-1] = Text(out[-1].text + node.text)
                continue
        elif isinstance(node, Foreach):
            node.body = _merge_text(node.body)
        elif isinstance(node, If):
            node.body = _merge_text(node.body)
            node.orelse = _merge_text(node.orelse)
        out.append(node)
    return out


# -- rendering ---------------------------------------------------------------

_XML_ESCAPE = str.maketrans({"&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;"})


def xml_escape(s: str) -> str:
    return s.translate(_XML_ESCAPE)


def term_text(value) -> str:
    cls = value.__class__
    if cls is Literal:
        return value.lexical
    if cls is IRI:
        return value.value
    if cls is BNode:
        return value.label
    return str(value)


class _Unbound(Exception):
    pass


class _Renderer:
    def __init__(self, graph: Graph, params: dict, diagnostics: list):
        self.graph = graph
        self.env: dict = dict(params)
        self.diagnostics = diagnostics
        self.out: list[str] = []

    def lookup(self, expr):
        """Resolve to a term/string, a row, a list of rows; raise _Unbound when missing."""
        if expr.__class__ is Lit:
            return expr.value
        env = self.env
        if expr.name not in env:
            raise _Unbound
        val = env[expr.name]
        if expr.key is not None:
            if not isinstance(val, _Index):
                raise _Unbound
            key = self.text(expr.key, quiet=True)
            val = val.rows.get(key, ())
            if expr.field is None:
                return val
            if not val:
                raise _Unbound
            val = val[0]
        if expr.field is not None:
            if not isinstance(val, dict):
                raise _Unbound
            v = val.get(expr.field)
            if v is None:
                raise _Unbound
            return v
        return val

    def text(self, expr, line: int = 0, quiet: bool = False) -> str:
        try:
            v = self.lookup(expr)
        except _Unbound:
            if not quiet:
                self.diagnostics.append(f"line {line}: unbound ${{{expr}}}")
            return ""
        if isinstance(v, (list, tuple, dict, _Index)):
            if not quiet:
                self.diagnostics.append(f"line {line}: ${{{expr}}} is not a value")
            return ""
        return term_text(v)

    def test(self, cond: Cond) -> bool:
        op = cond.op
        if op == "bound":
            try:
                v = self.lookup(cond.args[0])
            except _Unbound:
                return False
            return not isinstance(v, (list, tuple, _Index))
        if op == "nonempty":
            try:
                v = self.lookup(cond.args[0])
            except _Unbound:
                return False
            if isinstance(v, _Index):
                return bool(v.rows)
            return bool(v)
        if op == "not":
            return not self.test(cond.args[0])
        if op == "and":
            return self.test(cond.args[0]) and self.test(cond.args[1])
        if op == "or":
            return self.test(cond.args[0]) or self.test(cond.args[1])
        a = self.text(cond.args[0], quiet=True)
        b = self.text(cond.args[1], quiet=True)
        return (a == b) if op == "eq" else (a != b)

    def render(self, nodes: list):
        out = self.out
        env = self.env
        for node in nodes:
            cls = node.__class__
            if cls is Text:
                out.append(node.text)
            elif cls is Interp:
                s = self.text(node.expr, node.line)
                out.append(s if node.raw else s.translate(_XML_ESCAPE))
            elif cls is Foreach:
                rows = self.lookup(node.source) if node.source.key is not None else env[node.source.name]
                saved = env.get(node.var, _MISSING)
                for row in rows:
                    env[node.var] = row
                    self.render(node.body)
                if saved is _MISSING:
                    env.pop(node.var, None)
                else:
                    env[node.var] = saved
            elif cls is If:
                self.render(node.body if self.test(node.cond) else node.orelse)
            elif cls is QueryNode:
                env[node.name] = evaluate_query(node.query, self.graph)
            elif cls is IndexNode:
                idx = _Index()
                key = node.key
                for row in env[node.source]:
                    k = row.get(key)
                    if k is None:
                        continue
                    idx.rows.setdefault(term_text(k), []).append(row)
                env[node.name] = idx
            else:  # pragma: no cover
                raise TypeError(node)


_MISSING = object()


class _Index:
    __slots__ = ("rows",)

    def __init__(self):
        self.rows: dict[str, list] = {}


def render_template(t: Template, graph: Graph, params: dict | None = None, diagnostics: list | None = None) -> bytes:
    """Render ``t`` against ``graph``; unbound interpolations become empty and are reported."""
    diags = diagnostics if diagnostics is not None else []
    r = _Renderer(graph, params or {}, diags)
    with gc_paused():
        r.render(t.nodes)
    return "".join(r.out).encode("utf-8")


def load_template(path) -> Template:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_template(text)
    except TemplateError as exc:
        raise TemplateError(exc.line, f"{path}: {exc.message}") from None


# -- whitespace removal ------------------------------------------------------

_XML_TOKEN = re.compile(
    rb"""<!--.*?-->|<!\[CDATA\[.*?\]\]>|<\?.*?\?>|<!DOCTYPE[^>]*>|<(?:[^>"']|"[^"]*"|'[^']*')*>|[^<]+|<""",
    re.S,
)
_TAG_WS = re.compile(rb"""("[^"]*"|'[^']*')|\s+""")


def _squeeze_tag(tag: bytes) -> bytes:
    inner = _TAG_WS.sub(lambda m: m.group(1) or b" ", tag)
    return inner.replace(b" >", b">").replace(b" />", b"/>").replace(b"< ", b"<").replace(b" ?>", b"?>")


def minify_output(data: bytes) -> bytes:
    """Drop whitespace-only text between markup and normalise whitespace inside tags.

    Text nodes that contain anything besides whitespace, attribute values,
    comments and CDATA sections are kept byte-for-byte.
    """
    out = []
    for m in _XML_TOKEN.finditer(data):
        tok = m.group()
        if tok[:1] != b"<":
            if tok.strip():
                out.append(tok)
        elif tok.startswith((b"<!--", b"<![CDATA[")):
            out.append(tok)
        else:
            out.append(_squeeze_tag(tok))
    return b"".join(out)
