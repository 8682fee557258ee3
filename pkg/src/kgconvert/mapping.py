"""Compact mapping language (CML) for declarative CSV-to-RDF lifting.

One statement per line, ``#`` starts a comment::

    prefix ot: <http://example.org/ot#>
    map StopMap
      from csv stream "stops.txt" where location_type = "0"
      subject "http://example.org/stop/{stop_id}" type ot:ScheduledStopPoint
      po ot:name ref stop_name lang en
      po ot:arrival ref _time fn gtfs_time(arrival_time) datatype xsd:time
      po ot:onLine join LineMap on route_id = route_id

Object forms are ``ref <column>``, ``const <term>``, ``template "<str>"``,
``fn name(args)`` (shorthand for ``ref _value fn ...``) and
``join <Map> on <child> = <parent>``. Modifiers: ``datatype``, ``lang``,
``fn`` and ``as iri|literal|blank``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

from . import functions
from .terms import RDF, RDFS, XSD, is_valid_iri

DEFAULT_PREFIXES = {"rdf": RDF, "rdfs": RDFS, "xsd": XSD}

TERM_KINDS = ("iri", "literal", "blank")
MAP_KINDS = ("constant", "reference", "template")


class MappingSyntaxError(ValueError):
    def __init__(self, line: int, column: int, message: str):
        self.line = line
        self.column = column
        self.message = message
        super().__init__(f"line {line}, column {column}: {message}")


@dataclass(frozen=True)
class ColumnArg:
    name: str


@dataclass(frozen=True)
class ConstArg:
    value: str


@dataclass(frozen=True)
class FunctionCall:
    name: str
    args: tuple = ()


@dataclass(frozen=True)
class TermMapDef:
    kind: str
    value: str
    term_kind: str
    datatype: str | None = None
    language: str | None = None
    function: FunctionCall | None = None

    def columns(self) -> list[str]:
        if self.kind == "reference":
            return [self.value]
        if self.kind == "template":
            return template_columns(self.value)
        return []


@dataclass(frozen=True)
class JoinRef:
    parent_map: str
    child_column: str
    parent_column: str


@dataclass(frozen=True)
class PredicateObject:
    predicate: str
    object: Union[TermMapDef, JoinRef]


@dataclass(frozen=True)
class LogicalSourceDef:
    stream: str
    format: str = "csv"
    row_filter: tuple[str, str] | None = None


@dataclass(frozen=True)
class TriplesMapDef:
    name: str
    source: LogicalSourceDef
    subject: TermMapDef
    classes: tuple[str, ...] = ()
    predicate_objects: tuple[PredicateObject, ...] = ()

    def join_parents(self) -> list[str]:
        return [po.object.parent_map for po in self.predicate_objects if isinstance(po.object, JoinRef)]


@dataclass
class MappingDoc:
    prefixes: dict[str, str] = field(default_factory=dict)
    maps: list[TriplesMapDef] = field(default_factory=list)

    def get(self, name: str) -> TriplesMapDef | None:
        for m in self.maps:
            if m.name == name:
                return m
        return None


_PLACEHOLDER = re.compile(r"\{([^{}]*)\}")


def template_columns(template: str) -> list[str]:
    return _PLACEHOLDER.findall(template)


def check_template(template: str) -> str | None:
    """Return an error message if braces are unbalanced or a placeholder is empty."""
    depth = 0
    for ch in template:
        if ch == "{":
            depth += 1
            if depth > 1:
                return "nested '{' in template"
        elif ch == "}":
            depth -= 1
            if depth < 0:
                return "unbalanced '}' in template"
    if depth:
        return "unbalanced '{' in template"
    if any(not c.strip() for c in template_columns(template)):
        return "empty placeholder in template"
    return None


# -- tokenizer ---------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<comment>\#.*)
  | (?P<iri><[^<>\s]*>)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<pname>[A-Za-z_][\w\-]*:[\w\-./#%]*)
  | (?P<ident>[A-Za-z_][\w\-.]*)
  | (?P<punct>[(),=])
    """,
    re.X,
)


@dataclass
class _Tok:
    kind: str
    text: str
    col: int


def _unquote(s: str) -> str:
    return re.sub(r"\\(.)", r"\1", s[1:-1])


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _tokenize(line: str, lineno: int) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if not m:
            ch = line[pos]
            if ch == "<":
                raise MappingSyntaxError(lineno, pos + 1, "unclosed '<'")
            if ch == '"':
                raise MappingSyntaxError(lineno, pos + 1, "unclosed '\"'")
            raise MappingSyntaxError(lineno, pos + 1, f"unexpected character {ch!r}")
        kind = m.lastgroup
        if kind == "comment":
            break
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), pos + 1))
        pos = m.end()
    return toks


class _Cursor:
    def __init__(self, toks: list[_Tok], lineno: int, prefixes: dict[str, str], line_len: int):
        self.toks = toks
        self.i = 0
        self.lineno = lineno
        self.prefixes = prefixes
        self.line_len = line_len

    def error(self, message: str, tok: _Tok | None = None):
        col = tok.col if tok else (self.peek().col if self.peek() else self.line_len + 1)
        raise MappingSyntaxError(self.lineno, col, message)

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self, what: str) -> _Tok:
        tok = self.peek()
        if tok is None:
            self.error(f"expected {what}")
        self.i += 1
        return tok

    def expect(self, kind: str, what: str, text: str | None = None) -> _Tok:
        tok = self.next(what)
        if tok.kind != kind or (text is not None and tok.text != text):
            self.error(f"expected {what}, found {tok.text!r}", tok)
        return tok

    def at_end(self) -> bool:
        return self.i >= len(self.toks)

    def iri(self, what: str = "IRI") -> str:
        tok = self.next(what)
        if tok.kind == "iri":
            value = tok.text[1:-1]
        elif tok.kind == "pname":
            prefix, local = tok.text.split(":", 1)
            if prefix not in self.prefixes:
                self.error(f"undeclared prefix '{prefix}'", tok)
            value = self.prefixes[prefix] + local
        elif tok.kind == "ident" and tok.text == "a":
            value = RDF + "type"
        else:
            self.error(f"expected {what}, found {tok.text!r}", tok)
        if not is_valid_iri(value):
            self.error(f"invalid IRI {value!r}", tok)
        return value

    def ident(self, what: str) -> str:
        return self.expect("ident", what).text

    def string(self, what: str) -> str:
        return _unquote(self.expect("string", what).text)

    def function_call(self) -> FunctionCall:
        name = self.ident("function name")
        self.expect("punct", "'('", "(")
        args = []
        if self.peek() is not None and self.peek().text == ")":
            self.i += 1
            return FunctionCall(name, ())
        while True:
            tok = self.next("function argument")
            if tok.kind == "ident":
                args.append(ColumnArg(tok.text))
            elif tok.kind == "string":
                args.append(ConstArg(_unquote(tok.text)))
            else:
                self.error(f"bad function argument {tok.text!r}", tok)
            sep = self.expect("punct", "',' or ')'")
            if sep.text == ")":
                break
            if sep.text != ",":
                self.error("expected ',' or ')'", sep)
        return FunctionCall(name, tuple(args))


def _modifiers(cur: _Cursor, tm: dict, allow_type: bool = False, classes: list | None = None):
    while not cur.at_end():
        tok = cur.next("modifier")
        word = tok.text if tok.kind == "ident" else None
        if word == "datatype":
            tm["datatype"] = cur.iri("datatype IRI")
        elif word == "lang":
            tm["language"] = cur.ident("language tag").lower()
        elif word == "fn":
            tm["function"] = cur.function_call()
        elif word == "as":
            kind_tok = cur.next("term kind")
            if kind_tok.text not in TERM_KINDS:
                cur.error(f"unknown term kind {kind_tok.text!r}", kind_tok)
            tm["term_kind"] = kind_tok.text
        elif word == "type" and allow_type:
            classes.append(cur.iri("class IRI"))
            while not cur.at_end() and cur.peek().kind in ("iri", "pname"):
                classes.append(cur.iri("class IRI"))
        else:
            cur.error(f"unknown keyword {tok.text!r}", tok)


def _template(cur: _Cursor) -> str:
    tok = cur.expect("string", "template string")
    value = _unquote(tok.text)
    problem = check_template(value)
    if problem:
        cur.error(problem, tok)
    return value


def _object(cur: _Cursor) -> Union[TermMapDef, JoinRef]:
    tok = cur.next("object map")
    word = tok.text if tok.kind == "ident" else None
    if word == "join":
        parent = cur.ident("parent map name")
        cur.expect("ident", "'on'", "on")
        child = cur.ident("child column")
        cur.expect("punct", "'='", "=")
        parent_col = cur.ident("parent column")
        if not cur.at_end():
            cur.error("unexpected tokens after join condition")
        return JoinRef(parent, child, parent_col)
    tm: dict = {}
    if word == "ref":
        tm.update(kind="reference", value=cur.ident("column name"), term_kind="literal")
    elif word == "template":
        tm.update(kind="template", value=_template(cur), term_kind="iri")
    elif word == "const":
        t = cur.peek()
        if t is not None and t.kind == "string":
            cur.i += 1
            tm.update(kind="constant", value=_unquote(t.text), term_kind="literal")
        else:
            tm.update(kind="constant", value=cur.iri("constant term"), term_kind="iri")
    elif word == "fn":
        tm.update(kind="reference", value="_value", term_kind="literal", function=cur.function_call())
    else:
        cur.error(f"unknown keyword {tok.text!r}", tok)
    _modifiers(cur, tm)
    return TermMapDef(**tm)


def parse_mapping(text: str) -> MappingDoc:
    """Parse CML text into a :class:`MappingDoc` with all IRIs expanded."""
    doc = MappingDoc(prefixes={})
    prefixes = dict(DEFAULT_PREFIXES)
    current: dict | None = None
    current_line = 0

    def close_map():
        if current is None:
            return
        if current["source"] is None:
            raise MappingSyntaxError(current_line, 1, f"map {current['name']} has no 'from' statement")
        if current["subject"] is None:
            raise MappingSyntaxError(current_line, 1, f"map {current['name']} has no 'subject' statement")
        doc.maps.append(
            TriplesMapDef(
                name=current["name"],
                source=current["source"],
                subject=current["subject"],
                classes=tuple(current["classes"]),
                predicate_objects=tuple(current["pos"]),
            )
        )

    for lineno, line in enumerate(text.splitlines(), 1):
        toks = _tokenize(line, lineno)
        if not toks:
            continue
        cur = _Cursor(toks, lineno, prefixes, len(line))
        head = cur.next("statement")
        keyword = head.text if head.kind == "ident" else None
        if keyword == "prefix":
            ptok = cur.expect("pname", "prefix name")
            name, local = ptok.text.split(":", 1)
            if local:
                cur.error("prefix name must end with ':'", ptok)
            ns = cur.expect("iri", "namespace IRI").text[1:-1]
            if not is_valid_iri(ns):
                cur.error(f"invalid namespace IRI {ns!r}")
            prefixes[name] = ns
            doc.prefixes[name] = ns
        elif keyword == "map":
            close_map()
            name_tok = cur.expect("ident", "map name")
            if doc.get(name_tok.text) is not None or (current and current["name"] == name_tok.text):
                cur.error(f"duplicate map name {name_tok.text!r}", name_tok)
            current = {"name": name_tok.text, "source": None, "subject": None, "classes": [], "pos": []}
            current_line = lineno
        elif keyword in ("from", "subject", "po"):
            if current is None:
                cur.error(f"'{keyword}' outside of a map", head)
            if keyword == "from":
                cur.expect("ident", "'csv'", "csv")
                cur.expect("ident", "'stream'", "stream")
                stream = cur.string("stream name")
                if not stream:
                    cur.error("empty stream name")
                row_filter = None
                if not cur.at_end():
                    cur.expect("ident", "'where'", "where")
                    col = cur.ident("filter column")
                    cur.expect("punct", "'='", "=")
                    row_filter = (col, cur.string("filter value"))
                if not cur.at_end():
                    cur.error("unexpected tokens after logical source")
                current["source"] = LogicalSourceDef(stream, "csv", row_filter)
            elif keyword == "subject":
                tm = {"kind": "template", "value": _template(cur), "term_kind": "iri"}
                _modifiers(cur, tm, allow_type=True, classes=current["classes"])
                current["subject"] = TermMapDef(**tm)
            else:
                predicate = cur.iri("predicate IRI")
                current["pos"].append(PredicateObject(predicate, _object(cur)))
        else:
            cur.error(f"unknown keyword {head.text!r}", head)
    close_map()
    return doc


# -- validation --------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    map: str
    reason: str

    def __str__(self):
        return f"{self.map}: {self.reason}"


def _check_term_map(map_name: str, tm: TermMapDef, where: str) -> list[Diagnostic]:
    out = []
    if tm.kind not in MAP_KINDS:
        out.append(Diagnostic(map_name, f"{where}: unknown term map kind {tm.kind!r}"))
    if tm.term_kind not in TERM_KINDS:
        out.append(Diagnostic(map_name, f"{where}: unknown term kind {tm.term_kind!r}"))
    if (tm.datatype or tm.language) and tm.term_kind != "literal":
        out.append(Diagnostic(map_name, f"{where}: datatype/language only allowed on literals"))
    if tm.datatype and tm.language:
        out.append(Diagnostic(map_name, f"{where}: both datatype and language given"))
    if tm.function is not None:
        fn = tm.function
        if not functions.is_registered(fn.name):
            out.append(Diagnostic(map_name, f"{where}: unknown function {fn.name!r}"))
        else:
            arity = functions.BUILTINS[fn.name][0]
            if arity is not None and len(fn.args) != arity:
                out.append(Diagnostic(map_name, f"{where}: {fn.name} expects {arity} argument(s)"))
    if tm.kind == "template":
        problem = check_template(tm.value)
        if problem:
            out.append(Diagnostic(map_name, f"{where}: {problem}"))
    return out


def validate_mapping(doc: MappingDoc) -> list[Diagnostic]:
    """Semantic checks; an empty list means the document is executable."""
    diags = []
    seen = set()
    for m in doc.maps:
        if m.name in seen:
            diags.append(Diagnostic(m.name, "duplicate map name"))
        seen.add(m.name)
    names = {m.name for m in doc.maps}
    for m in doc.maps:
        if m.subject.term_kind not in ("iri", "blank"):
            diags.append(Diagnostic(m.name, f"subject term kind must be iri or blank, not {m.subject.term_kind}"))
        diags.extend(_check_term_map(m.name, m.subject, "subject"))
        for po in m.predicate_objects:
            if isinstance(po.object, JoinRef):
                if po.object.parent_map not in names:
                    diags.append(Diagnostic(m.name, f"join target {po.object.parent_map!r} does not exist"))
            else:
                diags.extend(_check_term_map(m.name, po.object, f"object of <{po.predicate}>"))
    if not diags:
        try:
            execution_order(doc)
        except ValueError as exc:
            diags.append(Diagnostic("*", str(exc)))
    return diags


def execution_order(doc: MappingDoc) -> list[TriplesMapDef]:
    """Topological order: join parents before children, document order otherwise."""
    by_name = {m.name: m for m in doc.maps}
    done: dict[str, bool] = {}
    order = []

    def visit(m: TriplesMapDef, stack: tuple):
        if done.get(m.name):
            return
        if m.name in stack:
            raise ValueError("join cycle: " + " -> ".join(stack + (m.name,)))
        for parent in m.join_parents():
            if parent != m.name and parent in by_name:
                visit(by_name[parent], stack + (m.name,))
        done[m.name] = True
        order.append(m)

    for m in doc.maps:
        visit(m, ())
    return order


# -- pretty printer ----------------------------------------------------------

def _fmt_call(fn: FunctionCall) -> str:
    args = ", ".join(a.name if isinstance(a, ColumnArg) else _quote(a.value) for a in fn.args)
    return f"{fn.name}({args})"


def _fmt_term_map(tm: TermMapDef, subject: bool = False) -> str:
    if subject:
        parts = [_quote(tm.value)]
        default_kind = "iri"
    elif tm.kind == "reference":
        parts = ["ref", tm.value]
        default_kind = "literal"
    elif tm.kind == "template":
        parts = ["template", _quote(tm.value)]
        default_kind = "iri"
    elif tm.term_kind == "literal":
        parts = ["const", _quote(tm.value)]
        default_kind = "literal"
    else:
        parts = ["const", f"<{tm.value}>"]
        default_kind = "iri"
    if tm.term_kind != default_kind:
        parts += ["as", tm.term_kind]
    if tm.datatype:
        parts += ["datatype", f"<{tm.datatype}>"]
    if tm.language:
        parts += ["lang", tm.language]
    if tm.function:
        parts += ["fn", _fmt_call(tm.function)]
    return " ".join(parts)


def format_mapping(doc: MappingDoc) -> str:
    """Render a document in canonical CML (full IRIs); reparses to an equal doc."""
    lines = [f"prefix {p}: <{ns}>" for p, ns in doc.prefixes.items()]
    for m in doc.maps:
        if lines:
            lines.append("")
        lines.append(f"map {m.name}")
        src = f'  from csv stream {_quote(m.source.stream)}'
        if m.source.row_filter:
            col, val = m.source.row_filter
            src += f" where {col} = {_quote(val)}"
        lines.append(src)
        subj = "  subject " + _fmt_term_map(m.subject, subject=True)
        if m.classes:
            subj += " type " + " ".join(f"<{c}>" for c in m.classes)
        lines.append(subj)
        for po in m.predicate_objects:
            if isinstance(po.object, JoinRef):
                j = po.object
                lines.append(f"  po <{po.predicate}> join {j.parent_map} on {j.child_column} = {j.parent_column}")
            else:
                lines.append(f"  po <{po.predicate}> {_fmt_term_map(po.object)}")
    return "\n".join(lines) + "\n"


def load_mapping(path) -> MappingDoc:
    with open(path, encoding="utf-8") as fh:
        return parse_mapping(fh.read())
