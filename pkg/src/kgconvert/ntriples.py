"""N-Triples reading and writing."""
from __future__ import annotations

import re
from typing import Iterable

from .graph import Graph
from .terms import IRI, BNode, Literal, TermError, Triple


class NTriplesError(ValueError):
    def __init__(self, line: int, reason: str, source: str | None = None):
        self.line = line
        self.reason = reason
        self.source = source
        where = f"{source}:{line}" if source else f"line {line}"
        super().__init__(f"{where}: {reason}")


_ESC = re.compile(r"\\(?:u([0-9A-Fa-f]{4})|U([0-9A-Fa-f]{8})|(.))", re.S)
_SIMPLE = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}
_BNODE = re.compile(r"_:([A-Za-z0-9_]+)")
_LANG = re.compile(r"@([a-zA-Z]+(?:-[a-zA-Z0-9]+)*)")


def _unescape(text: str) -> str:
    if "\\" not in text:
        return text

    def sub(m):
        if m.group(1):
            return chr(int(m.group(1), 16))
        if m.group(2):
            return chr(int(m.group(2), 16))
        ch = m.group(3)
        if ch not in _SIMPLE:
            raise ValueError(f"bad escape \\{ch}")
        return _SIMPLE[ch]

    return _ESC.sub(sub, text)


class _LineParser:
    __slots__ = ("text", "pos", "lineno")

    def __init__(self, text: str, lineno: int):
        self.text = text
        self.pos = 0
        self.lineno = lineno

    def fail(self, reason: str):
        raise NTriplesError(self.lineno, reason)

    def skip_ws(self):
        t, i = self.text, self.pos
        while i < len(t) and t[i] in " \t":
            i += 1
        self.pos = i

    def iri(self) -> IRI:
        end = self.text.find(">", self.pos + 1)
        if end < 0:
            self.fail("unclosed '<'")
        raw = self.text[self.pos + 1:end]
        self.pos = end + 1
        try:
            return IRI(_unescape(raw))
        except (TermError, ValueError) as exc:
            self.fail(str(exc))

    def bnode(self) -> BNode:
        m = _BNODE.match(self.text, self.pos)
        if not m:
            self.fail("malformed blank node")
        self.pos = m.end()
        return BNode(m.group(1))

    def literal(self) -> Literal:
        t = self.text
        i = self.pos + 1
        while True:
            j = t.find('"', i)
            if j < 0:
                self.fail("unclosed '\"'")
            # count preceding backslashes to see whether the quote is escaped
            k = j - 1
            while k >= self.pos + 1 and t[k] == "\\":
                k -= 1
            if (j - 1 - k) % 2 == 0:
                break
            i = j + 1
        try:
            lexical = _unescape(t[self.pos + 1:j])
        except ValueError as exc:
            self.fail(str(exc))
        self.pos = j + 1
        if t.startswith("^^", self.pos):
            self.pos += 2
            if not t.startswith("<", self.pos):
                self.fail("datatype must be an IRI")
            return Literal(lexical, datatype=self.iri())
        if t.startswith("@", self.pos):
            m = _LANG.match(t, self.pos)
            if not m:
                self.fail("malformed language tag")
            self.pos = m.end()
            return Literal(lexical, language=m.group(1))
        return Literal(lexical)

    def term(self, allowed: str):
        self.skip_ws()
        if self.pos >= len(self.text):
            self.fail("unexpected end of line")
        ch = self.text[self.pos]
        if ch == "<":
            return self.iri()
        if ch == "_" and "b" in allowed:
            return self.bnode()
        if ch == '"' and "l" in allowed:
            return self.literal()
        self.fail(f"unexpected character {ch!r}")

    def triple(self) -> Triple:
        s = self.term("b")
        p = self.term("")
        o = self.term("bl")
        self.skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] != ".":
            self.fail("missing terminating '.'")
        self.pos += 1
        self.skip_ws()
        if self.pos < len(self.text) and self.text[self.pos] != "#":
            self.fail("trailing content after '.'")
        return Triple(s, p, o)


def parse_ntriples(data: bytes | str, source: str | None = None) -> list[Triple]:
    """Parse N-Triples text; one statement per non-blank, non-comment line."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    out = []
    for lineno, line in enumerate(data.split("\n"), 1):
        line = line.rstrip("\r").strip(" \t")
        if not line or line[0] == "#":
            continue
        try:
            out.append(_LineParser(line, lineno).triple())
        except NTriplesError as exc:
            exc.source = source
            raise NTriplesError(exc.line, exc.reason, source) from None
    return out


def sort_key(triple: Triple) -> tuple[str, str, str]:
    return (triple[0].n3(), triple[1].n3(), triple[2].n3())


def serialize_triples(triples: Iterable[Triple]) -> bytes:
    lines = sorted(f"{s} {p} {o} .\n" for s, p, o in ((t[0].n3(), t[1].n3(), t[2].n3()) for t in triples))
    return "".join(lines).encode("utf-8")


def write_ntriples(graph: Graph) -> bytes:
    """Serialize a graph deterministically: one sorted line per triple."""
    return serialize_triples(graph.triples())


def load_ntriples(path, graph: Graph | None = None) -> Graph:
    graph = graph if graph is not None else Graph()
    with open(path, "rb") as fh:
        graph.insert(parse_ntriples(fh.read(), source=str(path)))
    return graph
