"""RDF term model: IRIs, blank nodes, literals and triples.

Terms are immutable, hashable and cheap to compare; every term precomputes
its hash because the graph indices hash them constantly.
"""
from __future__ import annotations

import re

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
XSD = "http://www.w3.org/2001/XMLSchema#"

_SCHEME = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:")
_IRI_FORBIDDEN = re.compile(r'[\s<>"\\]')
_BNODE_LABEL = re.compile(r"^[A-Za-z0-9_]+$")
_LANG = re.compile(r"^[a-zA-Z]+(-[a-zA-Z0-9]+)*$")

NUMERIC_TYPES = frozenset(
    XSD + t
    for t in (
        "integer", "decimal", "float", "double", "int", "long", "short", "byte",
        "nonNegativeInteger", "positiveInteger", "negativeInteger",
        "nonPositiveInteger", "unsignedInt", "unsignedLong", "unsignedShort",
        "unsignedByte",
    )
)


class TermError(ValueError):
    pass


def is_valid_iri(value: str) -> bool:
    return bool(value) and _SCHEME.match(value) is not None and _IRI_FORBIDDEN.search(value) is None


class Term:
    __slots__ = ()

    # kind rank used by ORDER BY: blank < IRI < literal
    rank = 0

    def n3(self) -> str:
        raise NotImplementedError


class IRI(Term):
    __slots__ = ("value", "_hash")
    rank = 1

    def __init__(self, value: str, *, check: bool = True):
        if check and not is_valid_iri(value):
            raise TermError(f"invalid IRI: {value!r}")
        self.value = value
        self._hash = hash(("I", value))

    def __eq__(self, other):
        return other.__class__ is IRI and other.value == self.value

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"IRI({self.value!r})"

    def __str__(self):
        return self.value

    def n3(self) -> str:
        return f"<{self.value}>"


class BNode(Term):
    __slots__ = ("label", "_hash")
    rank = 0

    def __init__(self, label: str):
        if not _BNODE_LABEL.match(label):
            raise TermError(f"invalid blank node label: {label!r}")
        self.label = label
        self._hash = hash(("B", label))

    def __eq__(self, other):
        return other.__class__ is BNode and other.label == self.label

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"BNode({self.label!r})"

    def __str__(self):
        return self.label

    def n3(self) -> str:
        return f"_:{self.label}"


class Literal(Term):
    __slots__ = ("lexical", "datatype", "language", "_hash")
    rank = 2

    def __init__(self, lexical: str, datatype: IRI | None = None, language: str | None = None):
        if datatype is not None and language is not None:
            raise TermError("literal cannot carry both a datatype and a language tag")
        if language is not None:
            if not _LANG.match(language):
                raise TermError(f"invalid language tag: {language!r}")
            language = language.lower()
        self.lexical = lexical
        self.datatype = datatype
        self.language = language
        self._hash = hash(("L", lexical, datatype, language))

    def __eq__(self, other):
        return (
            other.__class__ is Literal
            and other.lexical == self.lexical
            and other.datatype == self.datatype
            and other.language == self.language
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        extra = ""
        if self.datatype is not None:
            extra = f", datatype={self.datatype.value!r}"
        elif self.language is not None:
            extra = f", language={self.language!r}"
        return f"Literal({self.lexical!r}{extra})"

    def __str__(self):
        return self.lexical

    @property
    def is_numeric(self) -> bool:
        return self.datatype is not None and self.datatype.value in NUMERIC_TYPES

    def numeric_value(self) -> float | int | None:
        if not self.is_numeric:
            return None
        try:
            if self.datatype.value in (XSD + "decimal", XSD + "float", XSD + "double"):
                return float(self.lexical)
            return int(self.lexical)
        except ValueError:
            return None

    def n3(self) -> str:
        out = '"' + escape_string(self.lexical) + '"'
        if self.datatype is not None:
            return out + "^^" + self.datatype.n3()
        if self.language is not None:
            return out + "@" + self.language
        return out


_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t", "\b": "\\b", "\f": "\\f"}
_NEEDS_ESCAPE = re.compile(r'[\\"\n\r\t\b\f]')


def escape_string(s: str) -> str:
    return _NEEDS_ESCAPE.sub(lambda m: _ESCAPES[m.group()], s)


class Triple(tuple):
    """An (subject, predicate, object) statement.

    A tuple subclass so triples hash and compare at C speed.
    """

    __slots__ = ()

    def __new__(cls, subject: IRI | BNode, predicate: IRI, obj: Term):
        if subject.__class__ is not IRI and subject.__class__ is not BNode:
            raise TermError("triple subject must be an IRI or blank node")
        if predicate.__class__ is not IRI:
            raise TermError("triple predicate must be an IRI")
        return tuple.__new__(cls, (subject, predicate, obj))

    @property
    def subject(self):
        return self[0]

    @property
    def predicate(self):
        return self[1]

    @property
    def object(self):
        return self[2]

    def n3(self) -> str:
        return f"{self[0].n3()} {self[1].n3()} {self[2].n3()} ."

    def __repr__(self):
        return f"Triple({self[0]!r}, {self[1]!r}, {self[2]!r})"


RDF_TYPE = IRI(RDF + "type")
RDFS_SUBCLASSOF = IRI(RDFS + "subClassOf")
RDFS_SUBPROPERTYOF = IRI(RDFS + "subPropertyOf")
RDFS_DOMAIN = IRI(RDFS + "domain")
RDFS_RANGE = IRI(RDFS + "range")
XSD_STRING = IRI(XSD + "string")
XSD_INTEGER = IRI(XSD + "integer")
XSD_DECIMAL = IRI(XSD + "decimal")
XSD_BOOLEAN = IRI(XSD + "boolean")
