"""FILTER expression trees and their evaluation.

Evaluation follows SPARQL error semantics: an unbound variable or a type
error raises :class:`ExprError`; ``||`` and ``&&`` absorb errors where the
other operand decides the result, and a filter whose value is an error
rejects the solution.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

from ..terms import IRI, XSD, BNode, Literal, Term, XSD_BOOLEAN

TRUE = Literal("true", datatype=XSD_BOOLEAN)
FALSE = Literal("false", datatype=XSD_BOOLEAN)
_XSD_STRING = XSD + "string"


class ExprError(Exception):
    pass


def _bool(v: bool) -> Literal:
    return TRUE if v else FALSE


def numeric(term) -> int | float | None:
    if term.__class__ is Literal and term.is_numeric:
        v = term.numeric_value()
        if v is not None and v == v:
            return v
    return None


def ebv(term: Term) -> bool:
    """Effective boolean value."""
    if term.__class__ is not Literal:
        raise ExprError("no boolean value for a non-literal")
    if term.datatype is not None and term.datatype == XSD_BOOLEAN:
        return term.lexical in ("true", "1")
    n = numeric(term)
    if n is not None:
        return n != 0
    if term.datatype is None or term.datatype.value == _XSD_STRING:
        return len(term.lexical) > 0
    raise ExprError("no boolean value for typed literal")


def lexical(term: Term) -> str:
    if term.__class__ is Literal:
        return term.lexical
    if term.__class__ is IRI:
        return term.value
    return term.label


@lru_cache(maxsize=256)
def _compile(pattern: str, flags: str) -> re.Pattern:
    f = 0
    for ch in flags:
        if ch == "i":
            f |= re.I
        elif ch == "s":
            f |= re.S
        elif ch == "m":
            f |= re.M
        elif ch == "x":
            f |= re.X
        else:
            raise ExprError(f"bad regex flag {ch!r}")
    try:
        return re.compile(pattern, f)
    except re.error as exc:
        raise ExprError(str(exc)) from None


class Expr:
    def eval(self, sol: dict) -> Term:
        raise NotImplementedError

    def test(self, sol: dict) -> bool:
        try:
            return ebv(self.eval(sol))
        except ExprError:
            return False


@dataclass(frozen=True)
class Const(Expr):
    term: Term

    def eval(self, sol):
        return self.term


@dataclass(frozen=True)
class VarRef(Expr):
    name: str

    def eval(self, sol):
        v = sol.get(self.name)
        if v is None:
            raise ExprError(f"unbound ?{self.name}")
        return v


@dataclass(frozen=True)
class Bound(Expr):
    name: str

    def eval(self, sol):
        return _bool(sol.get(self.name) is not None)


@dataclass(frozen=True)
class Not(Expr):
    arg: Expr

    def eval(self, sol):
        return _bool(not ebv(self.arg.eval(sol)))


@dataclass(frozen=True)
class Or(Expr):
    left: Expr
    right: Expr

    def eval(self, sol):
        try:
            if ebv(self.left.eval(sol)):
                return TRUE
            left_error = False
        except ExprError:
            left_error = True
        if ebv(self.right.eval(sol)):
            return TRUE
        if left_error:
            raise ExprError("error in ||")
        return FALSE


@dataclass(frozen=True)
class And(Expr):
    left: Expr
    right: Expr

    def eval(self, sol):
        try:
            left = ebv(self.left.eval(sol))
        except ExprError:
            if not ebv(self.right.eval(sol)):
                return FALSE
            raise
        if not left:
            return FALSE
        return _bool(ebv(self.right.eval(sol)))


def _equal(a: Term, b: Term) -> bool:
    na, nb = numeric(a), numeric(b)
    if na is not None and nb is not None:
        return na == nb
    return a == b


@dataclass(frozen=True)
class Compare(Expr):
    op: str
    left: Expr
    right: Expr

    def eval(self, sol):
        a = self.left.eval(sol)
        b = self.right.eval(sol)
        op = self.op
        if op == "=":
            return _bool(_equal(a, b))
        if op == "!=":
            return _bool(not _equal(a, b))
        na, nb = numeric(a), numeric(b)
        if na is not None and nb is not None:
            x, y = na, nb
        else:
            x, y = lexical(a), lexical(b)
        if op == "<":
            return _bool(x < y)
        if op == "<=":
            return _bool(x <= y)
        if op == ">":
            return _bool(x > y)
        return _bool(x >= y)


@dataclass(frozen=True)
class Str(Expr):
    arg: Expr

    def eval(self, sol):
        v = self.arg.eval(sol)
        if v.__class__ is BNode:
            raise ExprError("str() of a blank node")
        return Literal(lexical(v))


@dataclass(frozen=True)
class Regex(Expr):
    arg: Expr
    pattern: Expr
    flags: Expr | None = None

    def eval(self, sol):
        v = self.arg.eval(sol)
        if v.__class__ is not Literal:
            raise ExprError("regex() needs a literal")
        pat = self.pattern.eval(sol)
        flags = self.flags.eval(sol) if self.flags is not None else None
        rx = _compile(lexical(pat), lexical(flags) if flags is not None else "")
        return _bool(rx.search(v.lexical) is not None)
