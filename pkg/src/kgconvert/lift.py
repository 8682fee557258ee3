"""Execution of CML mappings over CSV input streams."""
from __future__ import annotations

import csv
import io
import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping
from urllib.parse import quote

from . import functions
from .gcpause import gc_paused
from .graph import Graph
from .mapping import (
    ColumnArg,
    FunctionCall,
    JoinRef,
    MappingDoc,
    TermMapDef,
    TriplesMapDef,
    execution_order,
    validate_mapping,
)
from .terms import IRI, RDF_TYPE, BNode, Literal, Term, Triple, is_valid_iri
from .writer import BatchedWriter, BatchedWriterConfig

log = logging.getLogger(__name__)

Row = Mapping[str, str]


class LiftError(RuntimeError):
    pass


@dataclass
class RowDiagnostic:
    map: str
    row: int
    reason: str

    def __str__(self):
        return f"{self.map} row {self.row}: {self.reason}"


@dataclass
class LiftReport:
    rows_read: int = 0
    triples_emitted: int = 0
    diagnostics: list = field(default_factory=list)


def read_csv(data: bytes | str, name: str = "<stream>") -> tuple[list[str], list[dict[str, str]]]:
    """Parse an RFC-4180 CSV stream whose first record is the header."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise LiftError(f"invalid UTF-8 in {name}: {exc}") from None
    elif data.startswith("﻿"):
        data = data[1:]
    reader = csv.reader(io.StringIO(data, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        return [], []
    header = [h.strip() for h in header]
    rows = []
    for rec in reader:
        if not rec:
            continue
        rows.append(dict(zip(header, rec)))
    return header, rows


_UNRESERVED = re.compile(r"[A-Za-z0-9._~-]*").fullmatch


def encode_iri_value(value: str) -> str:
    """Percent-encode everything outside the RFC 3986 unreserved set."""
    if _UNRESERVED(value):
        return value
    return quote(value, safe="-._~")


_BNODE_SAFE = re.compile(r"[A-Za-z0-9]")


def encode_bnode_value(value: str) -> str:
    return "".join(ch if _BNODE_SAFE.match(ch) else "".join(f"_{b:02x}" for b in ch.encode()) for ch in value)


_PLACEHOLDER = re.compile(r"\{([^{}]*)\}")


class _Expander:
    """A term map compiled for repeated expansion over rows."""

    __slots__ = ("tm", "map_name", "kind", "term_kind", "const", "parts", "column", "function", "datatype",
                 "language", "memo")

    def __init__(self, tm: TermMapDef, map_name: str = "", memo: bool = False):
        self.tm = tm
        # object templates repeat the same keys across rows (e.g. a stop id per stop time)
        self.memo = {} if memo and tm.kind == "template" and tm.function is None else None
        self.map_name = map_name
        self.kind = tm.kind
        self.term_kind = tm.term_kind
        self.function = tm.function
        self.datatype = IRI(tm.datatype) if tm.datatype else None
        self.language = tm.language
        self.const = None
        self.parts = None
        self.column = None
        if tm.kind == "constant":
            self.const = self._make(tm.value, checked=False)
        elif tm.kind == "reference":
            self.column = tm.value
        else:
            parts = []
            pos = 0
            for m in _PLACEHOLDER.finditer(tm.value):
                parts.append((False, tm.value[pos:m.start()]))
                parts.append((True, m.group(1)))
                pos = m.end()
            parts.append((False, tm.value[pos:]))
            self.parts = [p for p in parts if p[0] or p[1]]
            cols = [text for is_col, text in self.parts if is_col]
            # templates keep their placeholder columns here as the memo key shape
            self.column = cols[0] if len(cols) == 1 else tuple(cols)

    def _make(self, value: str, checked: bool) -> Term | None:
        kind = self.term_kind
        if kind == "literal":
            if self.datatype is not None:
                return Literal(value, datatype=self.datatype)
            if self.language is not None:
                return Literal(value, language=self.language)
            return Literal(value)
        if kind == "iri":
            if not checked and not is_valid_iri(value):
                return None
            return IRI(value, check=False)
        label = value if checked else encode_bnode_value(value)
        if self.map_name:
            label = f"{encode_bnode_value(self.map_name)}_{label}"
        return BNode(label or "b")

    def expand(self, row: Row, fn_cache: dict | None = None, diagnostics: list | None = None, rowno: int = 0) -> Term | None:
        lookup = row
        if self.function is not None:
            extra = _call(self.function, row, fn_cache, diagnostics, self.map_name, rowno)
            if extra is None:
                return None
            lookup = _Overlay(extra, row)
        if self.kind == "constant":
            return self.const
        if self.kind == "reference":
            v = lookup.get(self.column)
            if not v:
                return None
            if self.term_kind == "iri" and not is_valid_iri(v):
                if diagnostics is not None:
                    diagnostics.append(RowDiagnostic(self.map_name, rowno, f"value {v!r} of {self.column} is not an IRI"))
                return None
            return self._make(v, checked=True) if self.term_kind == "iri" else self._make(v, checked=False)
        memo = self.memo
        if memo is not None:
            cols = self.column
            if cols.__class__ is str:
                key = lookup.get(cols)
            else:
                key = tuple(lookup.get(c) for c in cols)
            hit = memo.get(key)
            if hit is not None:
                return hit
            term = self._fill(lookup, diagnostics, rowno)
            if term is not None:
                memo[key] = term
            return term
        return self._fill(lookup, diagnostics, rowno)

    def _fill(self, lookup, diagnostics, rowno) -> Term | None:
        out = []
        kind = self.term_kind
        for is_col, text in self.parts:
            if is_col:
                v = lookup.get(text)
                if not v:
                    return None
                if kind == "iri":
                    v = encode_iri_value(v)
                elif kind == "blank":
                    v = encode_bnode_value(v)
                out.append(v)
            else:
                out.append(text if kind != "blank" else encode_bnode_value(text))
        value = "".join(out)
        if kind == "iri":
            if not is_valid_iri(value):
                if diagnostics is not None:
                    diagnostics.append(RowDiagnostic(self.map_name, rowno, f"template produced invalid IRI {value!r}"))
                return None
            return IRI(value, check=False)
        return self._make(value, checked=True)


class _Overlay:
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a = a
        self.b = b

    def get(self, key, default=None):
        v = self.a.get(key)
        if v is None:
            return self.b.get(key, default)
        return v


_MISS = object()


def _call(call: FunctionCall, row: Row, cache, diagnostics, map_name, rowno) -> dict | None:
    # the per-row cache is keyed by identity; execute_triples_map interns equal calls
    if cache is not None:
        hit = cache.get(id(call), _MISS)
        if hit is not _MISS:
            return hit
    args = []
    result = None
    for a in call.args:
        if isinstance(a, ColumnArg):
            v = row.get(a.name)
            if not v:
                break
            args.append(v)
        else:
            args.append(a.value)
    else:
        try:
            result = functions.BUILTINS[call.name][1](*args)
        except functions.FunctionError as exc:
            if diagnostics is not None:
                diagnostics.append(RowDiagnostic(map_name, rowno, str(exc)))
        except KeyError:
            raise LiftError(f"unknown function {call.name!r}") from None
    if cache is not None:
        cache[id(call)] = result
    return result


def expand_term_map(tm: TermMapDef, row: Row, diagnostics: list | None = None) -> Term | None:
    """Expand one term map against one row; ``None`` means the triple is skipped."""
    return _Expander(tm).expand(row, {}, diagnostics)


def apply_function(call: FunctionCall, row: Row, diagnostics: list | None = None) -> str | None:
    """Evaluate a builtin call; ``None`` on absent input or malformed value."""
    if not functions.is_registered(call.name):
        raise LiftError(f"unknown function {call.name!r}")
    out = _call(call, row, None, diagnostics, "", 0)
    return None if out is None else out["_value"]


class _ListSink:
    def __init__(self, target: list):
        self.target = target

    def enqueue_many(self, triples):
        self.target.extend(triples)


def execute_triples_map(
    tmap: TriplesMapDef,
    rows: Iterable[Row],
    parent_index: Mapping | None = None,
    sink=None,
    *,
    diagnostics: list | None = None,
    build_index: Mapping[str, dict] | None = None,
) -> int:
    """Emit the triples of one map for the given (pre-filtered) rows.

    ``parent_index`` maps ``(parent_map, parent_column)`` to a lookup from a
    key value to the parent subjects carrying it. ``build_index`` maps
    column names of this map to dicts that get filled the same way, for
    children that join against it.
    """
    if isinstance(sink, list):
        sink = _ListSink(sink)
    subject = _Expander(tmap.subject, tmap.name)
    types = [IRI(c, check=False) for c in tmap.classes]
    plain = []
    joins = []
    for po in tmap.predicate_objects:
        pred = IRI(po.predicate, check=False)
        if isinstance(po.object, JoinRef):
            j = po.object
            lookup = (parent_index or {}).get((j.parent_map, j.parent_column))
            if lookup is None:
                raise LiftError(f"{tmap.name}: no parent index for join on {j.parent_map}.{j.parent_column}")
            joins.append((pred, j.child_column, lookup))
        else:
            plain.append((pred, _Expander(po.object, tmap.name, memo=True)))
    interned: dict = {}
    for exp in [subject] + [e for _, e in plain]:
        if exp.function is not None:
            exp.function = interned.setdefault(exp.function, exp.function)
    index_cols = list((build_index or {}).items())
    has_fn = any(e.function is not None for _, e in plain) or tmap.subject.function is not None

    new = tuple.__new__
    emitted = 0
    buf: list = []
    for rowno, row in enumerate(rows, 1):
        cache = {} if has_fn else None
        s = subject.expand(row, cache, diagnostics, rowno)
        if s is None:
            continue
        for col, idx in index_cols:
            key = row.get(col)
            if key:
                subs = idx.get(key)
                if subs is None:
                    idx[key] = {s: None}
                else:
                    subs[s] = None
        for c in types:
            buf.append(new(Triple, (s, RDF_TYPE, c)))
        for pred, exp in plain:
            o = exp.expand(row, cache, diagnostics, rowno)
            if o is not None:
                buf.append(new(Triple, (s, pred, o)))
        for pred, child_col, lookup in joins:
            key = row.get(child_col)
            if key:
                for parent in lookup.get(key, ()):
                    buf.append(new(Triple, (s, pred, parent)))
        if len(buf) >= 4096:
            emitted += len(buf)
            if sink is not None:
                sink.enqueue_many(buf)
            buf = []
    emitted += len(buf)
    if sink is not None and buf:
        sink.enqueue_many(buf)
    return emitted


def filter_rows(rows: list[dict], row_filter) -> list[dict]:
    if row_filter is None:
        return rows
    col, val = row_filter
    return [r for r in rows if r.get(col) == val]


def execute_mapping_doc(
    doc: MappingDoc,
    streams: Mapping[str, bytes | str],
    graph: Graph,
    config: BatchedWriterConfig | None = None,
    *,
    index_factory: Callable[[], dict] = dict,
) -> LiftReport:
    """Run every map of ``doc`` over ``streams`` into ``graph`` via the batched writer."""
    problems = validate_mapping(doc)
    if problems:
        raise LiftError("invalid mapping: " + "; ".join(str(p) for p in problems))
    missing = sorted({m.source.stream for m in doc.maps} - set(streams))
    if missing:
        raise LiftError("missing input stream: " + ", ".join(missing))

    report = LiftReport()
    parsed: dict[str, list[dict]] = {}
    for m in doc.maps:
        name = m.source.stream
        if name not in parsed:
            _, parsed[name] = read_csv(streams[name], name)
            report.rows_read += len(parsed[name])

    # which (map, column) pairs children join against
    needed: dict[str, dict[str, dict]] = {}
    for m in doc.maps:
        for po in m.predicate_objects:
            if isinstance(po.object, JoinRef):
                needed.setdefault(po.object.parent_map, {}).setdefault(po.object.parent_column, index_factory())
    parent_index = {(p, c): idx for p, cols in needed.items() for c, idx in cols.items()}

    writer = BatchedWriter(graph, config or BatchedWriterConfig())
    with gc_paused():
        _run_maps(doc, parsed, parent_index, needed, writer, report)
    for d in report.diagnostics:
        log.debug("lift diagnostic: %s", d)
    return report


def _run_maps(doc, parsed, parent_index, needed, writer, report):
    try:
        for m in execution_order(doc):
            rows = filter_rows(parsed[m.source.stream], m.source.row_filter)
            if m.name in m.join_parents():
                # self-join: the subject index must be complete before any child lookup
                execute_triples_map(m, rows, parent_index, None, build_index=needed.get(m.name))
                own = None
            else:
                own = needed.get(m.name)
            report.triples_emitted += execute_triples_map(
                m, rows, parent_index, writer,
                diagnostics=report.diagnostics,
                build_index=own,
            )
    finally:
        writer.finish()
