"""RDFS-subset forward chaining over the pipeline graph."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .graph import Graph
from .terms import (
    RDF_TYPE,
    RDFS_DOMAIN,
    RDFS_RANGE,
    RDFS_SUBCLASSOF,
    RDFS_SUBPROPERTYOF,
    IRI,
    Literal,
    Triple,
)


@dataclass
class OntologyAxioms:
    sub_class_of: set = field(default_factory=set)
    sub_property_of: set = field(default_factory=set)
    domain: set = field(default_factory=set)
    range: set = field(default_factory=set)

    def __len__(self):
        return len(self.sub_class_of) + len(self.sub_property_of) + len(self.domain) + len(self.range)


def extract_axioms(graphs: Iterable[Graph]) -> OntologyAxioms:
    ax = OntologyAxioms()
    targets = {
        RDFS_SUBCLASSOF: ax.sub_class_of,
        RDFS_SUBPROPERTYOF: ax.sub_property_of,
        RDFS_DOMAIN: ax.domain,
        RDFS_RANGE: ax.range,
    }
    for g in graphs:
        for pred, bucket in targets.items():
            for s, _, o in g.match(None, pred, None):
                if s.__class__ is IRI and o.__class__ is IRI:
                    bucket.add((s, o))
    return ax


def _transitive(pairs: set) -> dict:
    """Map each node to everything reachable from it (excluding itself unless on a cycle)."""
    succ: dict = {}
    for a, b in pairs:
        succ.setdefault(a, set()).add(b)
    closure = {}
    for start in succ:
        seen = set()
        stack = list(succ[start])
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(succ.get(n, ()))
        closure[start] = seen
    return closure


def rdfs_closure(graph: Graph, axioms: OntologyAxioms) -> int:
    """Add every entailed triple to ``graph``; returns the number added.

    Schema axioms are closed transitively up front, which turns each
    instance rule into a single-premise rule, so a worklist over newly
    derived triples (semi-naive evaluation) reaches the fixpoint.
    """
    supers = _transitive(axioms.sub_class_of)
    superprops = _transitive(axioms.sub_property_of)
    domains: dict = {}
    for p, c in axioms.domain:
        domains.setdefault(p, set()).add(c)
    ranges: dict = {}
    for p, c in axioms.range:
        ranges.setdefault(p, set()).add(c)

    def derive(t):
        s, p, o = t
        if p == RDF_TYPE:
            for c in supers.get(o, ()):
                yield Triple(s, RDF_TYPE, c)
        for q in superprops.get(p, ()):
            yield Triple(s, q, o)
        for c in domains.get(p, ()):
            yield Triple(s, RDF_TYPE, c)
        if o.__class__ is not Literal:
            for c in ranges.get(p, ()):
                yield Triple(o, RDF_TYPE, c)

    added = 0
    with graph.lock.write():
        delta = list(graph.match_unlocked())
        while delta:
            fresh = []
            for t in delta:
                for new in derive(t):
                    if new not in graph:
                        graph._insert_unlocked((new,))
                        fresh.append(new)
            added += len(fresh)
            delta = fresh
    return added
