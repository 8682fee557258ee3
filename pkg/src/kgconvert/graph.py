"""Indexed in-memory triple store with set semantics."""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Iterable, Iterator

from .terms import BNode, Term, Triple


class RWLock:
    """Many concurrent readers or a single writer.

    Reader-preferring; a thread already holding a read lock may re-enter.
    """

    def __init__(self):
        self._cond = threading.Condition(threading.Lock())
        self._readers = 0
        self._writer = False

    @contextmanager
    def read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if not self._readers:
                    self._cond.notify_all()

    @contextmanager
    def write(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


class Graph:
    """A set of triples with subject-, predicate- and object-keyed indices.

    ``spo[s][p]``, ``pos[p][o]`` and ``osp[o][s]`` each hold a set of the
    remaining term, so any pattern with at least one bound slot is answered
    from a single dictionary walk.
    """

    def __init__(self, triples: Iterable[Triple] = ()):
        self._spo: dict = {}
        self._pos: dict = {}
        self._osp: dict = {}
        self._pcount: dict = {}
        self._size = 0
        self._bnode_counter = 0
        self.lock = RWLock()
        if triples:
            self.insert(triples)

    def __len__(self):
        return self._size

    def __iter__(self) -> Iterator[Triple]:
        return iter(self.triples())

    def __contains__(self, triple) -> bool:
        s, p, o = triple
        return o in self._spo.get(s, {}).get(p, ())

    def triples(self) -> list[Triple]:
        with self.lock.read():
            return [
                Triple(s, p, o)
                for s, pmap in self._spo.items()
                for p, objs in pmap.items()
                for o in objs
            ]

    def fresh_bnode(self) -> BNode:
        with self.lock.write():
            self._bnode_counter += 1
            return BNode(f"b{self._bnode_counter}")

    def insert(self, triples: Iterable[Triple]) -> int:
        """Add triples, returning how many were not already present."""
        with self.lock.write():
            return self._insert_unlocked(triples)

    def _insert_unlocked(self, triples: Iterable[Triple]) -> int:
        spo, pos, osp, pcount = self._spo, self._pos, self._osp, self._pcount
        added = 0
        for s, p, o in triples:
            pmap = spo.get(s)
            if pmap is None:
                pmap = spo[s] = {}
            objs = pmap.get(p)
            if objs is None:
                objs = pmap[p] = set()
            elif o in objs:
                continue
            objs.add(o)
            omap = pos.get(p)
            if omap is None:
                omap = pos[p] = {}
            subs = omap.get(o)
            if subs is None:
                omap[o] = {s}
            else:
                subs.add(s)
            smap = osp.get(o)
            if smap is None:
                smap = osp[o] = {}
            preds = smap.get(s)
            if preds is None:
                smap[s] = {p}
            else:
                preds.add(p)
            pcount[p] = pcount.get(p, 0) + 1
            added += 1
        self._size += added
        return added

    # the sink interface used by the batched writer
    add_batch = insert

    def match(self, s: Term | None = None, p: Term | None = None, o: Term | None = None) -> list[Triple]:
        with self.lock.read():
            return list(self.match_unlocked(s, p, o))

    def match_unlocked(self, s=None, p=None, o=None) -> Iterator[Triple]:
        """Yield matching triples; caller must hold the read lock."""
        if s is not None:
            pmap = self._spo.get(s)
            if not pmap:
                return
            if p is not None:
                objs = pmap.get(p)
                if not objs:
                    return
                if o is not None:
                    if o in objs:
                        yield Triple(s, p, o)
                    return
                for obj in objs:
                    yield Triple(s, p, obj)
                return
            if o is not None:
                preds = self._osp.get(o, {}).get(s)
                if preds:
                    for pred in preds:
                        yield Triple(s, pred, o)
                return
            for pred, objs in pmap.items():
                for obj in objs:
                    yield Triple(s, pred, obj)
            return
        if p is not None:
            omap = self._pos.get(p)
            if not omap:
                return
            if o is not None:
                for sub in omap.get(o, ()):
                    yield Triple(sub, p, o)
                return
            for obj, subs in omap.items():
                for sub in subs:
                    yield Triple(sub, p, obj)
            return
        if o is not None:
            for sub, preds in self._osp.get(o, {}).items():
                for pred in preds:
                    yield Triple(sub, pred, o)
            return
        for sub, pmap in self._spo.items():
            for pred, objs in pmap.items():
                for obj in objs:
                    yield Triple(sub, pred, obj)

    # raw index access for the query evaluator (read lock held by caller)
    def objects(self, s, p):
        return self._spo.get(s, {}).get(p, ())

    def subjects(self, p, o):
        return self._pos.get(p, {}).get(o, ())

    def predicates(self, s, o):
        return self._osp.get(o, {}).get(s, ())

    def count(self, s=None, p=None, o=None) -> int:
        """Cheap cardinality estimate used to order join patterns."""
        if s is not None and p is not None:
            return len(self._spo.get(s, {}).get(p, ()))
        if p is not None and o is not None:
            return len(self._pos.get(p, {}).get(o, ()))
        if s is not None and o is not None:
            return len(self._osp.get(o, {}).get(s, ()))
        if s is not None:
            return sum(len(v) for v in self._spo.get(s, {}).values())
        if p is not None:
            return self._pcount.get(p, 0)
        if o is not None:
            # distinct subjects: a lower bound that avoids walking big objects
            return len(self._osp.get(o, ()))
        return self._size

    def index_sizes(self) -> tuple[int, int, int]:
        with self.lock.read():
            return (
                sum(len(objs) for pmap in self._spo.values() for objs in pmap.values()),
                sum(len(subs) for omap in self._pos.values() for subs in omap.values()),
                sum(len(preds) for smap in self._osp.values() for preds in smap.values()),
            )

    def copy(self) -> "Graph":
        return Graph(self.triples())

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return len(self) == len(other) and set(self.triples()) == set(other.triples())

    __hash__ = None


def graph_insert(graph: Graph, triples: Iterable[Triple]) -> int:
    return graph.insert(triples)


def graph_match(graph: Graph, pattern: tuple) -> list[Triple]:
    s, p, o = pattern
    return graph.match(s, p, o)
