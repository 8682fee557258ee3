"""Evaluation of parsed queries against a :class:`~kgconvert.graph.Graph`."""
from __future__ import annotations

from ..graph import Graph
from ..terms import IRI, BNode, Literal, Term
from .expr import numeric
from .parser import GroupPattern, Query, Var

Solution = dict  # variable name -> Term


def term_sort_key(term: Term | None) -> tuple:
    """Total order: unbound < blank < IRI < literal.

    Numeric literals sort by value and precede other literals, which sort
    by lexical form; datatype and language break remaining ties.
    """
    if term is None:
        return (-1,)
    cls = term.__class__
    if cls is BNode:
        return (0, term.label)
    if cls is IRI:
        return (1, term.value)
    n = numeric(term)
    dt = term.datatype.value if term.datatype is not None else ""
    if n is not None:
        return (2, 0, n, term.lexical, dt, "")
    return (2, 1, term.lexical, dt, term.language or "")


def compare_terms(a: Term | None, b: Term | None) -> int:
    ka, kb = term_sort_key(a), term_sort_key(b)
    return (ka > kb) - (ka < kb)


def _pattern_cost(graph: Graph, pattern, bound: set) -> tuple:
    consts = []
    nbound = 0
    shares = False
    for slot in pattern:
        if isinstance(slot, Var):
            if slot.name in bound:
                nbound += 1
                shares = True
            consts.append(None)
        else:
            nbound += 1
            consts.append(slot)
    # once something is bound, patterns sharing a variable come first to avoid cross products
    disconnected = bool(bound) and not shares
    return (disconnected, -nbound, graph.count(*consts))


def _order_patterns(graph: Graph, patterns: list, bound: set) -> list:
    remaining = list(patterns)
    ordered = []
    bound = set(bound)
    while remaining:
        best = min(remaining, key=lambda p: _pattern_cost(graph, p, bound))
        remaining.remove(best)
        ordered.append(best)
        for slot in best:
            if isinstance(slot, Var):
                bound.add(slot.name)
    return ordered


def _extend(graph: Graph, sols: list, pattern) -> list:
    s, p, o = pattern
    sv = s.name if isinstance(s, Var) else None
    pv = p.name if isinstance(p, Var) else None
    ov = o.name if isinstance(o, Var) else None
    out = []
    append = out.append
    for sol in sols:
        sb = sol.get(sv) if sv is not None else s
        pb = sol.get(pv) if pv is not None else p
        ob = sol.get(ov) if ov is not None else o
        if pb is not None and pb.__class__ is not IRI:
            continue
        if sb is not None and pb is not None:
            if ob is not None:
                if ob in graph.objects(sb, pb):
                    append(sol)
                continue
            for obj in graph.objects(sb, pb):
                new = sol.copy()
                new[ov] = obj
                append(new)
            continue
        if pb is not None and ob is not None:
            for sub in graph.subjects(pb, ob):
                new = sol.copy()
                new[sv] = sub
                append(new)
            continue
        # general case: repeated variables inside one pattern need a consistency check
        for ts, tp, to in graph.match_unlocked(sb, pb, ob):
            new = sol.copy()
            ok = True
            for var, val in ((sv, ts), (pv, tp), (ov, to)):
                if var is None:
                    continue
                cur = new.get(var)
                if cur is None:
                    new[var] = val
                elif cur != val:
                    ok = False
                    break
            if ok:
                append(new)
    return out


def _bgp(graph: Graph, patterns: list, initial: list) -> list:
    if not initial:
        return []
    bound = set(initial[0]) if len(initial) == 1 else set()
    sols = initial
    for pattern in _order_patterns(graph, patterns, bound):
        sols = _extend(graph, sols, pattern)
        if not sols:
            break
    return sols


def evaluate_bgp(patterns: list, graph: Graph, initial: list | None = None) -> list[Solution]:
    """All solutions of a basic graph pattern (multiset semantics)."""
    with graph.lock.read():
        return _bgp(graph, patterns, initial if initial is not None else [{}])


def _left_join(graph: Graph, sols: list, opt: GroupPattern) -> list:
    out = []
    for sol in sols:
        matched = _bgp(graph, opt.triples, [sol])
        if opt.filters:
            matched = [m for m in matched if all(f.test(m) for f in opt.filters)]
        if matched:
            out.extend(matched)
        else:
            out.append(sol)
    return out


def _evaluate_group(graph: Graph, group: GroupPattern) -> list:
    sols = _bgp(graph, group.triples, [{}])
    for opt in group.optionals:
        sols = _left_join(graph, sols, opt)
    for f in group.filters:
        sols = [s for s in sols if f.test(s)]
    return sols


def _canonical_key(names: list):
    def key(sol):
        return tuple(term_sort_key(sol.get(n)) for n in names)
    return key


def evaluate_query(q: Query, graph: Graph) -> list[Solution]:
    with graph.lock.read():
        sols = _evaluate_group(graph, q.pattern)
    all_vars = q.pattern.variables()
    if q.order_by:
        # canonical pre-sort makes ties independent of index iteration order
        sols.sort(key=_canonical_key(all_vars))
        for name, ascending in reversed(q.order_by):
            sols.sort(key=lambda s, n=name: term_sort_key(s.get(n)), reverse=not ascending)
    names = q.variables()
    projected = []
    for s in sols:
        projected.append({n: s[n] for n in names if n in s})
    if q.distinct:
        seen = set()
        unique = []
        for s in projected:
            k = frozenset(s.items())
            if k not in seen:
                seen.add(k)
                unique.append(s)
        projected = unique
    if q.limit is not None:
        projected = projected[: q.limit]
    return projected
