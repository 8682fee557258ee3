"""Structural checks for the NeTEx subset produced by the bundled templates."""
from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    location: str = ""

    def __str__(self):
        where = f" at {self.location}" if self.location else ""
        return f"{self.rule}: {self.message}{where}"


@dataclass
class NetexSubsetReport:
    well_formed: bool
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _label(el) -> str:
    ident = el.get("id")
    return f"{_local(el.tag)}[@id={ident!r}]" if ident is not None else _local(el.tag)


def validate_netex_subset(xml: bytes) -> NetexSubsetReport:
    try:
        root = ET.fromstring(xml)
    except ET.ParseError as exc:
        line, col = exc.position
        return NetexSubsetReport(False, [Violation("R1", f"not well-formed: {exc}", f"line {line}, column {col}")])
    out: list[Violation] = []
    elements = list(root.iter())

    if _local(root.tag) != "PublicationDelivery":
        out.append(Violation("R2", f"root element is {_local(root.tag)}, expected PublicationDelivery"))
    children = {_local(c.tag) for c in root}
    for name in ("PublicationTimestamp", "ParticipantRef", "dataObjects"):
        if name not in children:
            out.append(Violation("R2", f"PublicationDelivery lacks {name}"))

    composites = [e for e in elements if _local(e.tag) == "CompositeFrame"]
    if not composites:
        out.append(Violation("R3", "no CompositeFrame"))
    for cf in composites:
        inner = {_local(e.tag) for e in cf.iter()}
        for frame in ("ResourceFrame", "ServiceFrame", "TimetableFrame"):
            if frame not in inner:
                out.append(Violation("R3", f"CompositeFrame lacks {frame}", _label(cf)))

    seen: dict[str, str] = {}
    for e in elements:
        ident = e.get("id")
        if ident is None:
            continue
        if not ident.strip():
            out.append(Violation("R4", "empty id", _local(e.tag)))
        elif ident in seen:
            out.append(Violation("R4", f"duplicate id {ident!r}", _local(e.tag)))
        else:
            seen[ident] = _local(e.tag)

    stops = {e.get("id") for e in elements if _local(e.tag) == "ScheduledStopPoint"}
    for e in elements:
        if _local(e.tag) == "ScheduledStopPointRef" and e.get("ref") not in stops:
            out.append(Violation("R5", f"unresolved ScheduledStopPointRef {e.get('ref')!r}"))

    for sj in elements:
        if _local(sj.tag) != "ServiceJourney":
            continue
        orders = [p.get("order") for p in sj.iter() if _local(p.tag) == "TimetabledPassingTime"]
        if len(orders) < 2:
            out.append(Violation("R6", f"{len(orders)} passing time(s), need at least 2", _label(sj)))
            continue
        try:
            values = [int(o) for o in orders]
        except (TypeError, ValueError):
            out.append(Violation("R6", "passing time without an integer order", _label(sj)))
            continue
        if any(a >= b for a, b in zip(values, values[1:])):
            out.append(Violation("R6", "passing-time order not strictly increasing", _label(sj)))
    return NetexSubsetReport(True, out)


def count_elements(xml: bytes) -> dict[str, int]:
    """Element counts by local name."""
    counts: dict[str, int] = {}
    for e in ET.fromstring(xml).iter():
        name = _local(e.tag)
        counts[name] = counts.get(name, 0) + 1
    return counts
