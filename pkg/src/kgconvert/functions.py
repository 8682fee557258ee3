"""Builtin value-conversion functions callable from lifting mappings."""
from __future__ import annotations

import re


class FunctionError(ValueError):
    pass


_DATE = re.compile(r"^(\d{4})(\d{2})(\d{2})$")
_TIME = re.compile(r"^(\d{1,2}):(\d{2}):(\d{2})$")


def gtfs_date(value: str) -> str:
    """``YYYYMMDD`` -> ``YYYY-MM-DD``."""
    m = _DATE.match(value.strip())
    if not m:
        raise FunctionError(f"gtfs_date: malformed date {value!r}")
    y, mo, d = m.groups()
    if not (1 <= int(mo) <= 12 and 1 <= int(d) <= 31):
        raise FunctionError(f"gtfs_date: out-of-range date {value!r}")
    return f"{y}-{mo}-{d}"


def gtfs_time(value: str) -> tuple[str, int]:
    """Split a GTFS service time (hours may exceed 23) into a clock time and a day offset.

    >>> gtfs_time("25:10:00")
    ('01:10:00', 1)
    """
    m = _TIME.match(value.strip())
    if not m:
        raise FunctionError(f"gtfs_time: malformed time {value!r}")
    h, mi, s = (int(g) for g in m.groups())
    if mi > 59 or s > 59:
        raise FunctionError(f"gtfs_time: out-of-range time {value!r}")
    return f"{h % 24:02d}:{mi:02d}:{s:02d}", h // 24


def trim(value: str) -> str:
    return value.strip()


def concat(*values: str) -> str:
    return "".join(values)


def _time_columns(value):
    clock, offset = gtfs_time(value)
    return {"_value": clock, "_time": clock, "_dayOffset": str(offset)}


# name -> (arity or None for variadic, callable returning pseudo-columns)
BUILTINS = {
    "gtfs_date": (1, lambda v: {"_value": gtfs_date(v)}),
    "gtfs_time": (1, _time_columns),
    "trim": (1, lambda v: {"_value": trim(v)}),
    "concat": (None, lambda *vs: {"_value": concat(*vs)}),
}


def is_registered(name: str) -> bool:
    return name in BUILTINS
