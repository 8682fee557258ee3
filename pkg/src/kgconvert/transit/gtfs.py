"""GTFS feed checks."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping

REQUIRED_COLUMNS = {
    "agency.txt": ("agency_name", "agency_url", "agency_timezone"),
    "stops.txt": ("stop_id",),
    "routes.txt": ("route_id", "route_type"),
    "trips.txt": ("route_id", "service_id", "trip_id"),
    "stop_times.txt": ("trip_id", "arrival_time", "departure_time", "stop_id", "stop_sequence"),
}
OPTIONAL_COLUMNS = {
    "calendar.txt": ("service_id", "monday", "tuesday", "wednesday", "thursday", "friday",
                     "saturday", "sunday", "start_date", "end_date"),
}
TABLES = tuple(REQUIRED_COLUMNS) + tuple(OPTIONAL_COLUMNS)


class GtfsError(ValueError):
    def __init__(self, missing: list[str]):
        self.missing = missing
        super().__init__("missing: " + ", ".join(missing))


@dataclass(frozen=True)
class GtfsFeed:
    tables: Mapping[str, bytes]

    def streams(self) -> dict[str, bytes]:
        return dict(self.tables)


def header_of(data: bytes) -> list[str]:
    text = data.decode("utf-8-sig", errors="replace")
    first = next(csv.reader(io.StringIO(text)), [])
    return [c.strip() for c in first]


def read_gtfs_feed(streams: Mapping[str, bytes]) -> GtfsFeed:
    """Check required files and columns; every problem is listed in one error."""
    missing = []
    for name, cols in {**REQUIRED_COLUMNS, **OPTIONAL_COLUMNS}.items():
        if name not in streams:
            if name in REQUIRED_COLUMNS:
                missing.append(name)
            continue
        header = set(header_of(streams[name]))
        missing.extend(f"{name}:{c}" for c in cols if c not in header)
    if missing:
        raise GtfsError(missing)
    return GtfsFeed({n: streams[n] for n in TABLES if n in streams})
