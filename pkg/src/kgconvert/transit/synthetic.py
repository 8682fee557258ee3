"""Deterministic synthetic GTFS feeds whose size grows linearly with ``scale``."""
from __future__ import annotations

import csv
import io
import random
import zipfile

STOPS_PER_TRIP = 15
ZIP_TIME = (1980, 1, 1, 0, 0, 0)


def _fmt_time(seconds: int) -> str:
    h, rem = divmod(seconds, 3600)
    return f"{h:02d}:{rem // 60:02d}:{rem % 60:02d}"


def _csv(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode("utf-8")


def synthetic_tables(scale: int, seed: int = 0) -> dict[str, bytes]:
    if scale < 1:
        raise ValueError("scale must be >= 1")
    rng = random.Random(seed)
    agencies = [("A1", "Synthetic Metro", "https://metro.example.org", "Europe/Rome"),
                ("A2", "Synthetic Bus", "https://bus.example.org", "Europe/Rome")]
    stops = [
        (f"S{i}", f"Stop {i}", f"{45.40 + rng.random() * 0.2:.6f}", f"{9.10 + rng.random() * 0.2:.6f}")
        for i in range(1, 10 * scale + 1)
    ]
    routes = [
        (f"R{i}", agencies[i % 2][0], str(i), f"Route {i}", rng.choice(("0", "1", "3")))
        for i in range(1, 2 * scale + 1)
    ]
    calendar = [("WK", 1, 1, 1, 1, 1, 0, 0, "20200101", "20201231"),
                ("WE", 0, 0, 0, 0, 0, 1, 1, "20200101", "20201231")]
    trips = []
    stop_times = []
    for i in range(1, 20 * scale + 1):
        trip_id = f"T{i}"
        trips.append((routes[(i - 1) % len(routes)][0], rng.choice(("WK", "WE")), trip_id, f"Headsign {i}"))
        # starts between 05:00 and 23:40; late trips run past midnight
        t = rng.randrange(5 * 3600, 23 * 3600 + 40 * 60, 60)
        for seq in range(1, STOPS_PER_TRIP + 1):
            dwell = rng.choice((0, 0, 30, 60))
            stop_times.append((trip_id, _fmt_time(t), _fmt_time(t + dwell), rng.choice(stops)[0], str(seq)))
            t += dwell + rng.randrange(60, 240, 30)
    return {
        "agency.txt": _csv(("agency_id", "agency_name", "agency_url", "agency_timezone"), agencies),
        "stops.txt": _csv(("stop_id", "stop_name", "stop_lat", "stop_lon"), stops),
        "routes.txt": _csv(("route_id", "agency_id", "route_short_name", "route_long_name", "route_type"), routes),
        "calendar.txt": _csv(("service_id", "monday", "tuesday", "wednesday", "thursday", "friday",
                              "saturday", "sunday", "start_date", "end_date"), calendar),
        "trips.txt": _csv(("route_id", "service_id", "trip_id", "trip_headsign"), trips),
        "stop_times.txt": _csv(("trip_id", "arrival_time", "departure_time", "stop_id", "stop_sequence"), stop_times),
    }


def zip_tables(tables: dict[str, bytes]) -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for name, data in tables.items():
            info = zipfile.ZipInfo(name, ZIP_TIME)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, data)
    return buf.getvalue()


def generate_synthetic_gtfs(scale: int, seed: int = 0) -> bytes:
    """Zip of a valid GTFS feed with 2 agencies, 10s stops, 2s routes, 20s trips and 300s stop times."""
    return zip_tables(synthetic_tables(scale, seed))
