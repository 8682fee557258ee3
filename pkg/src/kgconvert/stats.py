"""Run statistics in the column layout of the conversion-statistics table."""
from __future__ import annotations

import json
from pathlib import Path

from .pipeline import StatsReport


def _seconds(ms: float):
    s = round(ms / 1000, 3)
    return int(s) if float(s).is_integer() else s


def _clock(ms: float) -> str:
    total = int(round(ms / 1000))
    return f"{total // 60}:{total % 60:02d}"


def _megabytes(n: int):
    mb = round(n / 1e6, 3)
    return int(mb) if float(mb).is_integer() else mb


def stats_record(report: StatsReport) -> dict:
    return {
        "gtfsTotalRows": report.gtfs_total_rows,
        "liftingTimeS": _seconds(report.lifting_time_ms),
        "loweringTimeS": _seconds(report.lowering_time_ms),
        "conversionTime": _clock(report.conversion_time_ms),
        "numTriples": report.num_triples,
        "outputSizeMB": _megabytes(report.output_size_bytes),
    }


def stats_json(report: StatsReport) -> bytes:
    return (json.dumps(stats_record(report), indent=2) + "\n").encode()


def emit_stats(report: StatsReport, path) -> None:
    Path(path).write_bytes(stats_json(report))
