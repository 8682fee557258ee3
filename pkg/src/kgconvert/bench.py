"""Scaling and join-avoidance benchmark over synthetic GTFS feeds."""
from __future__ import annotations

import time

from .graph import Graph
from .lift import execute_mapping_doc
from .mapping import load_mapping
from .ntriples import write_ntriples
from .pipeline import prepare_gtfs_feed, load_pipeline_config, run_pipeline, zip_split
from .schemas import BenchReport, BenchRow
from .transit import MAPPINGS_DIR, pipeline_path
from .transit.synthetic import generate_synthetic_gtfs

JOIN_STRATEGIES = ("hash", "nested")


class BenchError(RuntimeError):
    pass


class NestedLoopIndex(dict):
    """Join lookup that scans every parent key, the cost model of an unindexed join."""

    def get(self, key, default=None):
        for k, subjects in self.items():
            if k == key:
                return subjects
        return default


def _timed_lift(doc, streams, config, index_factory) -> tuple[float, bytes]:
    g = Graph()
    start = time.perf_counter()
    execute_mapping_doc(doc, streams, g, config, index_factory=index_factory)
    elapsed = (time.perf_counter() - start) * 1000
    return elapsed, write_ntriples(g)


def compare_variants(streams, config=None, join_strategy: str = "hash", repeats: int = 1) -> tuple[float, float]:
    """Best-of-``repeats`` lift times (join variant, IRI-pattern variant); fails if their dumps differ."""
    if join_strategy not in JOIN_STRATEGIES:
        raise BenchError(f"unknown join strategy {join_strategy!r}")
    join_doc = load_mapping(MAPPINGS_DIR / "gtfs-join.cml")
    iri_doc = load_mapping(MAPPINGS_DIR / "gtfs.cml")
    factory = NestedLoopIndex if join_strategy == "nested" else dict
    join_ms = iri_ms = float("inf")
    for _ in range(max(1, repeats)):
        # interleaved so both variants see the same machine conditions
        t, join_dump = _timed_lift(join_doc, streams, config, factory)
        join_ms = min(join_ms, t)
        t, iri_dump = _timed_lift(iri_doc, streams, config, dict)
        iri_ms = min(iri_ms, t)
        if join_dump != iri_dump:
            raise BenchError("join and IRI-pattern variants produced different graphs")
    return join_ms, iri_ms


def run_bench(
    scales,
    seed: int = 0,
    pipeline=None,
    join_strategy: str = "hash",
    repeats: int = 1,
) -> BenchReport:
    scales = list(scales)
    if not scales or any(s < 1 for s in scales) or any(a >= b for a, b in zip(scales, scales[1:])):
        raise BenchError("scales must be positive and strictly increasing")
    cfg, base = load_pipeline_config(pipeline or pipeline_path("madrid"))
    rows = []
    for scale in scales:
        feed = generate_synthetic_gtfs(scale, seed)
        try:
            result = run_pipeline(cfg, {"feed.zip": feed}, None, base_dir=base)
            streams = prepare_gtfs_feed(zip_split(feed))
            join_ms, iri_ms = compare_variants(streams, cfg.writer_config(), join_strategy, repeats)
        except Exception as exc:
            raise BenchError(f"scale {scale}: {exc}") from exc
        st = result.stats
        rows.append(BenchRow(
            scale=scale,
            gtfs_total_rows=st.gtfs_total_rows,
            lifting_time_ms=st.lifting_time_ms,
            lowering_time_ms=st.lowering_time_ms,
            conversion_time_ms=st.conversion_time_ms,
            num_triples=st.num_triples,
            output_size_bytes=st.output_size_bytes,
            join_variant_time_ms=join_ms,
            iri_pattern_variant_time_ms=iri_ms,
        ))
    return BenchReport(seed=seed, join_strategy=join_strategy, rows=rows)
