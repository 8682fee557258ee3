import io
import json
import os
import zipfile

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgconvert.graph import Graph
from kgconvert.ntriples import load_ntriples, parse_ntriples, write_ntriples
from kgconvert.pipeline import (
    BlockError,
    ConfigError,
    PipelineConfig,
    data_enrich,
    dump_graph,
    gtfs_preprocess,
    load_pipeline_config,
    parse_pipeline_config,
    run_pipeline,
    serialize_pipeline_config,
    zip_split,
)
from kgconvert.terms import IRI, Literal, Triple
from kgconvert.transit import FIXTURES_DIR, PIPELINES_DIR, pipeline_path
from kgconvert.transit.netex import count_elements


def make_zip(entries: dict) -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        for name, data in entries.items():
            if name.endswith("/"):
                zf.writestr(zipfile.ZipInfo(name), b"")
            else:
                zf.writestr(name, data)
    return buf.getvalue()


def config(blocks, **extra):
    return json.dumps({"name": "t", "store": {"batchSize": 10, "writers": 1}, "blocks": blocks, **extra})


# -- configuration --------------------------------------------------------------

def test_bundled_pipelines_parse():
    cfg, base = load_pipeline_config(pipeline_path("madrid"))
    assert [b.kind for b in cfg.blocks] == [
        "attach_graph", "zip_split", "gtfs_preprocess", "lift", "lower", "dump_graph", "write_output"
    ]
    assert base == PIPELINES_DIR.resolve()
    for name in ("milano", "genova"):
        load_pipeline_config(pipeline_path(name))


@pytest.mark.parametrize(
    "blocks, message",
    [
        ([{"kind": "lift", "mapping": "m.cml"}], "attach_graph must be first"),
        ([{"kind": "attach_graph"}, {"kind": "parallel", "branches": [[{"kind": "zip_split"}]]}],
         "parallel requires ≥2 branches"),
        ([{"kind": "attach_graph"}, {"kind": "teleport"}], "/blocks/1: unknown block kind 'teleport'"),
        ([{"kind": "attach_graph"}, {"kind": "lift"}], "/blocks/1/mapping"),
        ([{"kind": "attach_graph"}, {"kind": "lift", "mapping": "m", "speed": 3}], "/blocks/1/speed"),
        ([{"kind": "attach_graph"}, {"kind": "lower", "template": "t", "output": "o", "minify": "maybe"}],
         "/blocks/1/minify"),
        ([{"kind": "attach_graph"}, {"kind": "lower", "template": "t", "output": "o"},
          {"kind": "lift", "mapping": "m"}], "/blocks/2: lift after lower"),
        ([{"kind": "attach_graph"}, {"kind": "parallel", "branches": [[{"kind": "zip_split"}],
                                                                      [{"kind": "dump_graph", "path": "g"}]]}],
         "/blocks/1/branches/1/0: dump_graph is not allowed"),
        ([{"kind": "attach_graph"}, {"kind": "attach_graph"}], "/blocks/1: attach_graph must appear exactly once"),
    ],
)
def test_config_errors(blocks, message):
    with pytest.raises(ConfigError) as exc:
        parse_pipeline_config(config(blocks))
    assert any(message in e for e in exc.value.errors), exc.value.errors


def test_store_validation():
    with pytest.raises(ConfigError, match="/store/batchSize"):
        parse_pipeline_config(json.dumps({"name": "t", "store": {"batchSize": 0, "writers": 1},
                                          "blocks": [{"kind": "attach_graph"}]}))


def test_bad_json_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="invalid JSON"):
        parse_pipeline_config("{")
    with pytest.raises(ConfigError, match="cannot read"):
        load_pipeline_config(tmp_path / "nope.json")


leaf_blocks = st.one_of(
    st.builds(lambda: {"kind": "zip_split"}),
    st.builds(lambda fs: {"kind": "gtfs_preprocess", "filters": fs},
              st.lists(st.fixed_dictionaries({"file": st.text(max_size=5), "column": st.text(max_size=5)}), max_size=2)),
    st.builds(lambda m: {"kind": "lift", "mapping": m}, st.text(min_size=1, max_size=8)),
)
tail_blocks = st.one_of(
    st.builds(lambda s: {"kind": "data_enrich", "sources": s}, st.lists(st.text(max_size=5), max_size=2)),
    st.builds(lambda s: {"kind": "infer_enrich", "ontologies": s}, st.lists(st.text(max_size=5), max_size=2)),
    st.builds(lambda p: {"kind": "dump_graph", "path": p}, st.text(min_size=1, max_size=5)),
    st.builds(lambda a, b: {"kind": "write_output", "from": a, "path": b}, st.text(max_size=5), st.text(max_size=5)),
)


@st.composite
def pipeline_docs(draw):
    head = draw(st.lists(st.one_of(
        leaf_blocks,
        st.lists(st.lists(leaf_blocks, max_size=3), min_size=2, max_size=3).map(
            lambda bs: {"kind": "parallel", "branches": bs}),
    ), max_size=4))
    lower = draw(st.lists(st.builds(
        lambda t, o, m, p: {"kind": "lower", "template": t, "output": o, "minify": m, "params": p},
        st.text(min_size=1, max_size=5), st.text(min_size=1, max_size=5), st.booleans(),
        st.dictionaries(st.text(max_size=3), st.text(max_size=3), max_size=2)), max_size=1))
    tail = draw(st.lists(tail_blocks, max_size=3))
    store = {"batchSize": draw(st.integers(1, 5000)), "writers": draw(st.integers(1, 8))}
    return {"name": draw(st.text(max_size=8)), "store": store,
            "blocks": [{"kind": "attach_graph"}] + head + lower + tail}


@settings(max_examples=100)
@given(pipeline_docs())
def test_config_round_trip(doc):
    cfg = parse_pipeline_config(json.dumps(doc))
    again = parse_pipeline_config(serialize_pipeline_config(cfg))
    assert again == cfg
    assert json.loads(serialize_pipeline_config(again)) == json.loads(serialize_pipeline_config(cfg))


def test_defaults_are_filled():
    cfg = parse_pipeline_config(json.dumps({"name": "x", "blocks": [{"kind": "attach_graph"}]}))
    assert isinstance(cfg, PipelineConfig)
    assert cfg.store.batch_size >= 1 and cfg.store.writers >= 1


# -- block helpers --------------------------------------------------------------

def test_zip_split_examples():
    assert set(zip_split(make_zip({"stops.txt": b"a", "routes.txt": b"b"}))) == {"stops.txt", "routes.txt"}
    assert zip_split(make_zip({"dir/": b"", "dir/stops.txt": b"x"})) == {"stops.txt": b"x"}
    data = make_zip({"stops.txt": b"a" * 100})
    with pytest.raises(ValueError, match="corrupt"):
        zip_split(data[: len(data) // 2])
    with pytest.raises(ValueError, match="corrupt"):
        zip_split(b"not a zip")
    warnings = []
    assert zip_split(make_zip({}), warnings) == {}
    assert warnings == ["zip archive holds no files"]


def test_preprocess_strips_bom_and_splits():
    routes = b"route_id,route_type\nR1,3\nR2,3\nR3,1\n"
    out = gtfs_preprocess({"stops.txt": b"\xef\xbb\xbfstop_id\nS1\n", "routes.txt": routes},
                          [{"file": "routes.txt", "column": "route_type"}])
    assert out["stops.txt"].startswith(b"stop_id")
    assert out["routes.txt"] == routes
    assert out["routes.txt#3"] == b"route_id,route_type\nR1,3\nR2,3\n"
    assert out["routes.txt#1"] == b"route_id,route_type\nR3,1\n"


def test_preprocess_errors():
    with pytest.raises(ValueError, match="invalid UTF-8 in routes.txt"):
        gtfs_preprocess({"routes.txt": b"route_id\nR\xff1\n"})
    with pytest.raises(ValueError, match="not in the header"):
        gtfs_preprocess({"routes.txt": b"route_id\nR1\n"}, [{"file": "routes.txt", "column": "route_type"}])


@settings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from(["R1", "R2", "R,3"]), st.sampled_from(["0", "3", "a b"])), max_size=10))
def test_split_partitions_rows(rows):
    import csv

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["route_id", "route_type"])
    w.writerows(rows)
    out = gtfs_preprocess({"routes.txt": buf.getvalue().encode()}, [{"file": "routes.txt", "column": "route_type"}])
    parts = {k: v for k, v in out.items() if "#" in k}
    assert set(parts) == {"routes.txt#" + t for _, t in rows}
    recovered = []
    for name, data in parts.items():
        recs = list(csv.reader(io.StringIO(data.decode())))
        assert recs[0] == ["route_id", "route_type"]
        assert all(r[1] == name.split("#", 1)[1] for r in recs[1:])
        recovered += [tuple(r) for r in recs[1:]]
    assert sorted(recovered) == sorted(rows)


def test_data_enrich(tmp_path):
    g = Graph([Triple(IRI("http://ex/a"), IRI("http://ex/p"), Literal("1"))])
    src = tmp_path / "extra.nt"
    src.write_text('<http://ex/a> <http://ex/p> "1" .\n<http://ex/b> <http://ex/p> "2" .\n<http://ex/c> <http://ex/p> "3" .\n')
    assert data_enrich(g, [src]) == 2
    empty = tmp_path / "empty.nt"
    empty.write_text("")
    assert data_enrich(g, [empty]) == 0
    bad = tmp_path / "bad.nt"
    bad.write_text("<http://ex/a> <http://ex/p> .\n")
    with pytest.raises(Exception, match="bad.nt:1"):
        data_enrich(g, [bad])


def test_facilities_fixture_enrich_delta():
    text = (FIXTURES_DIR / "facilities-extra.nt").read_text()
    g = Graph()
    from kgconvert.lift import execute_mapping_doc
    from kgconvert.mapping import load_mapping
    from kgconvert.transit import MAPPINGS_DIR

    streams = zip_split((FIXTURES_DIR / "mini-milano.zip").read_bytes())
    execute_mapping_doc(load_mapping(MAPPINGS_DIR / "facilities.cml"), streams, g)
    lines = {ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")}
    already = {ln for ln in lines if parse_ntriples(ln)[0] in g}
    assert data_enrich(g, [FIXTURES_DIR / "facilities-extra.nt"]) == len(lines) - len(already)


def test_dump_graph(tmp_path):
    assert dump_graph(Graph(), tmp_path / "empty.nt") == 0
    assert (tmp_path / "empty.nt").read_bytes() == b""
    g = Graph([Triple(IRI("http://ex/a"), IRI("http://ex/p"), Literal("é"))])
    n = dump_graph(g, tmp_path / "g.nt")
    assert n == (tmp_path / "g.nt").stat().st_size
    assert load_ntriples(tmp_path / "g.nt") == g


def test_dump_graph_read_only(tmp_path):
    if os.geteuid() == 0:
        # root ignores permission bits; /proc refuses new files regardless
        target = "/proc/graph.nt"
    else:
        ro = tmp_path / "ro"
        ro.mkdir()
        ro.chmod(0o500)
        target = ro / "g.nt"
    with pytest.raises(OSError):
        dump_graph(Graph(), target)


def test_dump_graph_into_a_file_path_fails(tmp_path):
    (tmp_path / "plain").write_text("x")
    with pytest.raises(OSError):
        dump_graph(Graph(), tmp_path / "plain" / "g.nt")


# -- runs -----------------------------------------------------------------------

def run_bundled(name, inputs, out_dir=None):
    cfg, base = load_pipeline_config(pipeline_path(name))
    return run_pipeline(cfg, inputs, out_dir, base_dir=base)


def test_madrid_run(tmp_path, fixture_zip, manifest):
    result = run_bundled("madrid", {"feed.zip": fixture_zip}, tmp_path)
    expected = manifest["mini-gtfs.zip"]
    assert sorted(p.name for p in tmp_path.iterdir()) == ["graph.nt", "netex.xml"]
    assert result.stats.num_triples == expected["numTriples"] == len(result.graph)
    assert result.stats.gtfs_total_rows == expected["gtfsTotalRows"]
    assert load_ntriples(tmp_path / "graph.nt") == result.graph
    counts = count_elements((tmp_path / "netex.xml").read_bytes())
    for element, n in expected["elements"].items():
        assert counts.get(element, 0) == n, element
    assert result.stats.output_size_bytes == len(result.outputs["netex.xml"])


def test_milano_run_merges_branches(milano_zip, manifest):
    result = run_bundled("milano", {"feed.zip": milano_zip})
    expected = manifest["mini-milano.zip"]
    assert result.stats.gtfs_total_rows == expected["gtfsTotalRows"]
    assert result.stats.num_triples == expected["numTriples"]
    counts = count_elements(result.outputs["netex.xml"])
    for element, n in expected["elements"].items():
        assert counts.get(element, 0) == n, element


def test_branch_order_does_not_matter(milano_zip):
    cfg, base = load_pipeline_config(pipeline_path("milano"))
    swapped = cfg.model_copy(deep=True)
    swapped.blocks[1].branches.reverse()
    a = run_pipeline(cfg, {"feed.zip": milano_zip}, base_dir=base)
    b = run_pipeline(swapped, {"feed.zip": milano_zip}, base_dir=base)
    assert write_ntriples(a.graph) == write_ntriples(b.graph)
    assert a.outputs["netex.xml"] == b.outputs["netex.xml"]


def test_genova_run_infers(fixture_zip, manifest):
    plain = run_bundled("madrid", {"feed.zip": fixture_zip})
    inferred = run_bundled("genova", {"feed.zip": fixture_zip})
    assert len(inferred.graph) == len(plain.graph) + manifest["mini-gtfs.zip"]["inferredTriples"]
    # the mapping already types every Line, so the closure adds no Line elements
    assert count_elements(inferred.outputs["netex.xml"]) == count_elements(plain.outputs["netex.xml"])


def test_missing_mapping_aborts_with_path(tmp_path, fixture_zip):
    text = config([{"kind": "attach_graph"}, {"kind": "zip_split"}, {"kind": "lift", "mapping": "nowhere.cml"}])
    with pytest.raises(BlockError) as exc:
        run_pipeline(parse_pipeline_config(text), {"feed.zip": fixture_zip}, base_dir=tmp_path)
    assert exc.value.index == "2" and exc.value.kind == "lift"
    assert "nowhere.cml" in exc.value.reason


def test_corrupt_zip_aborts_at_zip_split():
    cfg, base = load_pipeline_config(pipeline_path("madrid"))
    with pytest.raises(BlockError) as exc:
        run_pipeline(cfg, {"feed.zip": b"PK\x03\x04garbage"}, base_dir=base)
    assert exc.value.kind == "zip_split"


def test_missing_gtfs_file_aborts(fixture_zip):
    entries = zip_split(fixture_zip)
    del entries["stop_times.txt"]
    cfg, base = load_pipeline_config(pipeline_path("madrid"))
    with pytest.raises(BlockError, match="missing: stop_times.txt") as exc:
        run_pipeline(cfg, {"feed.zip": make_zip(entries)}, base_dir=base)
    assert exc.value.kind == "gtfs_preprocess"


def test_branch_failure_is_reported_with_branch_index(tmp_path, fixture_zip):
    text = config([{"kind": "attach_graph"}, {"kind": "parallel", "branches": [
        [{"kind": "zip_split"}], [{"kind": "zip_split"}, {"kind": "lift", "mapping": "nowhere.cml"}]]}])
    with pytest.raises(BlockError) as exc:
        run_pipeline(parse_pipeline_config(text), {"feed.zip": fixture_zip}, base_dir=tmp_path)
    assert exc.value.index == "1.1.1"


def test_stats_are_coherent(fixture_zip):
    result = run_bundled("madrid", {"feed.zip": fixture_zip})
    s = result.stats
    assert min(s.lifting_time_ms, s.lowering_time_ms, s.conversion_time_ms) >= 0
    assert s.conversion_time_ms >= max(s.lifting_time_ms, s.lowering_time_ms)
    assert s.num_triples == len(parse_ntriples(result.outputs["graph.nt"]))
