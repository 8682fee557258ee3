
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import percent_encode

from kgconvert.graph import Graph
from kgconvert.lift import (
    LiftError,
    apply_function,
    execute_mapping_doc,
    execute_triples_map,
    expand_term_map,
    read_csv,
)
from kgconvert.mapping import ColumnArg, ConstArg, FunctionCall, TermMapDef, load_mapping, parse_mapping
from kgconvert.ntriples import write_ntriples
from kgconvert.pipeline import prepare_gtfs_feed, zip_split
from kgconvert.terms import IRI, RDF_TYPE, XSD_INTEGER, BNode, Literal, Triple
from kgconvert.transit import MAPPINGS_DIR
from kgconvert.transit.synthetic import synthetic_tables
from kgconvert.writer import BatchedWriterConfig

STOP_TEMPLATE = TermMapDef("template", "http://ex/stop/{stop_id}", "iri")


def lift(doc, streams, config=None) -> Graph:
    g = Graph()
    execute_mapping_doc(doc, streams, g, config)
    return g


def test_template_expansion():
    assert expand_term_map(STOP_TEMPLATE, {"stop_id": "S1"}) == IRI("http://ex/stop/S1")
    assert expand_term_map(STOP_TEMPLATE, {"stop_id": "a b"}) == IRI("http://ex/stop/a%20b")


@given(st.text(min_size=1))
def test_template_values_are_percent_encoded(value):
    term = expand_term_map(STOP_TEMPLATE, {"stop_id": value})
    assert term == IRI("http://ex/stop/" + percent_encode(value))


def test_absent_or_empty_reference_gives_no_term():
    tm = TermMapDef("reference", "stop_name", "literal")
    assert expand_term_map(tm, {"stop_id": "S1"}) is None
    assert expand_term_map(tm, {"stop_name": ""}) is None
    assert expand_term_map(STOP_TEMPLATE, {"stop_id": ""}) is None
    assert expand_term_map(tm, {"stop_name": "Sol"}) == Literal("Sol")


def test_constant_and_typed_terms():
    assert expand_term_map(TermMapDef("constant", "http://ex/c", "iri"), {}) == IRI("http://ex/c")
    tm = TermMapDef("reference", "n", "literal", datatype=XSD_INTEGER.value)
    assert expand_term_map(tm, {"n": "7"}) == Literal("7", datatype=XSD_INTEGER)
    tm = TermMapDef("reference", "n", "literal", language="it")
    assert expand_term_map(tm, {"n": "ciao"}) == Literal("ciao", language="it")


def test_blank_template_labels_are_valid():
    tm = TermMapDef("template", "x{id}", "blank")
    term = expand_term_map(tm, {"id": "a-b c"})
    assert isinstance(term, BNode)
    assert term == expand_term_map(tm, {"id": "a-b c"})
    assert term != expand_term_map(tm, {"id": "a_b c"})


def test_reference_as_iri_rejects_non_iris():
    tm = TermMapDef("reference", "url", "iri")
    diags = []
    assert expand_term_map(tm, {"url": "https://ex.org/x"}) == IRI("https://ex.org/x")
    assert expand_term_map(tm, {"url": "not an iri"}, diags) is None
    assert len(diags) == 1


def col(name):
    return ColumnArg(name)


def test_builtin_functions():
    assert apply_function(FunctionCall("gtfs_date", (col("d"),)), {"d": "20200115"}) == "2020-01-15"
    assert apply_function(FunctionCall("gtfs_time", (col("t"),)), {"t": "25:10:00"}) == "01:10:00"
    assert apply_function(FunctionCall("trim", (col("x"),)), {"x": "  Sol \t"}) == "Sol"
    assert apply_function(FunctionCall("concat", (col("a"), ConstArg("-"), col("b"))), {"a": "T1", "b": "3"}) == "T1-3"


@pytest.mark.parametrize("value, clock, offset", [("25:10:00", "01:10:00", "1"), ("08:05:00", "08:05:00", "0"),
                                                  ("48:00:00", "00:00:00", "2"), ("8:05:00", "08:05:00", "0")])
def test_time_pseudo_columns(value, clock, offset):
    call = FunctionCall("gtfs_time", (col("t"),))
    t = expand_term_map(TermMapDef("reference", "_time", "literal", function=call), {"t": value})
    d = expand_term_map(TermMapDef("reference", "_dayOffset", "literal", function=call), {"t": value})
    assert (t.lexical, d.lexical) == (clock, offset)


@pytest.mark.parametrize("value", ["2020-01-15", "2020011", "20201301", "abcdefgh"])
def test_malformed_date_gives_diagnostic(value):
    diags = []
    assert apply_function(FunctionCall("gtfs_date", (col("d"),)), {"d": value}, diags) is None
    assert len(diags) == 1


def test_malformed_time_skips_only_that_triple():
    doc = parse_mapping("""\
map T
  from csv stream "st.txt"
  subject "http://ex/st/{id}"
  po <http://ex/arr> ref _time fn gtfs_time(t)
  po <http://ex/id> ref id
""")
    g = Graph()
    report = execute_mapping_doc(doc, {"st.txt": b"id,t\n1,08:00:00\n2,8h\n"}, g)
    assert len(g) == 3
    assert len(report.diagnostics) == 1
    assert report.diagnostics[0].row == 2


STOPS_DOC = """\
prefix ot: <http://example.org/ot#>
map StopMap
  from csv stream "stops.txt"
  subject "http://ex/stop/{stop_id}" type ot:Stop
  po ot:name ref stop_name
"""


def test_two_stop_rows_give_four_triples():
    doc = parse_mapping(STOPS_DOC)
    _, rows = read_csv(b"stop_id,stop_name\nS1,Sol\nS2,Atocha\n")
    out = []
    assert execute_triples_map(doc.maps[0], rows, sink=out) == 4
    assert len(set(out)) == 4


def test_row_filter():
    doc = parse_mapping("""\
map RouteMap
  from csv stream "routes.txt" where route_type = "3"
  subject "http://ex/route/{route_id}"
  po <http://ex/type> ref route_type
""")
    g = lift(doc, {"routes.txt": b"route_id,route_type\nR1,3\nR2,1\n"})
    assert set(g) == {Triple(IRI("http://ex/route/R1"), IRI("http://ex/type"), Literal("3"))}


def test_join_against_parent_index():
    doc = parse_mapping("""\
map Trips
  from csv stream "trips.txt"
  subject "http://ex/trip/{trip_id}"
  po <http://ex/onLine> join RouteMap on route_id = route_id
map RouteMap
  from csv stream "routes.txt"
  subject "http://ex/route/{route_id}"
""")
    index = {("RouteMap", "route_id"): {"R1": {IRI("http://ex/route/R1"): None}}}
    out = []
    n = execute_triples_map(doc.maps[0], [{"trip_id": "T1", "route_id": "R1"}], index, out)
    assert n == 1
    assert out == [Triple(IRI("http://ex/trip/T1"), IRI("http://ex/onLine"), IRI("http://ex/route/R1"))]


def test_join_without_parent_index_fails():
    doc = parse_mapping("""\
map C
  from csv stream "c"
  subject "http://ex/c/{id}"
  po <http://ex/p> join P on id = id
map P
  from csv stream "p"
  subject "http://ex/p/{id}"
""")
    with pytest.raises(LiftError):
        execute_triples_map(doc.maps[0], [{"id": "1"}], {}, [])


def test_self_join():
    doc = parse_mapping("""\
map Stop
  from csv stream "stops.txt"
  subject "http://ex/stop/{stop_id}"
  po <http://ex/parent> join Stop on parent_station = stop_id
""")
    g = lift(doc, {"stops.txt": b"stop_id,parent_station\nP,\nC1,P\nC2,P\n"})
    assert len(g) == 2
    assert {t.object for t in g} == {IRI("http://ex/stop/P")}


def test_missing_stream_is_named():
    doc = parse_mapping(STOPS_DOC.replace("stops.txt", "nope.txt"))
    with pytest.raises(LiftError, match="nope.txt"):
        lift(doc, {"stops.txt": b"stop_id\n"})


def test_invalid_doc_refused():
    doc = parse_mapping(STOPS_DOC + "  po ot:x fn shout(stop_id)\n")
    with pytest.raises(LiftError, match="invalid mapping"):
        lift(doc, {"stops.txt": b"stop_id\n"})


def test_invalid_utf8_refused():
    with pytest.raises(LiftError, match="UTF-8"):
        lift(parse_mapping(STOPS_DOC), {"stops.txt": b"stop_id,stop_name\nS1,\xff\n"})


# -- bundled mapping over the fixture feed ----------------------------------------

@pytest.fixture(scope="module")
def fixture_streams(fixture_zip):
    return prepare_gtfs_feed(zip_split(fixture_zip))


def test_fixture_counts(fixture_streams, manifest):
    expected = manifest["mini-gtfs.zip"]
    doc = load_mapping(MAPPINGS_DIR / "gtfs.cml")
    g = Graph()
    report = execute_mapping_doc(doc, fixture_streams, g)
    assert report.rows_read == expected["gtfsTotalRows"]
    assert report.triples_emitted == expected["numTriples"]
    assert len(g) == expected["numTriples"]
    assert report.diagnostics == []
    for name, count in expected["triplesByFile"].items():
        single = parse_mapping(
            "\n".join(f"prefix {p}: <{ns}>" for p, ns in doc.prefixes.items()) + "\n"
        )
        single.maps = [m for m in doc.maps if m.source.stream == name]
        if single.maps and not any(m.join_parents() for m in single.maps):
            assert len(lift(single, fixture_streams)) == count


def test_midnight_crossing_offsets(fixture_streams):
    g = lift(load_mapping(MAPPINGS_DIR / "gtfs.cml"), fixture_streams)
    ot = "http://example.org/ontology/mini-transmodel#"
    offsets = {(t.subject.value.rsplit("/", 1)[1], t.object.lexical) for t in g.match(None, IRI(ot + "dayOffset"), None)}
    assert ("T4-2", "1") in offsets and ("T4-3", "1") in offsets and ("T4-1", "0") in offsets
    arrivals = {t.object.lexical for t in g.match(IRI("http://example.org/data/PassingTime/T4-3"), IRI(ot + "arrival"), None)}
    assert arrivals == {"01:10:00"}


def test_batch_size_does_not_change_the_graph(fixture_streams):
    doc = load_mapping(MAPPINGS_DIR / "gtfs.cml")
    small = lift(doc, fixture_streams, BatchedWriterConfig(batch_size=1))
    large = lift(doc, fixture_streams, BatchedWriterConfig(batch_size=10_000, writers=3))
    assert write_ntriples(small) == write_ntriples(large)


@pytest.mark.parametrize("streams", ["fixture", "synthetic"])
def test_join_and_iri_pattern_variants_agree(streams, fixture_streams):
    data = fixture_streams if streams == "fixture" else prepare_gtfs_feed(synthetic_tables(2, seed=5))
    joined = lift(load_mapping(MAPPINGS_DIR / "gtfs-join.cml"), data)
    patterned = lift(load_mapping(MAPPINGS_DIR / "gtfs.cml"), data)
    assert len(joined) > 0
    assert write_ntriples(joined) == write_ntriples(patterned)


# -- properties -------------------------------------------------------------------

JOIN_VARIANT = """\
map Child
  from csv stream "child.csv"
  subject "http://ex/child/{id}"
  po <http://ex/ref> join Parent on key = key
map Parent
  from csv stream "parent.csv"
  subject "http://ex/parent/{key}"
  po <http://ex/label> ref label
"""
PATTERN_VARIANT = JOIN_VARIANT.replace("join Parent on key = key", 'template "http://ex/parent/{key}"')

keys = st.sampled_from(["k1", "k 2", "ü", "a/b", ""])


def _csv(header, rows):
    lines = [",".join(header)] + [",".join('"' + v.replace('"', '""') + '"' for v in r) for r in rows]
    return ("\n".join(lines) + "\n").encode()


@settings(max_examples=60, deadline=None)
@given(st.lists(keys, unique=True), st.lists(st.tuples(st.integers(0, 99), keys), unique_by=lambda r: r[0]))
def test_join_equivalence_when_every_key_has_a_parent(parent_keys, children):
    children = [(str(i), k) for i, k in children if k in parent_keys]
    streams = {
        "parent.csv": _csv(["key", "label"], [(k, "L" + k) for k in parent_keys]),
        "child.csv": _csv(["id", "key"], children),
    }
    a = lift(parse_mapping(JOIN_VARIANT), streams)
    b = lift(parse_mapping(PATTERN_VARIANT), streams)
    assert set(a) == set(b)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["S1", "S2", "", "S 3"]), st.sampled_from(["", "Sol", "x"])), max_size=12),
       st.randoms(use_true_random=False))
def test_skip_semantics_and_order_independence(rows, rnd):
    doc = parse_mapping(STOPS_DOC)
    g1 = lift(doc, {"stops.txt": _csv(["stop_id", "stop_name"], rows)})
    shuffled = list(rows)
    rnd.shuffle(shuffled)
    g2 = lift(doc, {"stops.txt": _csv(["stop_id", "stop_name"], shuffled)})
    assert g1 == g2
    expected = set()
    for sid, name in rows:
        if not sid:
            continue
        s = IRI("http://ex/stop/" + percent_encode(sid))
        expected.add(Triple(s, RDF_TYPE, IRI("http://example.org/ot#Stop")))
        if name:
            expected.add(Triple(s, IRI("http://example.org/ot#name"), Literal(name)))
    assert set(g1) == expected


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 3), st.sampled_from([1, 7, 1000]), st.integers(1, 4))
def test_synthetic_graph_independent_of_writer_config(seed, batch, writers):
    data = prepare_gtfs_feed(synthetic_tables(1, seed=seed))
    doc = load_mapping(MAPPINGS_DIR / "gtfs.cml")
    ref = lift(doc, data)
    assert lift(doc, data, BatchedWriterConfig(batch, writers)) == ref
