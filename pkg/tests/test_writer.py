import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgconvert.graph import Graph
from kgconvert.terms import IRI, Literal, Triple
from kgconvert.writer import BatchedWriter, BatchedWriterConfig, WriterUsageError, batched_insert_writer


def triples(n):
    return [Triple(IRI(f"http://ex/s{i}"), IRI("http://ex/p"), Literal(str(i))) for i in range(n)]


def test_flush_sizes_follow_batch_size():
    g = Graph()
    w = BatchedWriter(g, BatchedWriterConfig(batch_size=1000, writers=1))
    w.enqueue_many(triples(2500))
    assert w.finish() == 2500
    assert sorted(w.flushes, reverse=True) == [1000, 1000, 500]
    assert len(g) == 2500


def test_batch_of_one_flushes_every_triple():
    w = BatchedWriter(Graph(), BatchedWriterConfig(batch_size=1, writers=1))
    w.enqueue_many(triples(5))
    w.finish()
    assert w.flushes == [1] * 5


def test_enqueue_after_finish_fails():
    w = batched_insert_writer(Graph(), BatchedWriterConfig())
    w.finish()
    with pytest.raises(WriterUsageError):
        w.enqueue(triples(1)[0])


def test_config_validation():
    with pytest.raises(ValueError):
        BatchedWriterConfig(batch_size=0)
    with pytest.raises(ValueError):
        BatchedWriterConfig(writers=0)


def test_context_manager_finishes():
    g = Graph()
    with BatchedWriter(g, BatchedWriterConfig(batch_size=3, writers=2)) as w:
        w.enqueue_many(triples(10))
    assert len(g) == 10


def test_sink_errors_surface_on_finish():
    class Broken:
        def add_batch(self, batch):
            raise RuntimeError("disk full")

    w = BatchedWriter(Broken(), BatchedWriterConfig(batch_size=2))
    w.enqueue_many(triples(4))
    with pytest.raises(RuntimeError, match="disk full"):
        w.finish()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 200), st.integers(1, 50), st.integers(1, 4))
def test_graph_independent_of_config(n, batch, writers):
    g = Graph()
    w = BatchedWriter(g, BatchedWriterConfig(batch_size=batch, writers=writers))
    w.enqueue_many(triples(n))
    assert w.finish() == n
    assert g == Graph(triples(n))
    assert sum(w.flushes) == n
