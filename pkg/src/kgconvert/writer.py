"""Batched incremental insertion of triples into a store.

Producers enqueue triples one at a time; they are grouped into batches of at
most ``batch_size`` and handed to a pool of ``writers`` consumer threads that
push each batch into the sink. The sink only needs an ``add_batch`` method,
so a remote store client can stand in for the in-memory graph.
"""
from __future__ import annotations

import queue
import threading
from dataclasses import dataclass
from typing import Iterable, Protocol

from .terms import Triple


class TripleSink(Protocol):
    def add_batch(self, triples: list[Triple]) -> int: ...


class WriterUsageError(RuntimeError):
    pass


@dataclass(frozen=True)
class BatchedWriterConfig:
    batch_size: int = 1000
    writers: int = 1

    def __post_init__(self):
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise ValueError("batch_size must be a positive integer")
        if not isinstance(self.writers, int) or self.writers < 1:
            raise ValueError("writers must be a positive integer")


_STOP = object()


class BatchedWriter:
    def __init__(self, sink: TripleSink, config: BatchedWriterConfig | None = None):
        self.sink = sink
        self.config = config or BatchedWriterConfig()
        self.flushes: list[int] = []
        self.inserted = 0
        self.enqueued = 0
        self._buffer: list[Triple] = []
        self._lock = threading.Lock()
        self._queue: queue.Queue = queue.Queue()
        self._errors: list[BaseException] = []
        self._finished = False
        self._threads = [
            threading.Thread(target=self._consume, name=f"triple-writer-{i}", daemon=True)
            for i in range(self.config.writers)
        ]
        for t in self._threads:
            t.start()

    def _consume(self):
        while True:
            batch = self._queue.get()
            try:
                if batch is _STOP:
                    return
                added = self.sink.add_batch(batch)
                with self._lock:
                    self.inserted += added
            except BaseException as exc:  # surfaced by finish()
                self._errors.append(exc)
            finally:
                self._queue.task_done()

    def _flush_locked(self):
        if self._buffer:
            batch, self._buffer = self._buffer, []
            self.flushes.append(len(batch))
            self._queue.put(batch)

    def enqueue(self, triple: Triple):
        with self._lock:
            if self._finished:
                raise WriterUsageError("enqueue after finish()")
            self._buffer.append(triple)
            self.enqueued += 1
            if len(self._buffer) >= self.config.batch_size:
                self._flush_locked()

    def enqueue_many(self, triples: Iterable[Triple]):
        size = self.config.batch_size
        with self._lock:
            if self._finished:
                raise WriterUsageError("enqueue after finish()")
            buf = self._buffer
            for t in triples:
                buf.append(t)
                self.enqueued += 1
                if len(buf) >= size:
                    self._flush_locked()
                    buf = self._buffer

    def finish(self) -> int:
        """Flush the residue, wait for the queue to drain; returns triples newly stored."""
        with self._lock:
            if self._finished:
                raise WriterUsageError("finish() called twice")
            self._finished = True
            self._flush_locked()
        for _ in self._threads:
            self._queue.put(_STOP)
        for t in self._threads:
            t.join()
        if self._errors:
            raise self._errors[0]
        return self.inserted

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if not self._finished:
            self.finish()


def batched_insert_writer(graph: TripleSink, config: BatchedWriterConfig) -> BatchedWriter:
    return BatchedWriter(graph, config)
