"""Declarative conversion pipelines built from typed blocks.

A pipeline is a JSON document listing blocks that pass a :class:`Message`
along. The message carries named byte payloads plus a handle to the one
graph shared by every block of a run::

    {"name": "demo", "store": {"batchSize": 1000, "writers": 1},
     "blocks": [{"kind": "attach_graph"}, {"kind": "zip_split"},
                {"kind": "lift", "mapping": "gtfs.cml"}, ...]}

Relative paths in block parameters resolve against the config file's
directory; output paths resolve against the run's output directory.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import threading
import time
import uuid
import zipfile
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Annotated, Literal, Mapping, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .graph import Graph
from .inference import extract_axioms, rdfs_closure
from .lift import LiftError, execute_mapping_doc
from .mapping import MappingSyntaxError, load_mapping
from .ntriples import NTriplesError, load_ntriples, parse_ntriples, write_ntriples
from .template import TemplateError, load_template, minify_output, render_template
from .transit.gtfs import OPTIONAL_COLUMNS, GtfsError, read_gtfs_feed
from .writer import BatchedWriterConfig

log = logging.getLogger(__name__)


# -- configuration -----------------------------------------------------------

class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class AttachGraph(_Block):
    kind: Literal["attach_graph"] = "attach_graph"


class ZipSplit(_Block):
    kind: Literal["zip_split"] = "zip_split"


class SplitFilter(_Block):
    file: str
    column: str


class GtfsPreprocess(_Block):
    kind: Literal["gtfs_preprocess"] = "gtfs_preprocess"
    filters: list[SplitFilter] = []


class Lift(_Block):
    kind: Literal["lift"] = "lift"
    mapping: str


class DataEnrich(_Block):
    kind: Literal["data_enrich"] = "data_enrich"
    sources: list[str]


class InferEnrich(_Block):
    kind: Literal["infer_enrich"] = "infer_enrich"
    ontologies: list[str]


class Lower(_Block):
    kind: Literal["lower"] = "lower"
    template: str
    output: str
    minify: bool = False
    params: dict[str, str] = {}


class DumpGraph(_Block):
    kind: Literal["dump_graph"] = "dump_graph"
    path: str


class WriteOutput(_Block):
    kind: Literal["write_output"] = "write_output"
    source: str = Field(alias="from")
    path: str


class Parallel(_Block):
    kind: Literal["parallel"] = "parallel"
    branches: list[list["Block"]]


Block = Annotated[
    Union[AttachGraph, ZipSplit, GtfsPreprocess, Lift, DataEnrich, InferEnrich, Lower, DumpGraph, WriteOutput, Parallel],
    Field(discriminator="kind"),
]
Parallel.model_rebuild()

BLOCK_KINDS = ("attach_graph", "zip_split", "gtfs_preprocess", "lift", "data_enrich",
               "infer_enrich", "lower", "dump_graph", "write_output", "parallel")
BRANCH_KINDS = ("lift", "gtfs_preprocess", "zip_split")


class StoreConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    batch_size: int = Field(1000, ge=1, alias="batchSize")
    writers: int = Field(1, ge=1)


class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    store: StoreConfig = StoreConfig()
    blocks: list[Block]

    def writer_config(self) -> BatchedWriterConfig:
        return BatchedWriterConfig(batch_size=self.store.batch_size, writers=self.store.writers)


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


def _pointer(loc: tuple) -> str:
    parts = []
    prev = None
    for item in loc:
        # pydantic inserts the discriminator tag after a list index
        if isinstance(prev, int) and item in BLOCK_KINDS:
            prev = item
            continue
        parts.append(str(item))
        prev = item
    return "/" + "/".join(parts)


def _semantic_errors(cfg: PipelineConfig) -> list[str]:
    errors = []
    blocks = cfg.blocks
    if not blocks or blocks[0].kind != "attach_graph":
        errors.append("attach_graph must be first")
    seen_lower = None

    def walk(seq, path, in_branch):
        nonlocal seen_lower
        for i, b in enumerate(seq):
            where = f"{path}/{i}"
            if b.kind == "attach_graph" and where != "/blocks/0":
                errors.append(f"{where}: attach_graph must appear exactly once, as the first block")
            if in_branch and b.kind not in BRANCH_KINDS:
                errors.append(f"{where}: {b.kind} is not allowed inside a parallel branch")
            if b.kind == "lower" and seen_lower is None:
                seen_lower = where
            if b.kind == "lift" and seen_lower is not None:
                errors.append(f"{where}: lift after lower at {seen_lower}")
            if b.kind == "parallel":
                if len(b.branches) < 2:
                    errors.append(f"{where}: parallel requires ≥2 branches")
                for j, branch in enumerate(b.branches):
                    walk(branch, f"{where}/branches/{j}", True)

    walk(blocks, "/blocks", False)
    return errors


def parse_pipeline_config(text: str | bytes) -> PipelineConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"invalid JSON: {exc}"]) from None
    try:
        cfg = PipelineConfig.model_validate(raw)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            if err["type"] == "union_tag_invalid":
                msgs.append(f"{_pointer(err['loc'])}: unknown block kind {err['ctx']['tag']!r}")
            elif err["type"] == "union_tag_not_found":
                msgs.append(f"{_pointer(err['loc'])}: block needs a 'kind'")
            else:
                msgs.append(f"{_pointer(err['loc'])}: {err['msg']}")
        raise ConfigError(msgs) from None
    errors = _semantic_errors(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def serialize_pipeline_config(cfg: PipelineConfig) -> str:
    return cfg.model_dump_json(by_alias=True, indent=2)


def load_pipeline_config(path) -> tuple[PipelineConfig, Path]:
    """Parse a config file; returns the config and the directory its paths are relative to."""
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from None
    return parse_pipeline_config(text), path.resolve().parent


# -- runtime -----------------------------------------------------------------

class BlockError(RuntimeError):
    def __init__(self, index: str, kind: str, reason: str):
        self.index = index
        self.kind = kind
        self.reason = reason
        super().__init__(f"block {index} ({kind}): {reason}")


@dataclass
class Message:
    graph: Graph
    payloads: dict[str, bytes] = field(default_factory=dict)
    headers: dict[str, str] = field(default_factory=dict)
    id: str = field(default_factory=lambda: uuid.uuid4().hex)

    def fork(self) -> "Message":
        return Message(self.graph, dict(self.payloads), dict(self.headers))


@dataclass
class StatsReport:
    gtfs_total_rows: int = 0
    lifting_time_ms: float = 0.0
    lowering_time_ms: float = 0.0
    conversion_time_ms: float = 0.0
    num_triples: int = 0
    output_size_bytes: int = 0


@dataclass
class RunResult:
    outputs: dict[str, bytes]
    stats: StatsReport
    warnings: list[str]
    graph: Graph


def zip_split(payload: bytes, warnings: list | None = None) -> dict[str, bytes]:
    """One stream per file entry of a zip archive, named by the entry's base name."""
    try:
        zf = zipfile.ZipFile(io.BytesIO(payload))
    except zipfile.BadZipFile as exc:
        raise ValueError(f"corrupt zip archive: {exc}") from None
    out: dict[str, bytes] = {}
    with zf:
        for info in zf.infolist():
            if info.is_dir():
                continue
            base = info.filename.rsplit("/", 1)[-1]
            if not base:
                continue
            if base in out:
                if warnings is not None:
                    warnings.append(f"zip entry {info.filename} shadows an earlier {base}; ignored")
                continue
            try:
                out[base] = zf.read(info)
            except (zipfile.BadZipFile, zlib.error, EOFError) as exc:
                raise ValueError(f"corrupt zip entry {info.filename}: {exc}") from None
    if not out and warnings is not None:
        warnings.append("zip archive holds no files")
    return out


def _is_zip(name: str, data: bytes) -> bool:
    return name.lower().endswith(".zip") or data[:4] in (b"PK\x03\x04", b"PK\x05\x06")


def split_rows(data: bytes, name: str, column: str) -> dict[str, bytes]:
    """Partition a CSV stream by the value of ``column``; each part keeps the header."""
    reader = csv.reader(io.StringIO(data.decode("utf-8")))
    header = next(reader, None)
    if header is None or column not in header:
        raise ValueError(f"filter column {column!r} not in the header of {name}")
    col = header.index(column)
    parts: dict[str, list] = {}
    for row in reader:
        if not row:
            continue
        value = row[col] if col < len(row) else ""
        parts.setdefault(value, []).append(row)
    out = {}
    for value, rows in parts.items():
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        out[f"{name}#{value}"] = buf.getvalue().encode("utf-8")
    return out


def _filter_pair(flt) -> tuple[str, str]:
    if isinstance(flt, Mapping):
        return flt["file"], flt["column"]
    if hasattr(flt, "file"):
        return flt.file, flt.column
    return tuple(flt)


def gtfs_preprocess(streams: Mapping[str, bytes], filters=()) -> dict[str, bytes]:
    """Strip BOMs, check the encoding and add per-value split streams named ``file#value``."""
    out: dict[str, bytes] = {}
    for name, data in streams.items():
        if name.endswith((".txt", ".csv")):
            if data.startswith(b"\xef\xbb\xbf"):
                data = data[3:]
            try:
                data.decode("utf-8")
            except UnicodeDecodeError:
                raise ValueError(f"invalid UTF-8 in {name}") from None
        out[name] = data
    for flt in filters:
        fname, column = _filter_pair(flt)
        if fname not in out:
            raise ValueError(f"filter refers to missing stream {fname}")
        out.update(split_rows(out[fname], fname, column))
    return out


def prepare_gtfs_feed(streams: Mapping[str, bytes], filters=()) -> dict[str, bytes]:
    """Preprocess, then check the feed; an absent optional table becomes a header-only stream."""
    out = gtfs_preprocess(streams, filters)
    read_gtfs_feed(out)
    for name, cols in OPTIONAL_COLUMNS.items():
        # mappings expect every table
        out.setdefault(name, (",".join(cols) + "\n").encode())
    return out


def data_enrich(graph: Graph, sources) -> int:
    """Union the N-Triples files into ``graph``; returns the size delta."""
    added = 0
    for src in sources:
        with open(src, "rb") as fh:
            triples = parse_ntriples(fh.read(), source=str(src))
        added += graph.insert(triples)
    return added


def dump_graph(graph: Graph, path) -> int:
    data = write_ntriples(graph)
    Path(path).write_bytes(data)
    return len(data)


def _template_files(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(path.glob("*.gtl"))
        if not files:
            raise ValueError(f"no .gtl templates in {path}")
        return files
    if not path.exists():
        raise ValueError(f"template not found: {path}")
    return [path]


class _Spans:
    """Total length of the union of time intervals recorded from several threads."""

    def __init__(self):
        self._lock = threading.Lock()
        self._spans: list[tuple[float, float]] = []

    def add(self, start: float, end: float):
        with self._lock:
            self._spans.append((start, end))

    def total(self) -> float:
        total = 0.0
        cur_start = cur_end = None
        for a, b in sorted(self._spans):
            if cur_end is None or a > cur_end:
                if cur_end is not None:
                    total += cur_end - cur_start
                cur_start, cur_end = a, b
            else:
                cur_end = max(cur_end, b)
        if cur_end is not None:
            total += cur_end - cur_start
        return total


class _Run:
    def __init__(self, cfg: PipelineConfig, base_dir: Path, out_dir: Path | None):
        self.cfg = cfg
        self.base_dir = base_dir
        self.out_dir = out_dir
        self.outputs: dict[str, bytes] = {}
        self.warnings: list[str] = []
        self.lift_spans = _Spans()
        self.lower_spans = _Spans()
        self.rows = 0
        self.output_size = 0
        self.dumped_size: int | None = None
        self.lock = threading.Lock()
        self._templates: dict[Path, list] = {}

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path

    def emit(self, rel: str, data: bytes):
        with self.lock:
            self.outputs[rel] = data
        if self.out_dir is not None:
            target = self.out_dir / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)

    def run_blocks(self, blocks, msg: Message, prefix: str = ""):
        for i, block in enumerate(blocks):
            index = f"{prefix}{i}"
            if block.kind == "parallel":
                self.run_parallel(block, msg, index)
                continue
            try:
                self.run_block(block, msg)
            except BlockError:
                raise
            except (ValueError, LiftError, OSError, KeyError) as exc:
                raise BlockError(index, block.kind, _reason(exc)) from exc

    def run_parallel(self, block: Parallel, msg: Message, index: str):
        forks = [msg.fork() for _ in block.branches]
        with ThreadPoolExecutor(max_workers=len(block.branches)) as pool:
            futures = [
                pool.submit(self.run_blocks, branch, fork, f"{index}.{j}.")
                for j, (branch, fork) in enumerate(zip(block.branches, forks))
            ]
            errors = [f.exception() for f in futures]
        for err in errors:
            if err is not None:
                raise err
        for fork in forks:
            msg.payloads.update(fork.payloads)

    def run_block(self, block, msg: Message):
        kind = block.kind
        if kind == "attach_graph":
            msg.headers["graph"] = "attached"
        elif kind == "zip_split":
            payloads = {}
            for name, data in msg.payloads.items():
                if _is_zip(name, data):
                    payloads.update(zip_split(data, self.warnings))
                else:
                    payloads[name] = data
            msg.payloads = payloads
        elif kind == "gtfs_preprocess":
            try:
                msg.payloads = prepare_gtfs_feed(msg.payloads, block.filters)
            except GtfsError as exc:
                raise ValueError(str(exc)) from None
        elif kind == "lift":
            path = self.resolve(block.mapping)
            try:
                doc = load_mapping(path)
            except FileNotFoundError:
                raise ValueError(f"mapping not found: {path}") from None
            except MappingSyntaxError as exc:
                raise ValueError(f"{path}: {exc}") from None
            start = time.perf_counter()
            report = execute_mapping_doc(doc, msg.payloads, msg.graph, self.cfg.writer_config())
            self.lift_spans.add(start, time.perf_counter())
            with self.lock:
                self.rows += report.rows_read
            for d in report.diagnostics:
                self.warnings.append(str(d))
        elif kind == "data_enrich":
            try:
                added = data_enrich(msg.graph, [self.resolve(s) for s in block.sources])
            except NTriplesError as exc:
                raise ValueError(str(exc)) from None
            msg.headers["enrichAdded"] = str(added)
        elif kind == "infer_enrich":
            onts = []
            for p in block.ontologies:
                try:
                    onts.append(load_ntriples(self.resolve(p)))
                except NTriplesError as exc:
                    raise ValueError(str(exc)) from None
            added = rdfs_closure(msg.graph, extract_axioms(onts))
            msg.headers["inferred"] = str(added)
        elif kind == "lower":
            files = _template_files(self.resolve(block.template))
            templates = []
            for f in files:
                try:
                    templates.append(load_template(f))
                except TemplateError as exc:
                    raise ValueError(str(exc)) from None
            start = time.perf_counter()
            diagnostics: list[str] = []
            data = b"".join(render_template(t, msg.graph, block.params, diagnostics) for t in templates)
            if block.minify:
                data = minify_output(data)
            self.lower_spans.add(start, time.perf_counter())
            self.warnings.extend(diagnostics)
            msg.payloads[block.output] = data
            self.output_size += len(data)
        elif kind == "dump_graph":
            data = write_ntriples(msg.graph)
            self.dumped_size = len(msg.graph)
            msg.payloads[block.path] = data
            self.emit(block.path, data)
        elif kind == "write_output":
            if block.source not in msg.payloads:
                raise ValueError(f"no payload named {block.source!r}")
            self.emit(block.path, msg.payloads[block.source])
        else:  # pragma: no cover
            raise ValueError(f"unknown block kind {kind}")


def _reason(exc: BaseException) -> str:
    if isinstance(exc, OSError) and exc.filename:
        return f"{exc.strerror}: {exc.filename}"
    if isinstance(exc, KeyError):
        return f"missing {exc.args[0]}"
    return str(exc)


def run_pipeline(
    config: PipelineConfig,
    inputs: Mapping[str, bytes],
    out_dir=None,
    *,
    base_dir=None,
) -> RunResult:
    """Execute ``config`` over the named input payloads.

    Outputs are returned by relative path and, when ``out_dir`` is given,
    also written below it. The first failing block aborts the run with a
    :class:`BlockError`.
    """
    started = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    run = _Run(config, Path(base_dir) if base_dir is not None else Path.cwd(), out)
    msg = Message(Graph(), dict(inputs))
    run.run_blocks(config.blocks, msg)
    stats = StatsReport(
        gtfs_total_rows=run.rows,
        lifting_time_ms=run.lift_spans.total() * 1000,
        lowering_time_ms=run.lower_spans.total() * 1000,
        conversion_time_ms=(time.perf_counter() - started) * 1000,
        num_triples=run.dumped_size if run.dumped_size is not None else len(msg.graph),
        output_size_bytes=run.output_size,
    )
    for w in run.warnings:
        log.debug("pipeline %s: %s", config.name, w)
    return RunResult(run.outputs, stats, run.warnings, msg.graph)
