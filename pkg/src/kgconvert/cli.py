"""``kgconvert`` command line."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .ntriples import NTriplesError, load_ntriples, write_ntriples
from .pipeline import BlockError, ConfigError, gtfs_preprocess, load_pipeline_config, run_pipeline, zip_split

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _read_streams(path: Path) -> dict[str, bytes]:
    if path.is_dir():
        return {p.name: p.read_bytes() for p in sorted(path.iterdir()) if p.is_file()}
    data = path.read_bytes()
    try:
        return zip_split(data)
    except ValueError as exc:
        _fail(f"{path}: {exc}", EXIT_FAILED)


@click.group()
@click.version_option(version=__version__)
def main():
    """Convert transit data through an RDF knowledge graph."""


@main.command()
@click.option("-p", "--pipeline", "pipeline_file", required=True, type=click.Path(path_type=Path))
@click.option("-i", "--input", "inputs", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("-o", "--out", "out_dir", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--stats", "stats_path", type=click.Path(dir_okay=False, path_type=Path),
              help="Where to write stats.json (default: inside the output directory).")
def run(pipeline_file, inputs, out_dir, stats_path):
    """Run a pipeline over input files."""
    from .stats import emit_stats

    try:
        cfg, base = load_pipeline_config(pipeline_file)
    except ConfigError as exc:
        _fail(f"{pipeline_file}: {exc}", EXIT_CONFIG)
    try:
        result = run_pipeline(cfg, {p.name: p.read_bytes() for p in inputs}, out_dir, base_dir=base)
    except BlockError as exc:
        _fail(str(exc), EXIT_FAILED)
    emit_stats(result.stats, stats_path or out_dir / "stats.json")
    for w in result.warnings:
        click.echo(f"warning: {w}", err=True)


@main.command()
@click.option("-m", "--mapping", "mapping_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("-i", "--input", "source", required=True, type=click.Path(exists=True, path_type=Path),
              help="Directory of CSV files or a zip archive.")
@click.option("-o", "--out", "out_file", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--batch-size", default=1000, show_default=True, type=click.IntRange(min=1))
@click.option("--writers", default=1, show_default=True, type=click.IntRange(min=1))
def lift(mapping_file, source, out_file, batch_size, writers):
    """Lift CSV input into N-Triples with a CML mapping."""
    from .graph import Graph
    from .lift import LiftError, execute_mapping_doc
    from .mapping import MappingSyntaxError, load_mapping
    from .writer import BatchedWriterConfig

    try:
        doc = load_mapping(mapping_file)
    except MappingSyntaxError as exc:
        _fail(f"{mapping_file}: {exc}", EXIT_CONFIG)
    streams = _read_streams(source)
    try:
        streams = gtfs_preprocess(streams)
    except ValueError as exc:
        _fail(str(exc), EXIT_FAILED)
    graph = Graph()
    try:
        report = execute_mapping_doc(doc, streams, graph, BatchedWriterConfig(batch_size, writers))
    except LiftError as exc:
        _fail(str(exc), EXIT_FAILED)
    out_file.write_bytes(write_ntriples(graph))
    for d in report.diagnostics:
        click.echo(f"warning: {d}", err=True)
    click.echo(f"{report.rows_read} rows, {len(graph)} triples", err=True)


@main.command()
@click.option("-t", "--template", "template_path", required=True, type=click.Path(exists=True, path_type=Path),
              help="A .gtl file or a directory of them, rendered in name order.")
@click.option("-g", "--graph", "graph_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--out", "out_file", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--minify", is_flag=True)
@click.option("--param", "params", multiple=True, metavar="KEY=VALUE")
def lower(template_path, graph_file, out_file, minify, params):
    """Render templates against an N-Triples graph."""
    from .template import TemplateError, load_template, minify_output, render_template

    values = {}
    for item in params:
        key, sep, value = item.partition("=")
        if not sep:
            _fail(f"--param expects KEY=VALUE, got {item!r}", EXIT_CONFIG)
        values[key] = value
    files = sorted(template_path.glob("*.gtl")) if template_path.is_dir() else [template_path]
    try:
        templates = [load_template(f) for f in files]
    except TemplateError as exc:
        _fail(str(exc), EXIT_CONFIG)
    try:
        graph = load_ntriples(graph_file)
    except NTriplesError as exc:
        _fail(str(exc), EXIT_FAILED)
    diagnostics: list[str] = []
    data = b"".join(render_template(t, graph, values, diagnostics) for t in templates)
    if minify:
        data = minify_output(data)
    out_file.write_bytes(data)
    for d in diagnostics:
        click.echo(f"warning: {d}", err=True)


@main.command()
@click.option("-g", "--graph", "graph_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("-q", "--query", "query_file", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
def query(graph_file, query_file):
    """Evaluate a SELECT query and print the solutions as TSV."""
    from .query import QuerySyntaxError, evaluate_query, parse_query

    try:
        q = parse_query(query_file.read_text(encoding="utf-8"))
    except QuerySyntaxError as exc:
        _fail(f"{query_file}: {exc}", EXIT_CONFIG)
    try:
        graph = load_ntriples(graph_file)
    except NTriplesError as exc:
        _fail(str(exc), EXIT_FAILED)
    names = q.variables()
    click.echo("\t".join("?" + n for n in names))
    for sol in evaluate_query(q, graph):
        click.echo("\t".join(sol[n].n3() if n in sol else "" for n in names))


@main.command()
@click.option("--scales", default="1,10,100", show_default=True, help="Comma-separated, strictly increasing.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_file", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("-p", "--pipeline", "pipeline_file", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Pipeline to time (default: the bundled madrid pipeline).")
@click.option("--join-strategy", type=click.Choice(["hash", "nested"]), default="hash", show_default=True,
              help="How the join-based mapping resolves its joins.")
@click.option("--repeats", default=3, show_default=True, type=click.IntRange(min=1),
              help="Lift each mapping variant this many times and keep the best time.")
def bench(scales, seed, out_file, pipeline_file, join_strategy, repeats):
    """Time conversions of synthetic feeds and compare join against IRI-pattern lifting."""
    from .bench import BenchError, run_bench

    try:
        scale_list = [int(s) for s in scales.split(",") if s.strip()]
    except ValueError:
        _fail(f"bad --scales {scales!r}", EXIT_CONFIG)
    try:
        report = run_bench(scale_list, seed, pipeline_file, join_strategy, repeats)
    except BenchError as exc:
        _fail(str(exc), EXIT_FAILED)
    except ConfigError as exc:
        _fail(str(exc), EXIT_CONFIG)
    out_file.write_text(report.model_dump_json(by_alias=True, indent=2) + "\n")
    for row in report.rows:
        click.echo(
            f"scale {row.scale}: {row.gtfs_total_rows} rows, {row.num_triples} triples, "
            f"{row.conversion_time_ms:.0f} ms total, join {row.join_variant_time_ms:.0f} ms, "
            f"iri-pattern {row.iri_pattern_variant_time_ms:.0f} ms"
        )


@main.command()
@click.option("-p", "--pipeline", "pipeline_file", required=True, type=click.Path(path_type=Path))
@click.option("--listen", default="127.0.0.1:8080", show_default=True, metavar="HOST:PORT")
@click.option("--max-concurrent", default=1, show_default=True, type=click.IntRange(min=1))
def serve(pipeline_file, listen, max_concurrent):
    """Serve POST /convert for a pipeline."""
    import uvicorn

    from .service import create_app

    host, _, port = listen.rpartition(":")
    if not port.isdigit():
        _fail(f"--listen expects HOST:PORT, got {listen!r}", EXIT_CONFIG)
    try:
        app = create_app(pipeline_file, max_concurrent)
    except ConfigError as exc:
        _fail(f"{pipeline_file}: {exc}", EXIT_CONFIG)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))


@main.command("validate-netex")
@click.argument("xml_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
def validate_netex(xml_file):
    """Check a NeTEx document against the structural subset rules."""
    from .transit.netex import validate_netex_subset

    report = validate_netex_subset(xml_file.read_bytes())
    for v in report.violations:
        click.echo(str(v))
    if report.violations:
        sys.exit(EXIT_FAILED)
    click.echo("ok")


@main.command()
@click.argument("url")
@click.option("-i", "--input", "feed", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("-o", "--out", "out_dir", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--timeout", default=600.0, show_default=True, type=float)
def post(url, feed, out_dir, timeout):
    """Send a feed to a running service and unpack the returned artifacts."""
    import io
    import zipfile

    import httpx

    try:
        resp = httpx.post(url.rstrip("/") + "/convert", content=feed.read_bytes(),
                          headers={"content-type": "application/zip"}, timeout=timeout)
    except httpx.HTTPError as exc:
        _fail(f"{url}: {exc}", EXIT_FAILED)
    if resp.status_code != 200:
        try:
            detail = json.dumps(resp.json())
        except ValueError:
            detail = resp.text
        _fail(f"HTTP {resp.status_code}: {detail}", EXIT_FAILED)
    out_dir.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(io.BytesIO(resp.content)) as zf:
        for name in zf.namelist():
            (out_dir / Path(name).name).write_bytes(zf.read(name))
            click.echo(name)


if __name__ == "__main__":  # pragma: no cover
    main()
