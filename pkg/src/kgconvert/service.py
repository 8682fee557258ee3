"""HTTP trigger: POST a zipped GTFS feed, receive the conversion artifacts."""
from __future__ import annotations

import asyncio
import io
import zipfile

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from starlette.concurrency import run_in_threadpool

from .pipeline import BlockError, PipelineConfig, RunResult, load_pipeline_config, run_pipeline
from .schemas import ErrorResponse
from .stats import stats_json

ARTIFACTS = ("netex.xml", "graph.nt", "stats.json")
_ZIP_TIME = (1980, 1, 1, 0, 0, 0)


def artifacts(result: RunResult) -> dict[str, bytes]:
    """The three files a conversion hands back: NeTEx document, graph dump, statistics."""
    return {
        "netex.xml": result.outputs.get("netex.xml", b""),
        "graph.nt": result.outputs.get("graph.nt", b""),
        "stats.json": stats_json(result.stats),
    }


def pack_artifacts(files: dict[str, bytes]) -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for name in ARTIFACTS:
            info = zipfile.ZipInfo(name, _ZIP_TIME)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, files[name])
    return buf.getvalue()


def convert_feed(cfg: PipelineConfig, base_dir, body: bytes, name: str = "feed.zip") -> bytes:
    return pack_artifacts(artifacts(run_pipeline(cfg, {name: body}, None, base_dir=base_dir)))


def _error(status: int, err: ErrorResponse) -> JSONResponse:
    return JSONResponse(err.model_dump(exclude_none=True), status_code=status)


def create_app(pipeline_path, max_concurrent: int = 1) -> FastAPI:
    if max_concurrent < 1:
        raise ValueError("max_concurrent must be >= 1")
    cfg, base_dir = load_pipeline_config(pipeline_path)
    app = FastAPI(title="kgconvert", summary="GTFS to NeTEx conversion through a knowledge graph")
    # asyncio.Semaphore wakes waiters in arrival order, so excess requests queue FIFO
    gate = asyncio.Semaphore(max_concurrent)
    app.state.config = cfg
    app.state.active = 0

    @app.get("/healthz", response_class=PlainTextResponse)
    async def healthz() -> str:
        return "ok"

    @app.post(
        "/convert",
        response_class=Response,
        responses={
            200: {"content": {"application/zip": {}}, "description": "netex.xml, graph.nt and stats.json"},
            400: {"model": ErrorResponse},
            500: {"model": ErrorResponse},
        },
    )
    async def convert(request: Request):
        body = await request.body()
        if not body or not zipfile.is_zipfile(io.BytesIO(body)):
            return _error(400, ErrorResponse(error="request body is not a zip archive"))
        async with gate:
            app.state.active += 1
            try:
                payload = await run_in_threadpool(convert_feed, cfg, base_dir, body)
            except BlockError as exc:
                status = 400 if exc.kind == "zip_split" else 500
                return _error(status, ErrorResponse(error=exc.reason, block=exc.index, kind=exc.kind))
            finally:
                app.state.active -= 1
        return Response(payload, media_type="application/zip")

    return app
