"""HTTP service wrapping the measurement/reconstruction/analysis operations.

Endpoints take the same flat config mappings the CLI reads from disk and
return the rendered output files inline, so a thin client can write them
wherever it likes. Runs are synchronous: this is a desk-scale compute
service, and a sweep request simply holds its connection until done.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, ops
from ..configfile import ConfigError
from ..systems import DivergenceError
from .schemas import (
    HealthResponse,
    OpRequest,
    OpResponse,
    ReconstructRequest,
    SweepRequest,
)


def create_app() -> FastAPI:
    app = FastAPI(
        title="chaosense",
        description="Chaotic-modulation analog-to-information conversion service",
        version=__version__,
    )

    @app.exception_handler(ConfigError)
    @app.exception_handler(ValueError)
    async def _bad_request(_request: Request, exc: Exception):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(DivergenceError)
    async def _divergence(_request: Request, exc: DivergenceError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/measure", response_model=OpResponse)
    def measure(req: OpRequest):
        files, summary = ops.op_measure(req.config, req.seed)
        return OpResponse(files=files, summary=summary)

    @app.post("/reconstruct", response_model=OpResponse)
    def reconstruct(req: ReconstructRequest):
        files, summary = ops.op_reconstruct(
            req.config, req.seed, req.measurements_csv, req.truth_csv)
        return OpResponse(files=files, summary=summary)

    @app.post("/slle", response_model=OpResponse)
    def slle(req: OpRequest):
        files, summary = ops.op_slle(req.config, req.seed)
        return OpResponse(files=files, summary=summary)

    @app.post("/bandwidth", response_model=OpResponse)
    def bandwidth(req: OpRequest):
        files, summary = ops.op_bandwidth(req.config, req.seed)
        return OpResponse(files=files, summary=summary)

    @app.post("/sweep", response_model=OpResponse)
    def sweep(req: SweepRequest):
        files, summary = ops.op_sweep(req.config, req.seed, workers=req.workers)
        return OpResponse(files=files, summary=summary)

    return app


app = create_app()
