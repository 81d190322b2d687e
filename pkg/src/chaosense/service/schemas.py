"""Request/response models for the service endpoints."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class OpRequest(BaseModel):
    """Config mapping as it would appear in a `key = value` file, plus an
    optional seed override."""

    config: dict[str, str] = Field(default_factory=dict)
    seed: Optional[int] = None


class ReconstructRequest(OpRequest):
    """Reconstruction from a posted measurement record; when the record is
    omitted the server runs a fully seeded trial. A posted truth vector is
    only used for scoring."""

    measurements_csv: Optional[str] = None
    truth_csv: Optional[str] = None


class SweepRequest(OpRequest):
    workers: int = 1


class OpResponse(BaseModel):
    """Named CSV/text payloads plus headline numbers."""

    files: dict[str, str]
    summary: dict


class HealthResponse(BaseModel):
    status: str
    version: str
