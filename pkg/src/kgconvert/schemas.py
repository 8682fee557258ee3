"""Pydantic models for the JSON documents exchanged by the service, CLI and bench."""
from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, model_validator


class _Camel(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")


class StatsRecord(_Camel):
    gtfs_total_rows: int = Field(ge=0, alias="gtfsTotalRows")
    lifting_time_s: float = Field(ge=0, alias="liftingTimeS")
    lowering_time_s: float = Field(ge=0, alias="loweringTimeS")
    conversion_time: str = Field(pattern=r"^\d+:[0-5]\d$", alias="conversionTime")
    num_triples: int = Field(ge=0, alias="numTriples")
    output_size_mb: float = Field(ge=0, alias="outputSizeMB")


class ErrorResponse(_Camel):
    error: str
    block: str | None = None
    kind: str | None = None


class BenchRow(_Camel):
    scale: int = Field(ge=1)
    gtfs_total_rows: int = Field(ge=0, alias="gtfsTotalRows")
    lifting_time_ms: float = Field(ge=0, alias="liftingTimeMs")
    lowering_time_ms: float = Field(ge=0, alias="loweringTimeMs")
    conversion_time_ms: float = Field(ge=0, alias="conversionTimeMs")
    num_triples: int = Field(ge=0, alias="numTriples")
    output_size_bytes: int = Field(ge=0, alias="outputSizeBytes")
    join_variant_time_ms: float = Field(ge=0, alias="joinVariantTimeMs")
    iri_pattern_variant_time_ms: float = Field(ge=0, alias="iriPatternVariantTimeMs")


class BenchReport(_Camel):
    seed: int
    join_strategy: str = Field(alias="joinStrategy")
    rows: list[BenchRow]

    @model_validator(mode="after")
    def _increasing(self):
        scales = [r.scale for r in self.rows]
        if any(a >= b for a, b in zip(scales, scales[1:])):
            raise ValueError("scales must be strictly increasing")
        return self
