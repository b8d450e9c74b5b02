"""Ingestion, configuration, checkpointing, batch runs and the HTTP service."""

from .ingest import IngestResult, ParseError, ingest
from .runner import run_detect
