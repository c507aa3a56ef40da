"""Prometheus metric definitions."""

import logging
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

from prometheus_client import REGISTRY, Counter, Gauge, write_to_textfile

logger = logging.getLogger(__name__)

# ============ Remote Backends ============
remote_requests_total = Counter(
    'editimpact_remote_requests_total',
    'Remote backend requests',
    ['service', 'status']
)

# ============ Caches ============
cache_lookups_total = Counter(
    'editimpact_cache_lookups_total',
    'Cache lookups',
    ['cache', 'result']
)

# ============ Embeddings ============
embedding_misses_total = Counter(
    'editimpact_embedding_misses_total',
    'Texts missing from a file embedding table',
    ['provider']
)

# ============ Scoring ============
scorer_calls_total = Counter(
    'editimpact_scorer_calls_total',
    'Disfluency evaluations',
    ['scorer']
)

# ============ Pipeline Stages ============
stage_duration_seconds = Gauge(
    'editimpact_stage_duration_seconds',
    'Duration of the last run of a pipeline stage',
    ['stage']
)
stage_records = Gauge(
    'editimpact_stage_records',
    'Records produced by the last run of a pipeline stage',
    ['stage']
)


@contextmanager
def track_stage(stage: str) -> Iterator[dict]:
    """
    Time a pipeline stage.

    The yielded dict may receive a ``records`` count, exported as a gauge.
    """
    info: dict = {}
    started = time.monotonic()
    logger.info(f"Stage '{stage}' started")
    try:
        yield info
    finally:
        elapsed = time.monotonic() - started
        stage_duration_seconds.labels(stage=stage).set(elapsed)
        if "records" in info:
            stage_records.labels(stage=stage).set(info["records"])
        logger.info(f"Stage '{stage}' finished in {elapsed:.2f}s ({info.get('records', 0)} records)")


def write_metrics(path: Path) -> None:
    """Dump the registry in the text exposition format."""
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        write_to_textfile(str(path), REGISTRY)
        logger.debug(f"Wrote metrics to {path}")
    except Exception as e:
        logger.error(f"Failed to write metrics to {path}: {e}")
