"""Batch detection over an event log, with checkpoint/resume."""

from __future__ import annotations

import hashlib
import json
import os
import resource
import time
from pathlib import Path
from typing import Optional

from ..detector import ClassifierConfig, StreamDetector
from . import checkpoint
from .ingest import IngestResult, dumps_line, ingest, write_atomic

VERDICTS = "verdicts.jsonl"
BANS = "bans.jsonl"
METRICS = "metrics.json"


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _peak_rss_mb() -> float:
    # ru_maxrss is KiB on Linux
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


def run_detect(
    log,
    cfg: ClassifierConfig,
    out_dir,
    strict: bool = False,
    checkpoint_path=None,
    checkpoint_every: Optional[int] = None,
    stop_after: Optional[int] = None,
    resume=None,
) -> dict:
    """Classify every event of ``log`` and write verdicts, bans and metrics.

    Verdicts stream into ``verdicts.jsonl.partial`` and are renamed into
    place once the log is exhausted.  ``stop_after`` ends the run early
    (after writing a checkpoint) to emulate an interruption; ``resume``
    continues from a checkpoint written by an earlier run on the same log and
    config.
    """
    t_start = time.perf_counter()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    partial_path = out_dir / (VERDICTS + ".partial")
    log_digest = _file_digest(log)

    res: IngestResult = ingest(log, strict)
    t_ingested = time.perf_counter()
    events = res.events

    start = 0
    if resume is not None:
        doc = checkpoint.load(resume)
        if doc["config_hash"] != cfg.digest():
            raise checkpoint.CheckpointError("checkpoint was written with a different classifier config")
        if doc["log_sha256"] != log_digest:
            raise checkpoint.CheckpointError("checkpoint was written for a different event log")
        det = checkpoint.restore_state(doc["state"], cfg, strict)
        start = doc["events_applied"]
        fh = open(partial_path, "r+", encoding="utf-8", newline="\n")
        fh.seek(doc["verdict_bytes"])
        fh.truncate()
    else:
        det = StreamDetector(cfg, strict)
        fh = open(partial_path, "w", encoding="utf-8", newline="\n")

    if checkpoint_path is None and (checkpoint_every or stop_after):
        checkpoint_path = out_dir / "checkpoint.json"
    applied_at_start = det.features.applied
    calls_before = det.classify_calls
    t_proc = time.perf_counter()
    try:
        process = det.process
        buf = []
        for i in range(start, len(events)):
            for v in process(events[i]):
                buf.append(dumps_line(v.to_dict()))
            done = i + 1
            if not (checkpoint_every or stop_after):
                continue
            at_checkpoint = checkpoint_every and done % checkpoint_every == 0
            if at_checkpoint or done == stop_after:
                fh.write("".join(buf))
                buf.clear()
                fh.flush()
                checkpoint.save(
                    checkpoint_path,
                    det,
                    events_applied=done,
                    verdict_bytes=fh.tell(),
                    log_sha256=log_digest,
                )
                if done == stop_after:
                    return {"stopped_after": done, "checkpoint": str(checkpoint_path)}
        fh.write("".join(buf))
    finally:
        fh.close()
    t_done = time.perf_counter()

    os.replace(partial_path, out_dir / VERDICTS)
    write_atomic(
        out_dir / BANS,
        "".join(dumps_line({"account": u, "first_flagged": t}) for u, t in det.ban_list()),
    )
    processed = len(events) - start
    dropped = processed - (det.features.applied - applied_at_start)
    proc_s = t_done - t_proc
    classify_s = det.classify_ns / 1e9
    calls = det.classify_calls - calls_before
    metrics = {
        "events": len(events),
        "events_processed": processed,
        "skipped_lines": res.skipped,
        "dropped_out_of_order": dropped,
        "verdicts_sybil": det.n_sybil_verdicts,
        "verdicts_benign": det.n_benign_verdicts,
        "bans": len(det.banned),
        "classify_calls": det.classify_calls,
        "classify_seconds": classify_s,
        "classify_per_sec": calls / classify_s if classify_s else None,
        "events_per_sec": processed / proc_s if proc_s else None,
        "ingest_seconds": t_ingested - t_start,
        "process_seconds": proc_s,
        "total_seconds": time.perf_counter() - t_start,
        "peak_rss_mb": _peak_rss_mb(),
        "resumed_from": start,
    }
    write_atomic(out_dir / METRICS, json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    return metrics
