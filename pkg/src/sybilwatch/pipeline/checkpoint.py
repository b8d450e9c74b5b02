"""Versioned JSON checkpoints of a running detector."""

from __future__ import annotations

import json
from collections import deque

from ..detector import ClassifierConfig, StreamDetector, Verdict
from ..graph import AccountRecord
from .ingest import write_atomic

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def dump_state(det: StreamDetector) -> dict:
    st = det.features
    g = st.graph
    return {
        "last_applied_ts": st.last_ts,
        "applied": st.applied,
        "accounts": [[r.id, r.created_at] for r in g.accounts()],
        "edges": [[e.u, e.v, e.created_at, e.initiator] for e in g.edges()],
        "out_times": {u: list(t) for u, t in st.out_times.items() if t},
        "in_times": {u: list(t) for u, t in st.in_times.items() if t},
        "sent": {u: n for u, n in st.sent.items() if n},
        "accepted": {u: n for u, n in st.accepted.items() if n},
        "pending": [[a, b, n] for (a, b), n in st.pending.items()],
        "banned": [[u, t] for u, t in det.banned.items()],
        "latest": [v.to_dict() for v in det.latest.values()],
        "counters": {
            "sybil_verdicts": det.n_sybil_verdicts,
            "benign_verdicts": det.n_benign_verdicts,
            "classify_calls": det.classify_calls,
        },
    }


def restore_state(d: dict, cfg: ClassifierConfig, strict: bool = True) -> StreamDetector:
    det = StreamDetector(cfg, strict)
    st = det.features
    for u, created in d["accounts"]:
        st.graph.add_account(AccountRecord(u, created))
        st.out_times[u] = deque(d["out_times"].get(u, ()))
        st.in_times[u] = deque(d["in_times"].get(u, ()))
        st.sent[u] = d["sent"].get(u, 0)
        st.accepted[u] = d["accepted"].get(u, 0)
    for u, v, t, initiator in d["edges"]:
        st.graph.add_edge(u, v, t, initiator)
    st.pending = {(a, b): n for a, b, n in d["pending"]}
    st.last_ts = d["last_applied_ts"]
    st.applied = d["applied"]
    det.banned = {u: t for u, t in d["banned"]}
    det.latest = {v["account"]: Verdict.from_dict(v) for v in d["latest"]}
    c = d["counters"]
    det.n_sybil_verdicts = c["sybil_verdicts"]
    det.n_benign_verdicts = c["benign_verdicts"]
    det.classify_calls = c["classify_calls"]
    return det


def save(path, det: StreamDetector, **extra) -> None:
    doc = {"format_version": FORMAT_VERSION, "config_hash": det.cfg.digest()}
    doc.update(extra)
    doc["state"] = dump_state(det)
    write_atomic(path, json.dumps(doc, separators=(",", ":")))


def load(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"unreadable checkpoint: {exc.msg}") from None
    version = doc.get("format_version") if isinstance(doc, dict) else None
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {version!r}")
    return doc
