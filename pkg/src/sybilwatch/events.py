"""Event records and their line-delimited JSON wire form."""

from __future__ import annotations

import json
from typing import NamedTuple, Optional

ACCOUNT_CREATED = "account_created"
REQUEST_SENT = "request_sent"
REQUEST_ACCEPTED = "request_accepted"
REQUEST_REJECTED = "request_rejected"

# Canonical order of event types sharing a timestamp: accounts exist before
# anything references them, and responses resolve a pair before new requests.
TYPE_RANK = {
    ACCOUNT_CREATED: 0,
    REQUEST_ACCEPTED: 1,
    REQUEST_REJECTED: 2,
    REQUEST_SENT: 3,
}
EVENT_TYPES = frozenset(TYPE_RANK)
LABELS = ("sybil", "normal")
MAX_ID_BYTES = 64


class Event(NamedTuple):
    """One social action.

    ``src`` is the account id for ``account_created`` and the requester
    (``from``) otherwise; ``dst`` is the request receiver (``to``).
    """

    type: str
    ts: int
    src: str
    dst: Optional[str] = None
    label: Optional[str] = None


class MalformedEvent(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


def sort_key(e: Event) -> tuple:
    return (e.ts, TYPE_RANK[e.type], e.src, e.dst or "")


def encode(e: Event) -> str:
    if e.type == ACCOUNT_CREATED:
        d = {"type": e.type, "ts": e.ts, "id": e.src}
        if e.label is not None:
            d["label"] = e.label
    else:
        d = {"type": e.type, "ts": e.ts, "from": e.src, "to": e.dst}
    return json.dumps(d, separators=(",", ":"))


def _account_id(value, field: str) -> str:
    if not isinstance(value, str) or not value:
        raise MalformedEvent(f"field {field!r} must be a nonempty string")
    if len(value.encode("utf-8")) > MAX_ID_BYTES:
        raise MalformedEvent(f"field {field!r} exceeds {MAX_ID_BYTES} bytes")
    return value


def decode_obj(d) -> Event:
    if not isinstance(d, dict):
        raise MalformedEvent("record is not an object")
    kind = d.get("type")
    if kind not in EVENT_TYPES:
        raise MalformedEvent(f"unknown event type {kind!r}")
    ts = d.get("ts")
    if not isinstance(ts, int) or isinstance(ts, bool) or ts < 0:
        raise MalformedEvent("field 'ts' must be a non-negative integer")
    if kind == ACCOUNT_CREATED:
        label = d.get("label")
        if label is not None and label not in LABELS:
            raise MalformedEvent(f"unknown label {label!r}")
        return Event(kind, ts, _account_id(d.get("id"), "id"), None, label)
    src = _account_id(d.get("from"), "from")
    dst = _account_id(d.get("to"), "to")
    if src == dst:
        raise MalformedEvent("request from an account to itself")
    return Event(kind, ts, src, dst)


def decode(line: str) -> Event:
    try:
        d = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedEvent(f"invalid JSON: {exc.msg}") from None
    return decode_obj(d)
