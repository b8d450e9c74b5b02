"""Reading and writing the line-delimited JSON formats."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

from ..events import ACCOUNT_CREATED, LABELS, Event, MalformedEvent, decode, decode_obj, encode, sort_key

Source = Union[str, os.PathLike, Iterable]


class ParseError(MalformedEvent):
    pass


@dataclass
class IngestResult:
    events: list
    skipped: int = 0
    errors: list = field(default_factory=list)  # (line number, message)


def _lines(source: Source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from enumerate(fh, 1)
    else:
        for i, line in enumerate(source, 1):
            yield i, line.decode("utf-8") if isinstance(line, bytes) else line


def ingest(source: Source, strict: bool = True) -> IngestResult:
    """Parse an event log and sort it by (ts, type, from, to), then line.

    Strict mode raises ``ParseError`` on the first bad line; lenient mode
    skips it and records ``(line, message)``.
    """
    events, errors = [], []
    for lineno, line in _lines(source):
        try:
            events.append(decode(line))
        except MalformedEvent as exc:
            if strict:
                raise ParseError(str(exc), lineno) from None
            errors.append((lineno, str(exc)))
    events.sort(key=sort_key)
    return IngestResult(events, len(errors), errors)


def write_atomic(path: Union[str, os.PathLike], text: str) -> None:
    """Write ``text`` to a temp file next to ``path`` and rename it in place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_line(obj) -> str:
    return json.dumps(obj, separators=(",", ":")) + "\n"


def write_events(path, events: Iterable[Event]) -> None:
    write_atomic(path, "".join(encode(e) + "\n" for e in events))


# -- ground truth ------------------------------------------------------------


@dataclass
class TruthFile:
    labels: dict
    created_at: dict
    intentional_edges: set = field(default_factory=set)
    accidental_edges: set = field(default_factory=set)


def write_truth(path, workload) -> None:
    from ..simulator import truth_events

    lines = [encode(e) + "\n" for e in truth_events(workload)]
    for origin, pairs in (("intentional", workload.truth.intentional_edges), ("accidental", workload.truth.accidental_edges)):
        for a, b in sorted(pairs):
            lines.append(dumps_line({"type": "sybil_edge", "a": a, "b": b, "origin": origin}))
    write_atomic(path, "".join(lines))


def read_truth(source: Source) -> TruthFile:
    """Labels (and, when present, Sybil edge origins) from a ground-truth file."""
    truth = TruthFile({}, {})
    for lineno, line in _lines(source):
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
        if isinstance(d, dict) and d.get("type") == "sybil_edge":
            origin = d.get("origin")
            pair = tuple(sorted((d.get("a"), d.get("b"))))
            if origin == "intentional":
                truth.intentional_edges.add(pair)
            elif origin == "accidental":
                truth.accidental_edges.add(pair)
            else:
                raise ParseError(f"unknown edge origin {origin!r}", lineno)
            continue
        try:
            e = decode_obj(d)
        except MalformedEvent as exc:
            raise ParseError(str(exc), lineno) from None
        if e.type != ACCOUNT_CREATED or e.label not in LABELS:
            raise ParseError("ground-truth records must be labeled account_created events", lineno)
        truth.labels[e.src] = e.label
        truth.created_at[e.src] = e.ts
    return truth


def read_bans(source: Source) -> dict:
    """Ban file as {account: first_flagged_ts}."""
    bans = {}
    for lineno, line in _lines(source):
        try:
            d = json.loads(line)
            bans[d["account"]] = int(d["first_flagged"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise ParseError("bad ban record", lineno) from None
    return bans


def read_verdicts(source: Source) -> list:
    from ..detector import Verdict

    out = []
    for lineno, line in _lines(source):
        try:
            out.append(Verdict.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"bad verdict record: {exc}", lineno) from None
    return out
