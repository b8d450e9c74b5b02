"""Per-account invitation features maintained online.

Rate-like features (outgoing requests, incoming requests) are counted over a
trailing window ``(now - W, now]``; ratio-like features are lifetime
counters.  Clustering is read from the live friendship graph, whose triangle
counts are updated on every accepted request.
"""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass
from typing import Optional

from .events import ACCOUNT_CREATED, REQUEST_ACCEPTED, REQUEST_REJECTED, REQUEST_SENT, Event, MalformedEvent
from .graph import AccountRecord, SocialGraph

DEFAULT_WINDOW_S = 3600
DEFAULT_MIN_SENT = 5


class FeatureError(ValueError):
    pass


class OutOfOrderEvent(FeatureError):
    pass


class UnknownAccount(FeatureError, KeyError):
    def __str__(self):
        return ValueError.__str__(self)


@dataclass(frozen=True, slots=True)
class FeatureVector:
    invite_rate: float
    outgoing_accept_ratio: Optional[float]
    incoming_request_count: int
    local_clustering: Optional[float]
    outgoing_sent_total: int

    def to_dict(self) -> dict:
        return asdict(self)


FEATURE_NAMES = tuple(FeatureVector.__dataclass_fields__)


def _count_after(times: deque, cutoff: int) -> int:
    n = len(times)
    for t in times:
        if t > cutoff:
            break
        n -= 1
    return n


class FeatureState:
    def __init__(self, window_s: int = DEFAULT_WINDOW_S, min_sent: int = DEFAULT_MIN_SENT, strict: bool = True):
        if window_s <= 0:
            raise ValueError("window must be positive")
        if min_sent < 1:
            raise ValueError("min_sent must be at least 1")
        self.window_s = int(window_s)
        self.min_sent = int(min_sent)
        self.strict = strict
        self.graph = SocialGraph()
        self.last_ts = 0
        self.applied = 0
        self.out_times: dict[str, deque] = {}
        self.in_times: dict[str, deque] = {}
        self.sent: dict[str, int] = {}
        self.accepted: dict[str, int] = {}
        self.pending: dict[tuple, int] = {}

    def _known(self, a: str) -> None:
        if a not in self.sent:
            raise UnknownAccount(f"unknown account {a!r}")

    def apply_event(self, e: Event) -> bool:
        """Fold one event into the state.

        Returns False when a lenient state drops an out-of-order event.
        """
        ts = e.ts
        if ts < self.last_ts:
            if self.strict:
                raise OutOfOrderEvent(f"event at t={ts} after t={self.last_ts}")
            return False
        kind = e.type
        if kind == REQUEST_SENT:
            src, dst = e.src, e.dst
            try:
                out = self.out_times[src]
                inc = self.in_times[dst]
            except KeyError:
                self._known(src)
                self._known(dst)
                raise
            cutoff = ts - self.window_s
            out.append(ts)
            while out[0] <= cutoff:
                out.popleft()
            inc.append(ts)
            while inc[0] <= cutoff:
                inc.popleft()
            self.sent[src] += 1
            pair = (src, dst)
            self.pending[pair] = self.pending.get(pair, 0) + 1
        elif kind == REQUEST_ACCEPTED or kind == REQUEST_REJECTED:
            self._known(e.src)
            self._known(e.dst)
            pair = (e.src, e.dst)
            n = self.pending.get(pair)
            if not n:
                raise MalformedEvent(f"{kind} at t={ts} without a pending request {pair}")
            if n == 1:
                del self.pending[pair]
            else:
                self.pending[pair] = n - 1
            if kind == REQUEST_ACCEPTED:
                self.accepted[e.src] += 1
                if not self.graph.has_edge(e.src, e.dst):
                    self.graph.add_edge(e.src, e.dst, ts, e.src)
        elif kind == ACCOUNT_CREATED:
            if e.src in self.sent:
                raise FeatureError(f"account {e.src!r} created twice")
            self.graph.add_account(AccountRecord(e.src, ts))
            self.out_times[e.src] = deque()
            self.in_times[e.src] = deque()
            self.sent[e.src] = 0
            self.accepted[e.src] = 0
        else:
            raise MalformedEvent(f"unknown event type {kind!r}")
        self.last_ts = ts
        self.applied += 1
        return True

    def snapshot(self, u: str, now: Optional[int] = None) -> FeatureVector:
        """Features of ``u`` as of ``now`` (defaults to the last applied time)."""
        if now is None:
            now = self.last_ts
        elif now < self.last_ts:
            raise ValueError(f"cannot read at t={now} before last applied t={self.last_ts}")
        try:
            sent = self.sent[u]
        except KeyError:
            raise UnknownAccount(f"unknown account {u!r}") from None
        cutoff = now - self.window_s
        ratio = self.accepted[u] / sent if sent >= self.min_sent else None
        return FeatureVector(
            _count_after(self.out_times[u], cutoff) * 3600 / self.window_s,
            ratio,
            _count_after(self.in_times[u], cutoff),
            self.graph.local_clustering(u),
            sent,
        )

    def accounts(self) -> list:
        return list(self.sent)

    def __contains__(self, u: str) -> bool:
        return u in self.sent


def apply_event(st: FeatureState, e: Event) -> FeatureState:
    st.apply_event(e)
    return st


def snapshot(st: FeatureState, u: str, now: Optional[int] = None) -> FeatureVector:
    return st.snapshot(u, now)
