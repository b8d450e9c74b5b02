"""Sybil-subgraph topology: components, looseness, isolation, edge origins."""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .events import REQUEST_SENT, Event
from .features import FeatureState
from .graph import AccountRecord, Edge, SocialGraph

INCIDENTAL = "incidental"
DELIBERATE = "deliberate"

DEFAULT_BURST_THRESHOLD = 10
DEFAULT_BURST_WINDOW_S = 300
DEFAULT_LOOSE_DENSITY = 0.1
DEFAULT_LOOSE_CLUSTERING = 0.1


class UnlabeledAccount(ValueError):
    pass


class MissingOriginEvent(ValueError):
    pass


class DisjointSet:
    """Union by size with path halving over hashable items."""

    def __init__(self, items: Iterable = ()):
        self.parent = {}
        self.size = {}
        for x in items:
            self.add(x)

    def add(self, x):
        if x not in self.parent:
            self.parent[x] = x
            self.size[x] = 1

    def find(self, x):
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True

    def groups(self) -> list:
        out = defaultdict(list)
        for x in self.parent:
            out[self.find(x)].append(x)
        return list(out.values())


@dataclass
class SybilSubgraph:
    nodes: list
    edges: list  # Edge objects with both endpoints Sybil

    def edge_keys(self) -> set:
        return {e.key for e in self.edges}


@dataclass
class ComponentStats:
    size: int
    edge_count: int
    density: Optional[float]
    mean_local_clustering: Optional[float]
    loose: Optional[bool]
    members: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "edge_count": self.edge_count,
            "density": self.density,
            "mean_local_clustering": self.mean_local_clustering,
            "loose": self.loose,
        }


@dataclass
class TopologyReport:
    total_sybils: int
    isolated_fraction: Optional[float]
    components: list
    edge_time_gaps: list  # [hour bucket, count] pairs, ascending
    incidental_edge_fraction: Optional[float]
    sybil_edge_count: int = 0

    def non_trivial(self) -> list:
        return [c for c in self.components if c.size >= 2]

    def size_weighted_density(self, min_size: int = 2) -> Optional[float]:
        comps = [c for c in self.components if c.size >= max(min_size, 2)]
        total = sum(c.size for c in comps)
        if not total:
            return None
        return sum(c.size * c.density for c in comps) / total

    def to_dict(self) -> dict:
        return {
            "total_sybils": self.total_sybils,
            "isolated_fraction": self.isolated_fraction,
            "sybil_edge_count": self.sybil_edge_count,
            "component_count": len(self.components),
            "size_weighted_density": self.size_weighted_density(),
            "incidental_edge_fraction": self.incidental_edge_fraction,
            "edge_time_gaps": [list(p) for p in self.edge_time_gaps],
            # singletons are summarised by isolated_fraction
            "components": [c.to_dict() for c in self.non_trivial()],
        }


def extract_sybil_subgraph(g: SocialGraph, labels: Mapping[str, str], strict: bool = True) -> SybilSubgraph:
    sybils = set()
    for rec in g.accounts():
        lab = labels.get(rec.id)
        if lab is None or lab == "unknown":
            if strict:
                raise UnlabeledAccount(f"account {rec.id!r} has no label")
            continue
        if lab == "sybil":
            sybils.add(rec.id)
    edges = [e for e in g.edges() if e.u in sybils and e.v in sybils]
    edges.sort(key=lambda e: e.key)
    return SybilSubgraph(sorted(sybils), edges)


def connected_components(sg: SybilSubgraph) -> list:
    """Components as sorted tuples, largest first, then by smallest member."""
    ds = DisjointSet(sg.nodes)
    for e in sg.edges:
        ds.union(e.u, e.v)
    comps = [tuple(sorted(c)) for c in ds.groups()]
    comps.sort(key=lambda c: (-len(c), c[0]))
    return comps


def isolated_fraction(sg: SybilSubgraph) -> Optional[float]:
    if not sg.nodes:
        return None
    comps = connected_components(sg)
    return sum(1 for c in comps if len(c) == 1) / len(sg.nodes)


def _subgraph(sg: SybilSubgraph, created_at: Mapping[str, int]) -> SocialGraph:
    g = SocialGraph()
    for u in sg.nodes:
        g.add_account(AccountRecord(u, created_at.get(u, 0), "sybil"))
    for e in sg.edges:
        g.add_edge(e.u, e.v, e.created_at, e.initiator)
    return g


def classify_edge_formation(
    sg: SybilSubgraph,
    events: Iterable[Event],
    burst_threshold: int = DEFAULT_BURST_THRESHOLD,
    burst_window: int = DEFAULT_BURST_WINDOW_S,
) -> dict:
    """Label each Sybil-Sybil edge incidental or deliberate.

    An edge is incidental when the initiator sent at least ``burst_threshold``
    requests (its originating request included) within ``burst_window``
    seconds either side of the originating request.
    """
    initiators = {e.initiator for e in sg.edges}
    sent_times = defaultdict(list)
    pair_times = defaultdict(list)
    for ev in events:
        if ev.type == REQUEST_SENT and ev.src in initiators:
            sent_times[ev.src].append(ev.ts)
            pair_times[(ev.src, ev.dst)].append(ev.ts)
    for times in sent_times.values():
        times.sort()
    for times in pair_times.values():
        times.sort()

    out = {}
    for e in sg.edges:
        other = e.v if e.initiator == e.u else e.u
        times = pair_times.get((e.initiator, other), [])
        i = bisect_right(times, e.created_at)
        if i == 0:
            raise MissingOriginEvent(f"no request_sent {e.initiator!r}->{other!r} before t={e.created_at}")
        t = times[i - 1]
        mine = sent_times[e.initiator]
        n = bisect_right(mine, t + burst_window) - bisect_left(mine, t - burst_window)
        out[e.key] = INCIDENTAL if n >= burst_threshold else DELIBERATE
    return out


def report(
    sg: SybilSubgraph,
    created_at: Mapping[str, int],
    events: Optional[Sequence[Event]] = None,
    burst_threshold: int = DEFAULT_BURST_THRESHOLD,
    burst_window: int = DEFAULT_BURST_WINDOW_S,
    loose_density: float = DEFAULT_LOOSE_DENSITY,
    loose_clustering: float = DEFAULT_LOOSE_CLUSTERING,
) -> TopologyReport:
    """Summarise the Sybil subgraph.

    ``created_at`` maps account ids to creation times (a mapping of ids to
    ``AccountRecord`` also works).  Edge origins are analysed only when the
    event log is supplied.
    """
    created = {}
    for u in sg.nodes:
        if u not in created_at:
            raise KeyError(f"no creation time for {u!r}")
        c = created_at[u]
        created[u] = c.created_at if isinstance(c, AccountRecord) else int(c)

    sub = _subgraph(sg, created)
    stats = []
    for comp in connected_components(sg):
        n = len(comp)
        m = sum(sub.degree(u) for u in comp) // 2
        if n == 1:
            stats.append(ComponentStats(1, 0, None, None, None, comp))
            continue
        density = 2 * m / (n * (n - 1))
        cc = [c for c in (sub.local_clustering(u) for u in comp) if c is not None]
        mean_cc = sum(cc) / len(cc) if cc else None
        loose = density < loose_density and (mean_cc is None or mean_cc < loose_clustering)
        stats.append(ComponentStats(n, m, density, mean_cc, loose, comp))

    gaps = Counter()
    for e in sg.edges:
        delta = e.created_at - max(created[e.u], created[e.v])
        gaps[delta // 3600] += 1

    incidental = None
    if events is not None and sg.edges:
        origins = classify_edge_formation(sg, events, burst_threshold, burst_window)
        incidental = sum(1 for v in origins.values() if v == INCIDENTAL) / len(origins)

    total = len(sg.nodes)
    singletons = sum(1 for c in stats if c.size == 1)
    return TopologyReport(
        total_sybils=total,
        isolated_fraction=singletons / total if total else None,
        components=stats,
        edge_time_gaps=sorted(gaps.items()),
        incidental_edge_fraction=incidental,
        sybil_edge_count=len(sg.edges),
    )


def graph_from_events(events: Iterable[Event]) -> SocialGraph:
    """Replay a log into the accepted-friendship graph."""
    st = FeatureState()
    for e in events:
        st.apply_event(e)
    return st.graph
