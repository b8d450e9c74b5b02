"""Accepted-friendship graph with edge timestamps.

Triangle counts per node are maintained as edges arrive, so local clustering
is an O(1) read.  Adding an edge costs O(min(deg(u), deg(v))).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

LABELS = ("sybil", "normal", "unknown")


class GraphError(ValueError):
    pass


class DuplicateAccount(GraphError):
    pass


class MissingAccount(GraphError, KeyError):
    def __str__(self):
        return ValueError.__str__(self)


class SelfLoop(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class TimeBeforeCreation(GraphError):
    pass


@dataclass(frozen=True)
class AccountRecord:
    id: str
    created_at: int
    label: str = "unknown"


@dataclass(frozen=True)
class Edge:
    u: str
    v: str
    created_at: int
    initiator: str

    @property
    def key(self) -> tuple:
        return edge_key(self.u, self.v)


def edge_key(u: str, v: str) -> tuple:
    return (u, v) if u < v else (v, u)


class SocialGraph:
    """Undirected friendship graph; direction survives only as ``Edge.initiator``."""

    def __init__(self):
        self._accounts: dict[str, AccountRecord] = {}
        self._adj: dict[str, set] = {}
        self._edges: dict[tuple, Edge] = {}
        self._triangles: dict[str, int] = {}

    # -- mutation ---------------------------------------------------------

    def add_account(self, rec: AccountRecord) -> "SocialGraph":
        if not rec.id:
            raise GraphError("account id must be nonempty")
        if rec.id in self._accounts:
            raise DuplicateAccount(f"account {rec.id!r} already exists")
        if rec.created_at < 0:
            raise GraphError("created_at must be non-negative")
        self._accounts[rec.id] = rec
        self._adj[rec.id] = set()
        self._triangles[rec.id] = 0
        return self

    def add_edge(self, u: str, v: str, t: int, initiator: Optional[str] = None) -> "SocialGraph":
        if initiator is None:
            initiator = u
        if u == v:
            raise SelfLoop(f"self-loop on {u!r}")
        for a in (u, v):
            if a not in self._accounts:
                raise MissingAccount(f"unknown account {a!r}")
        if initiator not in (u, v):
            raise GraphError(f"initiator {initiator!r} is not an endpoint")
        key = edge_key(u, v)
        if key in self._edges:
            raise DuplicateEdge(f"edge {key} already exists")
        if t < self._accounts[u].created_at or t < self._accounts[v].created_at:
            raise TimeBeforeCreation(f"edge {key} at t={t} predates an endpoint")

        nu, nv = self._adj[u], self._adj[v]
        common = nu & nv if len(nu) <= len(nv) else nv & nu
        if common:
            c = len(common)
            tri = self._triangles
            tri[u] += c
            tri[v] += c
            for w in common:
                tri[w] += 1
        nu.add(v)
        nv.add(u)
        self._edges[key] = Edge(key[0], key[1], t, initiator)
        return self

    # -- queries ----------------------------------------------------------

    def __contains__(self, u: str) -> bool:
        return u in self._accounts

    def account(self, u: str) -> AccountRecord:
        try:
            return self._accounts[u]
        except KeyError:
            raise MissingAccount(f"unknown account {u!r}") from None

    def accounts(self) -> Iterator[AccountRecord]:
        return iter(self._accounts.values())

    @property
    def account_count(self) -> int:
        return len(self._accounts)

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def edges(self) -> Iterator[Edge]:
        return iter(self._edges.values())

    def edge(self, u: str, v: str) -> Optional[Edge]:
        return self._edges.get(edge_key(u, v))

    def has_edge(self, u: str, v: str) -> bool:
        return edge_key(u, v) in self._edges

    def neighbors(self, u: str) -> frozenset:
        try:
            return frozenset(self._adj[u])
        except KeyError:
            raise MissingAccount(f"unknown account {u!r}") from None

    def degree(self, u: str) -> int:
        try:
            return len(self._adj[u])
        except KeyError:
            raise MissingAccount(f"unknown account {u!r}") from None

    def triangles(self, u: str) -> int:
        """Number of edges among the neighbors of ``u``."""
        try:
            return self._triangles[u]
        except KeyError:
            raise MissingAccount(f"unknown account {u!r}") from None

    def local_clustering(self, u: str) -> Optional[float]:
        """2*T(u) / (d(u)*(d(u)-1)), or None when d(u) < 2."""
        d = self.degree(u)
        if d < 2:
            return None
        return 2 * self._triangles[u] / (d * (d - 1))

    def copy(self) -> "SocialGraph":
        g = SocialGraph()
        g._accounts = dict(self._accounts)
        g._adj = {a: set(n) for a, n in self._adj.items()}
        g._edges = dict(self._edges)
        g._triangles = dict(self._triangles)
        return g

    def __eq__(self, other) -> bool:
        if not isinstance(other, SocialGraph):
            return NotImplemented
        return (
            self._accounts == other._accounts
            and self._edges == other._edges
            and self._adj == other._adj
            and self._triangles == other._triangles
        )


def add_account(g: SocialGraph, rec: AccountRecord) -> SocialGraph:
    return g.add_account(rec)


def add_edge(g: SocialGraph, u: str, v: str, t: int, initiator: Optional[str] = None) -> SocialGraph:
    return g.add_edge(u, v, t, initiator)


def neighbors(g: SocialGraph, u: str) -> frozenset:
    return g.neighbors(u)


def local_clustering(g: SocialGraph, u: str) -> Optional[float]:
    return g.local_clustering(u)
