"""BSS topology: terminals around one AP, audibility edges, one-hop/two-hop partitions.

Topology strings use groups of mutually audible terminals separated by ``|``,
e.g. ``{A,B|B,C|D}``: A-B and B-C are audible pairs, D hears nobody (except the
AP).  Every terminal is one hop from the AP, so any two terminals are at graph
distance 1 (audible) or 2 (hidden, reachable via the AP).
"""

from __future__ import annotations

import re
from dataclasses import dataclass


class TopologyError(ValueError):
    """Malformed topology specification."""


@dataclass(frozen=True)
class NeighborPartition:
    terminal_id: int
    oh_set: frozenset
    th_set: frozenset


class TopologyGraph:
    """Undirected audibility graph over the terminals of a single-AP BSS.

    Immutable after construction; safe to share across threads.
    """

    def __init__(self, names, edges):
        self.names = tuple(names)
        self.n = len(self.names)
        if self.n == 0:
            raise TopologyError("topology has no terminals")
        norm = set()
        for a, b in edges:
            if a == b:
                raise TopologyError(f"self-edge on terminal {a}")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise TopologyError(f"edge ({a},{b}) out of range")
            norm.add((min(a, b), max(a, b)))
        self.edges = frozenset(norm)
        adj = [set() for _ in range(self.n)]
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        self._adj = tuple(frozenset(s) for s in adj)

    def __repr__(self):
        return f"TopologyGraph(names={self.names!r}, edges={sorted(self.edges)!r})"

    def __eq__(self, other):
        return (
            isinstance(other, TopologyGraph)
            and self.names == other.names
            and self.edges == other.edges
        )

    def __hash__(self):
        return hash((self.names, self.edges))

    def index(self, name):
        return self.names.index(name)

    def oh_indices(self, n):
        """Indices of terminals audible to terminal ``n`` (its one-hop set)."""
        if not 0 <= n < self.n:
            raise IndexError(f"terminal {n} out of range (N={self.n})")
        return self._adj[n]

    def partition(self, n):
        """Split the other N-1 terminals into one-hop and two-hop sets."""
        oh = self.oh_indices(n)
        th = frozenset(m for m in range(self.n) if m != n and m not in oh)
        return NeighborPartition(terminal_id=n, oh_set=oh, th_set=th)


_GROUP_RE = re.compile(r"^[A-Za-z0-9_]+$")


def parse_topology(spec):
    """Parse a topology string such as ``{A,B|B,C|D}`` into a TopologyGraph.

    Two terminals share an audibility edge iff they co-occur in at least one
    group.  Terminal names map to indices in first-appearance order.
    """
    s = spec.strip()
    if s.startswith("{") and s.endswith("}"):
        s = s[1:-1]
    elif "{" in s or "}" in s:
        raise TopologyError(f"unbalanced braces in topology spec {spec!r}")
    if not s.strip():
        raise TopologyError("empty topology spec")
    names = []
    edges = set()
    for group in s.split("|"):
        members = [tok.strip() for tok in group.split(",")]
        if any(not m for m in members):
            raise TopologyError(f"empty terminal name in group {group!r}")
        for m in members:
            if not _GROUP_RE.match(m):
                raise TopologyError(f"bad terminal name {m!r}")
        if len(set(members)) != len(members):
            raise TopologyError(f"duplicate terminal within group {group!r}")
        for m in members:
            if m not in names:
                names.append(m)
        idx = [names.index(m) for m in members]
        for i, a in enumerate(idx):
            for b in idx[i + 1:]:
                edges.add((a, b))
    return TopologyGraph(names, edges)
