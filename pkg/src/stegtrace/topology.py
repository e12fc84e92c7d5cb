"""Network graphs and deterministic shortest-path routing.

All links have unit cost. Among equal-cost paths the lexicographically
smallest node sequence is chosen, so routes are stable across runs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

from .errors import InvalidParameterError, StegTraceError

NodeId = int
Route = tuple[NodeId, ...]


@dataclass(frozen=True)
class Topology:
    node_count: int
    edges: frozenset[tuple[int, int]]
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        if self.node_count < 1:
            raise InvalidParameterError("topology needs at least one node")
        for a, b in self.edges:
            if a == b:
                raise InvalidParameterError(f"self-loop on node {a}")
            if not (0 <= a < self.node_count and 0 <= b < self.node_count):
                raise InvalidParameterError(f"edge ({a}, {b}) references a missing node")
            if a > b:
                raise InvalidParameterError(f"edge ({a}, {b}) is not normalized")
        if len(self._bfs(0)) != self.node_count:
            raise InvalidParameterError("topology is not connected")

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable[tuple[int, int]], name: str = "custom") -> Topology:
        """Build a topology from an edge list, rejecting duplicates and self-loops."""
        normalized: set[tuple[int, int]] = set()
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise InvalidParameterError(f"self-loop on node {a}")
            pair = (min(a, b), max(a, b))
            if pair in normalized:
                raise InvalidParameterError(f"duplicate edge {pair}")
            normalized.add(pair)
        return cls(node_count, frozenset(normalized), name)

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        nbrs: list[list[int]] = [[] for _ in range(self.node_count)]
        for a, b in self.edges:
            nbrs[a].append(b)
            nbrs[b].append(a)
        return tuple(tuple(sorted(n)) for n in nbrs)

    @cached_property
    def _distance_cache(self) -> dict[int, dict[int, int]]:
        return {}

    def _bfs(self, root: int) -> dict[int, int]:
        # Runs before adjacency is safe to cache during __post_init__ validation.
        nbrs: dict[int, list[int]] = {}
        for a, b in self.edges:
            nbrs.setdefault(a, []).append(b)
            nbrs.setdefault(b, []).append(a)
        dist = {root: 0}
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v in nbrs.get(u, ()):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def distances_from(self, node: NodeId) -> dict[int, int]:
        self.check_node(node)
        cache = self._distance_cache
        if node not in cache:
            dist = {node: 0}
            queue = deque([node])
            adj = self.adjacency
            while queue:
                u = queue.popleft()
                for v in adj[u]:
                    if v not in dist:
                        dist[v] = dist[u] + 1
                        queue.append(v)
            cache[node] = dist
        return cache[node]

    def check_node(self, node: NodeId) -> None:
        if not (isinstance(node, int) and 0 <= node < self.node_count):
            raise InvalidParameterError(f"node {node!r} is not in a {self.node_count}-node topology")

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


def make_line(n: int) -> Topology:
    """Chain of ``n`` nodes: 0 - 1 - ... - n-1."""
    if n < 2:
        raise InvalidParameterError(f"line topology needs n >= 2, got {n}")
    return Topology(n, frozenset((i, i + 1) for i in range(n - 1)), f"line-{n}")


def make_manhattan(width: int, height: int) -> Topology:
    """Rectangular grid without wraparound; cell (r, c) is node ``r * width + c``."""
    if width < 2 or height < 2:
        raise InvalidParameterError(f"manhattan grid needs width, height >= 2, got {width}x{height}")
    edges = set()
    for r in range(height):
        for c in range(width):
            node = r * width + c
            if c + 1 < width:
                edges.add((node, node + 1))
            if r + 1 < height:
                edges.add((node, node + width))
    return Topology(width * height, frozenset(edges), f"manhattan-{width}x{height}")


def shortest_path(topo: Topology, src: NodeId, dst: NodeId) -> Route:
    """Minimal hop-count route from ``src`` to ``dst``.

    Walking forward from ``src`` and always stepping to the smallest-id
    neighbour that is one hop closer to ``dst`` yields the lexicographically
    smallest of all shortest paths.
    """
    topo.check_node(src)
    topo.check_node(dst)
    if src == dst:
        raise InvalidParameterError("route endpoints must differ")
    to_dst = topo.distances_from(dst)
    if src not in to_dst:
        raise StegTraceError(f"node {dst} is unreachable from {src}")
    hops = [src]
    node = src
    adj = topo.adjacency
    while node != dst:
        want = to_dst[node] - 1
        node = next(v for v in adj[node] if to_dst.get(v) == want)
        hops.append(node)
    return tuple(hops)


def hop_distance(topo: Topology, a: NodeId, b: NodeId) -> int:
    topo.check_node(b)
    dist = topo.distances_from(a)
    if b not in dist:
        raise StegTraceError(f"node {b} is unreachable from {a}")
    return dist[b]
