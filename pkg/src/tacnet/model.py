"""Instances, tree topologies and rooted-tree bookkeeping."""
from __future__ import annotations

import dataclasses
import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Sequence, Tuple

from .physics import PhysicsParams

Edge = Tuple[int, int]

HUB_DEGREE_MAX = 20
NODE_DEGREE_MAX = 11


class InvalidTopologyError(ValueError):
    pass


def norm_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Node:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class Instance:
    nodes: Tuple[Node, ...]
    weights: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    p: float = 1.0
    physics: PhysicsParams = field(default_factory=PhysicsParams)
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise ValueError("an instance needs at least 2 nodes")
        if [nd.id for nd in self.nodes] != list(range(len(self.nodes))):
            raise ValueError("node ids must be 0..n-1 in order")
        for nd in self.nodes:
            if not (math.isfinite(nd.x) and math.isfinite(nd.y)):
                raise ValueError(f"node {nd.id} has non-finite coordinates")
        if any(w < 0 for w in self.weights) or not any(w > 0 for w in self.weights):
            raise ValueError("scenario weights must be >= 0 with at least one > 0")
        if self.p < 0:
            raise ValueError("mean weight p must be >= 0")

    @property
    def n(self) -> int:
        return len(self.nodes)

    @cached_property
    def evaluator(self):
        from .evaluator import Evaluator

        return Evaluator(self)

    def to_json(self) -> dict:
        a, b, c = self.weights
        return {
            "name": self.name,
            "nodes": [{"id": nd.id, "x": nd.x, "y": nd.y} for nd in self.nodes],
            "weights": {"A": a, "B": b, "C": c, "p": self.p},
            "physics": self.physics.to_json(),
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Instance":
        raw = sorted(data["nodes"], key=lambda d: d["id"])
        nodes = tuple(Node(int(d["id"]), float(d["x"]), float(d["y"])) for d in raw)
        w = data.get("weights", {})
        return cls(
            nodes=nodes,
            weights=(float(w.get("A", 1.0)), float(w.get("B", 1.0)), float(w.get("C", 1.0))),
            p=float(w.get("p", 1.0)),
            physics=PhysicsParams.from_json(data.get("physics")),
            seed=int(data.get("seed", 0)),
            name=str(data.get("name", "")),
        )


def load_instance(path) -> Instance:
    inst = Instance.from_json(json.loads(Path(path).read_text()))
    if not inst.name:
        inst = dataclasses.replace(inst, name=Path(path).stem)
    return inst


def save_instance(inst: Instance, path) -> None:
    Path(path).write_text(json.dumps(inst.to_json(), indent=2) + "\n")


@dataclass(frozen=True)
class Topology:
    edges: FrozenSet[Edge]
    n: int

    @classmethod
    def from_edges(cls, edges: Iterable[Sequence[int]], n: int) -> "Topology":
        return cls(frozenset(norm_edge(int(u), int(v)) for u, v in edges), n)

    @cached_property
    def adjacency(self) -> Tuple[Tuple[int, ...], ...]:
        adj: List[List[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def degrees(self) -> Tuple[int, ...]:
        return tuple(len(a) for a in self.adjacency)

    @cached_property
    def sorted_edges(self) -> Tuple[Edge, ...]:
        return tuple(sorted(self.edges))

    @cached_property
    def high_degree_vertex(self):
        """The vertex of degree > 11, or None."""
        high = [v for v, d in enumerate(self.degrees) if d > NODE_DEGREE_MAX]
        return high[0] if len(high) == 1 else None

    def swap(self, removed: Edge, added: Edge) -> "Topology":
        return Topology((self.edges - {removed}) | {added}, self.n)

    def is_leaf(self, v: int) -> bool:
        return self.degrees[v] <= 1


def degree_rule_ok(degrees: Sequence[int]) -> bool:
    high = [d for d in degrees if d > NODE_DEGREE_MAX]
    return len(high) == 0 or (len(high) == 1 and high[0] <= HUB_DEGREE_MAX)


def is_valid_topology(edges: Iterable[Sequence[int]], n: int) -> bool:
    """Spanning tree on ``n`` nodes satisfying the degree rule."""
    edge_set = set()
    for u, v in edges:
        if not (0 <= u < n and 0 <= v < n) or u == v:
            return False
        edge_set.add(norm_edge(u, v))
    if len(edge_set) != n - 1:
        return False
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    deg = [0] * n
    for u, v in edge_set:
        ru, rv = find(u), find(v)
        if ru == rv:
            return False
        parent[ru] = rv
        deg[u] += 1
        deg[v] += 1
    return degree_rule_ok(deg)


def hop_distances(t: Topology, source: int) -> List[int]:
    dist = [-1] * t.n
    dist[source] = 0
    queue = deque([source])
    adj = t.adjacency
    while queue:
        a = queue.popleft()
        for b in adj[a]:
            if dist[b] < 0:
                dist[b] = dist[a] + 1
                queue.append(b)
    return dist


def eccentricity(t: Topology, v: int) -> int:
    return max(hop_distances(t, v))


def master_hub_candidates(t: Topology) -> Tuple[int, ...]:
    """Hub candidates R(T), sorted by node id.

    The degree-> 11 vertex when there is one; otherwise the non-leaf nodes whose
    rank score (increasing degree + decreasing eccentricity, 1-based, ties by
    id) reaches the lower median.
    """
    if t.high_degree_vertex is not None:
        return (t.high_degree_vertex,)
    inner = [v for v in range(t.n) if not t.is_leaf(v)]
    if not inner:
        return tuple(range(t.n))
    ecc = {v: eccentricity(t, v) for v in inner}
    by_degree = sorted(inner, key=lambda v: (t.degrees[v], v))
    by_ecc = sorted(inner, key=lambda v: (-ecc[v], v))
    score = {v: 0 for v in inner}
    for pos, v in enumerate(by_degree, 1):
        score[v] += pos
    for pos, v in enumerate(by_ecc, 1):
        score[v] += pos
    ordered = sorted(score.values())
    median = ordered[(len(ordered) - 1) // 2]
    return tuple(v for v in sorted(inner) if score[v] >= median)


def is_valid_hub(t: Topology, hub: int) -> bool:
    high = t.high_degree_vertex
    if high is None and any(d > NODE_DEGREE_MAX for d in t.degrees):
        return False
    return 0 <= hub < t.n and (high is None or hub == high)


@dataclass(frozen=True)
class RootedTopology:
    topology: Topology
    hub: int
    parent: Tuple[int, ...]  # -1 at the hub
    children: Tuple[Tuple[int, ...], ...]
    subtree_size: Tuple[int, ...]
    order: Tuple[int, ...]  # BFS order from the hub, children by ascending id

    @property
    def n(self) -> int:
        return self.topology.n

    def arcs(self) -> List[Edge]:
        """(parent, child) pairs in BFS order of the child."""
        return [(self.parent[v], v) for v in self.order[1:]]

    def depth(self) -> List[int]:
        d = [0] * self.n
        for v in self.order[1:]:
            d[v] = d[self.parent[v]] + 1
        return d


def root_at(t: Topology, hub: int) -> RootedTopology:
    if not is_valid_hub(t, hub):
        raise InvalidTopologyError(f"node {hub} is not a valid master hub for this topology")
    n = t.n
    parent = [-1] * n
    seen = [False] * n
    seen[hub] = True
    order = [hub]
    queue = deque([hub])
    adj = t.adjacency
    while queue:
        a = queue.popleft()
        for b in adj[a]:
            if not seen[b]:
                seen[b] = True
                parent[b] = a
                order.append(b)
                queue.append(b)
    if len(order) != n:
        raise InvalidTopologyError("topology is not connected")
    children: List[List[int]] = [[] for _ in range(n)]
    for v in order[1:]:
        children[parent[v]].append(v)
    size = [1] * n
    for v in reversed(order[1:]):
        size[parent[v]] += size[v]
    return RootedTopology(
        topology=t,
        hub=hub,
        parent=tuple(parent),
        children=tuple(tuple(c) for c in children),
        subtree_size=tuple(size),
        order=tuple(order),
    )


def components_without(t: Topology, edge: Edge) -> Tuple[FrozenSet[int], FrozenSet[int]]:
    """The two node sets left after deleting ``edge`` from tree ``t``."""
    u, v = edge
    side = {u}
    stack = [u]
    adj = t.adjacency
    while stack:
        a = stack.pop()
        for b in adj[a]:
            if b not in side and not (a == u and b == v):
                side.add(b)
                stack.append(b)
    other = frozenset(range(t.n)) - side
    return frozenset(side), other


def pairwise_distances(nodes: Sequence[Node]) -> Dict[Edge, float]:
    out = {}
    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            out[(a.id, b.id)] = math.hypot(a.x - b.x, a.y - b.y)
    return out
