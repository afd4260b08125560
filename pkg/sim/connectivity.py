"""Who can talk to whom: range graph and its connected components."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Mapping, Sequence, Tuple

from domain.types import Point, RobotSpec


class DisjointSet:
    """Union by size with path compression over hashable nodes."""

    def __init__(self, nodes: Iterable[int]):
        self.parent: Dict[int, int] = {n: n for n in nodes}
        self.size: Dict[int, int] = {n: 1 for n in self.parent}

    def find(self, node: int) -> int:
        root = node
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[node] != root:
            self.parent[node], node = root, self.parent[node]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb] or (self.size[ra] == self.size[rb] and rb < ra):
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True

    def connected(self, a: int, b: int) -> bool:
        return self.find(a) == self.find(b)

    def groups(self) -> List[FrozenSet[int]]:
        out: Dict[int, set] = {}
        for n in sorted(self.parent):
            out.setdefault(self.find(n), set()).add(n)
        return sorted((frozenset(g) for g in out.values()), key=min)


@dataclass(frozen=True)
class ConnectivityGraph:
    nodes: Tuple[int, ...]
    edges: FrozenSet[Tuple[int, int]]
    components: Tuple[FrozenSet[int], ...]

    def component_of(self, robot: int) -> FrozenSet[int]:
        for c in self.components:
            if robot in c:
                return c
        return frozenset({robot})

    def neighbours(self, robot: int) -> List[int]:
        return sorted({b if a == robot else a for a, b in self.edges if robot in (a, b)})

    def adjacent(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges

    @property
    def is_connected(self) -> bool:
        return len(self.components) <= 1


def connectivity(poses: Mapping[int, Sequence[float]], specs: Mapping[int, RobotSpec],
                 unlimited: bool = False) -> ConnectivityGraph:
    """Edge (i, j) iff the robots are within min(comm_i, comm_j) of each other, boundary inclusive."""
    nodes = tuple(sorted(poses))
    dsu = DisjointSet(nodes)
    edges = set()
    for k, i in enumerate(nodes):
        for j in nodes[k + 1:]:
            reach = min(specs[i].comm_radius, specs[j].comm_radius)
            if unlimited or math.dist(poses[i][:2], poses[j][:2]) <= reach + 1e-12:
                edges.add((i, j))
                dsu.union(i, j)
    return ConnectivityGraph(nodes, frozenset(edges), tuple(dsu.groups()))


def positions_connected(poses: Mapping[int, Point], specs: Mapping[int, RobotSpec]) -> bool:
    return connectivity(poses, specs).is_connected
