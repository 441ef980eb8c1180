"""Undirected skeletons, separation sets and ground-truth edge lists."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, Iterator, List, Sequence, Set, Tuple

Pair = Tuple[int, int]


class GraphError(ValueError):
    pass


def canonical(a: int, b: int) -> Pair:
    if a == b:
        raise GraphError(f"self-loop on node {a}")
    return (a, b) if a < b else (b, a)


class UndirectedGraph:
    """Simple undirected graph over nodes ``0..d-1``.

    Edges are stored as canonical ``(min, max)`` pairs alongside adjacency
    sets so neighbourhood queries stay O(1).
    """

    def __init__(self, d: int, edges: Iterable[Pair] = ()):
        if d < 1:
            raise GraphError(f"invalid dimension d={d}")
        self.d = d
        self._adj: List[Set[int]] = [set() for _ in range(d)]
        for a, b in edges:
            self.add_edge(a, b)

    def _check(self, v: int) -> None:
        if not 0 <= v < self.d:
            raise GraphError(f"node {v} outside [0, {self.d})")

    def add_edge(self, a: int, b: int) -> None:
        self._check(a)
        self._check(b)
        a, b = canonical(a, b)
        self._adj[a].add(b)
        self._adj[b].add(a)

    def remove_edge(self, a: int, b: int) -> None:
        if not self.has_edge(a, b):
            raise GraphError(f"edge {(a, b)} not in graph")
        self._adj[a].discard(b)
        self._adj[b].discard(a)

    def has_edge(self, a: int, b: int) -> bool:
        return 0 <= a < self.d and 0 <= b < self.d and b in self._adj[a]

    def neighbors(self, v: int) -> Set[int]:
        self._check(v)
        return set(self._adj[v])

    @property
    def edges(self) -> Set[Pair]:
        return {(a, b) for a in range(self.d) for b in self._adj[a] if a < b}

    def sorted_edges(self) -> List[Pair]:
        return sorted(self.edges)

    def num_edges(self) -> int:
        return sum(len(s) for s in self._adj) // 2

    def copy(self) -> "UndirectedGraph":
        return UndirectedGraph(self.d, self.edges)

    def to_dict(self) -> dict:
        return {"d": self.d, "edges": [list(e) for e in self.sorted_edges()]}

    @classmethod
    def from_dict(cls, obj: dict) -> "UndirectedGraph":
        return cls(int(obj["d"]), (tuple(e) for e in obj["edges"]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, UndirectedGraph):
            return NotImplemented
        return self.d == other.d and self.edges == other.edges

    def __repr__(self) -> str:
        return f"UndirectedGraph(d={self.d}, edges={self.sorted_edges()})"


def complete_graph(d: int) -> UndirectedGraph:
    if d < 2:
        raise GraphError(f"complete graph needs d >= 2, got {d}")
    return UndirectedGraph(d, combinations(range(d), 2))


def adjacent_candidates(g: UndirectedGraph, a: int, b: int, i: int) -> Iterator[Tuple[int, ...]]:
    """Size-``i`` conditioning sets drawn from ``Adj(g, a) \\ {b}``.

    Subsets come out in lexicographic order of sorted node indices so a
    fixed seed reproduces the same test sequence.
    """
    if i < 0:
        raise GraphError(f"negative order {i}")
    if not g.has_edge(a, b):
        raise GraphError(f"({a}, {b}) is not an edge")
    pool = sorted(g.neighbors(a) - {b})
    return combinations(pool, i)


@dataclass
class SeparationSets:
    """Maps a removed pair to the conditioning set that separated it."""

    sets: Dict[Pair, FrozenSet[int]] = field(default_factory=dict)

    def add(self, a: int, b: int, s: Iterable[int]) -> None:
        s = frozenset(s)
        if a in s or b in s:
            raise GraphError(f"separating set {sorted(s)} contains an endpoint of {(a, b)}")
        self.sets[canonical(a, b)] = s

    def get(self, a: int, b: int):
        return self.sets.get(canonical(a, b))

    def __contains__(self, pair) -> bool:
        return canonical(*pair) in self.sets

    def __len__(self) -> int:
        return len(self.sets)

    def to_list(self) -> list:
        return [[a, b, sorted(s)] for (a, b), s in sorted(self.sets.items())]


@dataclass
class EdgeList:
    """Named edge list used as ground truth or as an exported estimate.

    ``pairs`` may be directed; comparisons in :mod:`privcgd.metrics` drop
    direction.
    """

    names: List[str]
    pairs: List[Pair] = field(default_factory=list)

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise GraphError("node names must be unique")
        d = len(self.names)
        for a, b in self.pairs:
            if not (0 <= a < d and 0 <= b < d):
                raise GraphError(f"edge {(a, b)} outside node range [0, {d})")
            if a == b:
                raise GraphError(f"self-loop on {self.names[a]}")

    @property
    def d(self) -> int:
        return len(self.names)

    def undirected(self) -> Set[Pair]:
        return {canonical(a, b) for a, b in self.pairs}

    @classmethod
    def from_graph(cls, g: UndirectedGraph, names: Sequence[str]) -> "EdgeList":
        if len(names) != g.d:
            raise GraphError("name table does not match graph size")
        return cls(list(names), g.sorted_edges())

    def dump(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    def dumps(self) -> str:
        lines = ["# nodes: " + ",".join(self.names)]
        lines += [f"{self.names[a]}\t{self.names[b]}" for a, b in self.pairs]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "EdgeList":
        names = None
        raw: List[Tuple[int, str, str]] = []
        for lineno, line in enumerate(text.splitlines(), 1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                body = stripped[1:].strip()
                if body.startswith("nodes:"):
                    names = [x.strip() for x in body[len("nodes:"):].split(",") if x.strip()]
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise GraphError(f"line {lineno}: expected 'nameA<TAB>nameB'")
            raw.append((lineno, parts[0].strip(), parts[1].strip()))
        if names is None:
            raise GraphError("missing '# nodes:' header")
        index = {n: k for k, n in enumerate(names)}
        pairs = []
        for lineno, x, y in raw:
            if x not in index or y not in index:
                raise GraphError(f"line {lineno}: unknown node in edge {x!r}-{y!r}")
            pairs.append((index[x], index[y]))
        return cls(names, pairs)

    @classmethod
    def load(cls, path) -> "EdgeList":
        return cls.loads(Path(path).read_text(encoding="utf-8"))
