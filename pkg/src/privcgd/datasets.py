"""CSV ingestion and synthetic ground-truth generators."""

from __future__ import annotations

import csv
import io
import math
import zlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .data import DataError, DataMatrix
from .graph import EdgeList
from .mechanisms import RngStream


class SpecError(ValueError):
    pass


# --- CSV ---------------------------------------------------------------


def _parse_float(cell: str) -> Optional[float]:
    try:
        value = float(cell)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def loads_csv(text: str) -> DataMatrix:
    """Parse CSV text with a header row.

    Columns whose cells are not all numeric are treated as categorical and
    coded ``0, 1, ...`` in order of first appearance; the label tables are
    kept in ``DataMatrix.categories``.
    """
    rows = list(csv.reader(io.StringIO(text)))
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    if not rows:
        raise DataError("line 1: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or any(h == "" for h in header):
        raise DataError("line 1: header has empty column names")
    if len(set(header)) != len(header):
        raise DataError("line 1: duplicate column names")
    body = rows[1:]
    if not body:
        raise DataError("line 2: no data rows")
    d = len(header)
    for lineno, row in enumerate(body, 2):
        if len(row) != d:
            raise DataError(f"line {lineno}: expected {d} cells, found {len(row)}")
        for j, cell in enumerate(row):
            if cell.strip() == "":
                raise DataError(f"line {lineno}: missing value in column {header[j]!r}")

    values = np.empty((len(body), d))
    categories: Dict[str, List[str]] = {}
    for j, name in enumerate(header):
        cells = [row[j].strip() for row in body]
        parsed = [_parse_float(c) for c in cells]
        if all(p is not None for p in parsed):
            values[:, j] = parsed
            continue
        labels: Dict[str, int] = {}
        for lineno, c in enumerate(cells, 2):
            if c.lower() in {"nan", "na", "null", "none"}:
                raise DataError(f"line {lineno}: missing value in column {name!r}")
            labels.setdefault(c, len(labels))
        values[:, j] = [labels[c] for c in cells]
        categories[name] = list(labels)
    return DataMatrix(values, header, categories)


def load_csv(path) -> DataMatrix:
    return loads_csv(Path(path).read_text(encoding="utf-8"))


def dumps_csv(data: DataMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(data.names)
    for row in data.values:
        writer.writerow(_fmt(v) for v in row)
    return buf.getvalue()


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() and abs(v) < 2**53 else repr(float(v))


def write_csv(data: DataMatrix, path) -> None:
    Path(path).write_text(dumps_csv(data), encoding="utf-8")


# --- structure helpers ---------------------------------------------------


def topological_order(d: int, parents: Sequence[Sequence[int]]) -> List[int]:
    indeg = [len(set(p)) for p in parents]
    children: List[List[int]] = [[] for _ in range(d)]
    for v, ps in enumerate(parents):
        for p in set(ps):
            children[p].append(v)
    ready = sorted(v for v in range(d) if indeg[v] == 0)
    order = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for c in sorted(children[v]):
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
        ready.sort()
    if len(order) != d:
        raise SpecError("parent structure contains a cycle")
    return order


def _node_stream(seed: int, name: str) -> RngStream:
    # keyed by node name so permuting the node order permutes the columns only
    return RngStream(seed, zlib.crc32(name.encode("utf-8")))


# --- linear SEM ----------------------------------------------------------


@dataclass
class SemSpec:
    """Linear Gaussian SEM ``x_j = sum_p W[p, j] x_p + N(0, noise_std[j]^2)``."""

    weights: np.ndarray
    noise_std: Sequence[float]
    n: int
    seed: int = 0
    names: Optional[List[str]] = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        d = self.weights.shape[0]
        if self.weights.shape != (d, d):
            raise SpecError("weight matrix must be square")
        if np.any(np.diag(self.weights) != 0):
            raise SpecError("self-loops are not allowed")
        self.noise_std = [float(s) for s in np.broadcast_to(self.noise_std, (d,))]
        if any(not s > 0 for s in self.noise_std):
            raise SpecError("noise std must be positive")
        if self.names is None:
            self.names = [f"x{j + 1}" for j in range(d)]
        if len(self.names) != d:
            raise SpecError("name table does not match weight matrix")
        self.parents()

    @property
    def d(self) -> int:
        return self.weights.shape[0]

    def parents(self) -> List[List[int]]:
        ps = [list(np.flatnonzero(self.weights[:, j])) for j in range(self.d)]
        topological_order(self.d, ps)
        return ps

    def edge_list(self) -> EdgeList:
        pairs = [(int(i), int(j)) for i, j in zip(*np.nonzero(self.weights))]
        return EdgeList(list(self.names), sorted(pairs))


def chain_sem(d: int, weight: float, noise_std: float, n: int, seed: int = 0) -> SemSpec:
    W = np.zeros((d, d))
    for j in range(d - 1):
        W[j, j + 1] = weight
    return SemSpec(W, [noise_std] * d, n, seed)


def sample_sem(spec: SemSpec) -> Tuple[DataMatrix, EdgeList]:
    """Ancestral sampling in topological order."""
    parents = spec.parents()
    order = topological_order(spec.d, parents)
    X = np.zeros((spec.n, spec.d))
    for j in order:
        noise = _node_stream(spec.seed, spec.names[j]).generator.standard_normal(spec.n)
        X[:, j] = X[:, parents[j]] @ spec.weights[parents[j], j] + spec.noise_std[j] * noise
    return DataMatrix(X, list(spec.names)), spec.edge_list()


# --- discrete Bayesian networks -----------------------------------------


@dataclass
class BayesNetSpec:
    """Categorical Bayesian network.

    ``cpts[node]`` has one row per joint parent configuration. Configurations
    are indexed in mixed radix with the first listed parent most significant.
    """

    names: List[str]
    cardinality: Dict[str, int]
    parents: Dict[str, List[str]] = field(default_factory=dict)
    cpts: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise SpecError("duplicate node names")
        for name in self.names:
            self.parents.setdefault(name, [])
            card = self.cardinality.get(name)
            if card is None or card < 1:
                raise SpecError(f"node {name!r} needs a positive cardinality")
            for p in self.parents[name]:
                if p not in self.cardinality:
                    raise SpecError(f"unknown parent {p!r} of {name!r}")
            if name not in self.cpts:
                raise SpecError(f"missing CPT for {name!r}")
            table = np.asarray(self.cpts[name], dtype=float)
            rows = math.prod(self.cardinality[p] for p in self.parents[name])
            if table.shape != (rows, card):
                raise SpecError(f"CPT of {name!r} must have shape {(rows, card)}, got {table.shape}")
            if np.any(table < 0) or np.any(np.abs(table.sum(axis=1) - 1.0) > 1e-9):
                raise SpecError(f"CPT rows of {name!r} must be probability vectors")
            self.cpts[name] = table
        index = {n: k for k, n in enumerate(self.names)}
        topological_order(len(self.names), [[index[p] for p in self.parents[n]] for n in self.names])

    def edge_list(self) -> EdgeList:
        index = {n: k for k, n in enumerate(self.names)}
        pairs = sorted((index[p], index[c]) for c in self.names for p in self.parents[c])
        return EdgeList(list(self.names), pairs)

    def dumps(self) -> str:
        lines = []
        for name in self.names:
            lines.append(f"node {name} {self.cardinality[name]}")
        for name in self.names:
            if self.parents[name]:
                lines.append(f"parents {name} " + " ".join(self.parents[name]))
        for name in self.names:
            for k, row in enumerate(self.cpts[name]):
                lines.append(f"cpt {name} {k} " + " ".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def parse_bayesnet(text: str) -> BayesNetSpec:
    """Read the line-oriented ``node`` / ``parents`` / ``cpt`` format."""
    names: List[str] = []
    card: Dict[str, int] = {}
    parents: Dict[str, List[str]] = {}
    rows: Dict[str, Dict[int, List[float]]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "node" and len(tok) == 3:
                if tok[1] in card:
                    raise SpecError(f"duplicate node {tok[1]!r}")
                names.append(tok[1])
                card[tok[1]] = int(tok[2])
            elif tok[0] == "parents" and len(tok) >= 2:
                parents[tok[1]] = tok[2:]
            elif tok[0] == "cpt" and len(tok) >= 4:
                rows.setdefault(tok[1], {})[int(tok[2])] = [float(x) for x in tok[3:]]
            else:
                raise SpecError(f"unrecognised directive {tok[0]!r}")
        except (SpecError, ValueError) as exc:
            raise SpecError(f"line {lineno}: {exc}") from None

    cpts = {}
    for name in names:
        table = rows.get(name, {})
        n_rows = math.prod(card[p] for p in parents.get(name, []) if p in card)
        if sorted(table) != list(range(n_rows)):
            raise SpecError(f"CPT of {name!r} needs rows 0..{n_rows - 1}")
        cpts[name] = np.array([table[k] for k in range(n_rows)])
    return BayesNetSpec(names, card, parents, cpts)


def load_bayesnet(path) -> BayesNetSpec:
    return parse_bayesnet(Path(path).read_text(encoding="utf-8"))


def shipped_networks() -> List[str]:
    root = resources.files("privcgd") / "networks"
    return sorted(p.name[:-3] for p in root.iterdir() if p.name.endswith(".bn"))


def load_network(name: str) -> BayesNetSpec:
    root = resources.files("privcgd") / "networks"
    path = root / f"{name}.bn"
    if not path.is_file():
        raise SpecError(f"no shipped network {name!r}; available: {', '.join(shipped_networks())}")
    return parse_bayesnet(path.read_text(encoding="utf-8"))


def sample_bayesnet(spec: BayesNetSpec, n: int, seed: int = 0) -> Tuple[DataMatrix, EdgeList]:
    index = {name: k for k, name in enumerate(spec.names)}
    order = topological_order(len(spec.names), [[index[p] for p in spec.parents[m]] for m in spec.names])
    X = np.zeros((n, len(spec.names)), dtype=np.int64)
    for k in order:
        name = spec.names[k]
        config = np.zeros(n, dtype=np.int64)
        for p in spec.parents[name]:
            config = config * spec.cardinality[p] + X[:, index[p]]
        cum = np.cumsum(spec.cpts[name], axis=1)
        u = _node_stream(seed, name).uniform(n)
        X[:, k] = np.minimum((u[:, None] >= cum[config]).sum(axis=1), spec.cardinality[name] - 1)
    return DataMatrix(X.astype(float), list(spec.names)), spec.edge_list()
