"""Sparse undirected graph storage, dataset I/O, and structural helpers."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Graph",
    "SplitMask",
    "DeltaGraph",
    "DatasetError",
    "load_dataset",
    "write_dataset",
    "largest_connected_component",
    "induced_subgraph",
    "random_split",
    "normalized_adjacency",
    "homophily",
    "with_added_edges",
]


class DatasetError(ValueError):
    """A dataset directory is missing files or internally inconsistent."""


class Graph:
    """Immutable undirected graph in CSR form with node features and labels.

    Adjacency rows are sorted and symmetric, with no self-loops and no
    duplicate edges. Instances never mutate after construction and are safe
    to share across threads. ``original_ids`` maps compacted node ids back
    to the ids of the graph this one was extracted from (None = identity).
    """

    __slots__ = ("indptr", "indices", "features", "labels", "class_count",
                 "original_ids", "_norm_adj")

    def __init__(self, indptr, indices, features, labels, class_count,
                 original_ids=None, validate=True):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.features = np.ascontiguousarray(features, dtype=np.float64)
        self.labels = np.ascontiguousarray(labels, dtype=np.int64)
        self.class_count = int(class_count)
        if original_ids is None:
            self.original_ids = None
        else:
            self.original_ids = np.ascontiguousarray(original_ids, dtype=np.int64)
        self._norm_adj = None
        if validate:
            self._validate()

    @classmethod
    def from_edges(cls, n, edges, features, labels, class_count,
                   original_ids=None, strict=True):
        """Build a graph from an iterable of undirected (u, v) pairs.

        Each pair may appear in either orientation. With ``strict`` a
        self-loop or a repeated edge raises; otherwise duplicates collapse.
        """
        edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise DatasetError(f"edge endpoint out of range [0, {n})")
            if np.any(edges[:, 0] == edges[:, 1]):
                bad = edges[edges[:, 0] == edges[:, 1]][0]
                raise DatasetError(f"self-loop on node {int(bad[0])}")
            lo = np.minimum(edges[:, 0], edges[:, 1])
            hi = np.maximum(edges[:, 0], edges[:, 1])
            canon = np.unique(lo * np.int64(n) + hi)
            if strict and canon.size != edges.shape[0]:
                raise DatasetError("duplicate undirected edge in input")
            lo, hi = canon // n, canon % n
            heads = np.concatenate([lo, hi])
            tails = np.concatenate([hi, lo])
            order = np.lexsort((tails, heads))
            heads, tails = heads[order], tails[order]
            indptr = np.zeros(n + 1, dtype=np.int64)
            np.add.at(indptr, heads + 1, 1)
            indptr = np.cumsum(indptr)
            indices = tails
        else:
            indptr = np.zeros(n + 1, dtype=np.int64)
            indices = np.zeros(0, dtype=np.int64)
        return cls(indptr, indices, features, labels, class_count,
                   original_ids=original_ids)

    def _validate(self):
        n = self.n
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0:
            raise DatasetError("malformed CSR index pointer")
        if self.indptr[-1] != self.indices.size:
            raise DatasetError("CSR indptr does not cover indices")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DatasetError(f"feature row count {self.features.shape[0]} != {n} nodes")
        if self.labels.shape != (n,):
            raise DatasetError("label count != node count")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DatasetError(f"label outside [0, {self.class_count})")
        if self.indices.size:
            if self.indices.min() < 0 or self.indices.max() >= n:
                raise DatasetError("adjacency index out of range")
            rows = np.repeat(np.arange(n), np.diff(self.indptr))
            if np.any(rows == self.indices):
                raise DatasetError("self-loop stored in adjacency")
            # sorted strictly increasing within each row => no duplicates
            interior = np.ones(self.indices.size, dtype=bool)
            starts = self.indptr[1:-1]
            interior[starts[starts < self.indices.size]] = False
            if np.any((np.diff(self.indices) <= 0)[interior[1:]]):
                raise DatasetError("adjacency row not sorted / duplicate edge")
            a = sp.csr_matrix((np.ones(self.indices.size), self.indices, self.indptr),
                              shape=(n, n))
            if (a != a.T).nnz:
                raise DatasetError("adjacency not symmetric")

    @property
    def n(self):
        return self.indptr.shape[0] - 1

    @property
    def m(self):
        """Number of undirected edges."""
        return self.indices.size // 2

    @property
    def feature_dim(self):
        return self.features.shape[1]

    @property
    def degrees(self):
        return np.diff(self.indptr)

    def degree(self, u):
        return int(self.indptr[u + 1] - self.indptr[u])

    def neighbors(self, u):
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def has_edge(self, u, v):
        row = self.neighbors(u)
        i = np.searchsorted(row, v)
        return bool(i < row.size and row[i] == v)

    def edge_array(self):
        """All undirected edges once, as an (m, 2) array with u < v."""
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        mask = rows < self.indices
        return np.column_stack([rows[mask], self.indices[mask]])

    def __repr__(self):
        return (f"Graph(n={self.n}, m={self.m}, d={self.feature_dim}, "
                f"C={self.class_count})")


class DeltaGraph:
    """Read-only view of a base graph plus a few extra undirected edges.

    Construction is O(#links); degree and neighbor queries reflect the
    overlay. Use :func:`with_added_edges` to build one.
    """

    __slots__ = ("base", "added_edges", "_extra")

    def __init__(self, base, links):
        extra: dict[int, list[int]] = {}
        added = []
        for link in links:
            u, v = int(link[0]), int(link[1])
            if u == v:
                raise ValueError(f"self-loop ({u},{v}) in added links")
            if base.has_edge(u, v) or v in extra.get(u, ()):
                raise ValueError(f"link ({u},{v}) duplicates an existing edge")
            extra.setdefault(u, []).append(v)
            extra.setdefault(v, []).append(u)
            added.append((u, v))
        self.base = base
        self.added_edges = tuple(added)
        self._extra = extra

    @property
    def n(self):
        return self.base.n

    @property
    def m(self):
        return self.base.m + len(self.added_edges)

    @property
    def features(self):
        return self.base.features

    @property
    def labels(self):
        return self.base.labels

    @property
    def class_count(self):
        return self.base.class_count

    def added_neighbors(self, u):
        return self._extra.get(u, ())

    def degree(self, u):
        return self.base.degree(u) + len(self._extra.get(u, ()))

    @property
    def degrees(self):
        d = self.base.degrees.copy()
        for u, extra in self._extra.items():
            d[u] += len(extra)
        return d

    def neighbors(self, u):
        extra = self._extra.get(u)
        row = self.base.neighbors(u)
        if not extra:
            return row
        return np.concatenate([row, np.asarray(extra, dtype=np.int64)])

    def has_edge(self, u, v):
        return self.base.has_edge(u, v) or v in self._extra.get(u, ())


def with_added_edges(g: Graph, links) -> DeltaGraph:
    """Overlay ``links`` on ``g`` without copying the base storage."""
    return DeltaGraph(g, links)


@dataclass(frozen=True)
class SplitMask:
    """Disjoint train/val/test node-index sets covering all nodes."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int

    def __post_init__(self):
        for a in (self.train, self.val, self.test):
            a.setflags(write=False)

    @property
    def n(self):
        return self.train.size + self.val.size + self.test.size


def random_split(g: Graph, fractions, seed: int) -> SplitMask:
    """Shuffle nodes and cut into train/val/test by the given fractions.

    Set sizes come from rounding the cumulative fractions half-up, so each
    set is within one node of its requested share. Deterministic per seed.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError("need three positive fractions")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions sum to {sum(fractions)}, expected 1")
    n = g.n
    bounds = [int(np.floor(c * n + 0.5)) for c in np.cumsum(fractions)]
    bounds[-1] = n
    sizes = np.diff([0] + bounds)
    if np.any(sizes <= 0):
        raise ValueError(f"degenerate split sizes {tuple(sizes)} for n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    train = np.sort(perm[:bounds[0]])
    val = np.sort(perm[bounds[0]:bounds[1]])
    test = np.sort(perm[bounds[1]:])
    return SplitMask(train=train, val=val, test=test, seed=int(seed))


def normalized_adjacency(g) -> sp.csr_matrix:
    """Self-looped symmetric-normalized adjacency.

    Entry (u, v) is 1/sqrt(du * dv) where d counts structural neighbors
    plus the implicit self-loop. Accepts a Graph (cached) or DeltaGraph.
    """
    if isinstance(g, Graph):
        if g._norm_adj is None:
            g._norm_adj = _build_norm_adj(g.n, g.indptr, g.indices, {})
        return g._norm_adj
    if isinstance(g, DeltaGraph):
        return _build_norm_adj(g.base.n, g.base.indptr, g.base.indices, g._extra)
    raise TypeError(f"expected Graph or DeltaGraph, got {type(g).__name__}")


def _build_norm_adj(n, indptr, indices, extra):
    heads = np.repeat(np.arange(n), np.diff(indptr))
    tails = indices
    if extra:
        eh = []
        et = []
        for u, vs in extra.items():
            eh.extend([u] * len(vs))
            et.extend(vs)
        heads = np.concatenate([heads, np.asarray(eh, dtype=np.int64)])
        tails = np.concatenate([tails, np.asarray(et, dtype=np.int64)])
    heads = np.concatenate([heads, np.arange(n)])
    tails = np.concatenate([tails, np.arange(n)])
    dp1 = np.diff(indptr).astype(np.float64) + 1.0
    if extra:
        for u, vs in extra.items():
            dp1[u] += len(vs)
    inv_sqrt = 1.0 / np.sqrt(dp1)
    data = inv_sqrt[heads] * inv_sqrt[tails]
    adj = sp.coo_matrix((data, (heads, tails)), shape=(n, n)).tocsr()
    adj.sort_indices()
    return adj


def homophily(g, u: int) -> float:
    """Fraction of u's structural neighbors sharing u's label.

    The implicit self-loop is excluded. Works on a Graph or a DeltaGraph
    (overlay neighbors included). Degree-0 nodes have no defined value.
    """
    nb = g.neighbors(u)
    if nb.size == 0:
        raise ValueError(f"homophily undefined for isolated node {u}")
    return float(np.count_nonzero(g.labels[nb] == g.labels[u]) / nb.size)


def largest_connected_component(g: Graph) -> Graph:
    """Induced subgraph of the largest component, ids compacted.

    Among equal-sized components the one containing the smallest node id
    wins. The returned graph's ``original_ids`` maps back to ``g``.
    """
    if g.n == 0:
        return g
    a = sp.csr_matrix((np.ones(g.indices.size, dtype=np.int8), g.indices, g.indptr),
                      shape=(g.n, g.n))
    _, comp = sp.csgraph.connected_components(a, directed=False)
    sizes = np.bincount(comp)
    keep = np.flatnonzero(comp == int(np.argmax(sizes)))
    return induced_subgraph(g, keep)


def induced_subgraph(g: Graph, nodes) -> Graph:
    """Subgraph on ``nodes`` (ascending unique ids), ids compacted to 0..k-1."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size and (np.any(np.diff(nodes) <= 0) or nodes[0] < 0 or nodes[-1] >= g.n):
        raise ValueError("nodes must be sorted, unique, and in range")
    member = np.zeros(g.n, dtype=bool)
    member[nodes] = True
    edges = g.edge_array()
    if edges.size:
        keep = member[edges[:, 0]] & member[edges[:, 1]]
        edges = np.searchsorted(nodes, edges[keep])
    original = nodes if g.original_ids is None else g.original_ids[nodes]
    return Graph.from_edges(nodes.size, edges, g.features[nodes], g.labels[nodes],
                            g.class_count, original_ids=original)


# --------------------------------------------------------------------------
# Portable dataset directory format:
#   meta.json     {"nodes": n, "features": d, "classes": C}
#   edges.csv     one "u,v" per line, 0-based, each undirected edge once
#   features.csv  n rows of d comma-separated reals
#   labels.csv    n lines of integer class ids
# --------------------------------------------------------------------------

_DATASET_FILES = ("meta.json", "edges.csv", "features.csv", "labels.csv")


def load_dataset(path, format="portable", normalize_features=True,
                 strict=True) -> Graph:
    """Read a dataset directory in the portable format into a Graph.

    ``normalize_features`` rescales each feature row to unit L1 norm
    (all-zero rows stay zero). With ``strict`` a duplicate or mirrored
    edge raises instead of being collapsed.
    """
    if format != "portable":
        raise DatasetError(f"unknown dataset format {format!r}")
    root = Path(path)
    for name in _DATASET_FILES:
        if not (root / name).is_file():
            raise DatasetError(f"missing dataset file {root / name}")
    meta = json.loads((root / "meta.json").read_text())
    try:
        n, d, c = int(meta["nodes"]), int(meta["features"]), int(meta["classes"])
    except KeyError as exc:
        raise DatasetError(f"meta.json missing key {exc}") from None

    edge_text = (root / "edges.csv").read_text()
    if edge_text.strip():
        edges = np.loadtxt(edge_text.strip().splitlines(), delimiter=",",
                           dtype=np.int64, ndmin=2)
    else:
        edges = np.zeros((0, 2), dtype=np.int64)

    features = np.loadtxt(root / "features.csv", delimiter=",",
                          dtype=np.float64, ndmin=2)
    if features.shape != (n, d):
        raise DatasetError(f"features.csv is {features.shape}, expected {(n, d)}")
    labels = np.loadtxt(root / "labels.csv", dtype=np.int64, ndmin=1)
    if labels.shape != (n,):
        raise DatasetError(f"labels.csv has {labels.shape[0]} rows, expected {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise DatasetError(f"label outside [0, {c})")

    if normalize_features:
        norms = np.abs(features).sum(axis=1, keepdims=True)
        np.divide(features, norms, out=features, where=norms > 0)

    return Graph.from_edges(n, edges, features, labels, c, strict=strict)


def write_dataset(path, edges, features, labels, class_count):
    """Write arrays as a portable dataset directory (see load_dataset)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    features = np.asarray(features)
    labels = np.asarray(labels, dtype=np.int64)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    meta = {"nodes": int(features.shape[0]), "features": int(features.shape[1]),
            "classes": int(class_count)}
    (root / "meta.json").write_text(json.dumps(meta) + "\n")
    np.savetxt(root / "edges.csv", edges, fmt="%d", delimiter=",")
    np.savetxt(root / "features.csv", features, fmt="%.17g", delimiter=",")
    np.savetxt(root / "labels.csv", labels, fmt="%d")
