"""Undirected graph container and the generators used by the scenarios."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree


@dataclass
class Graph:
    """Simple undirected graph stored as an edge list (i < j per row).

    ``vertex_positions`` is kept for random geometric graphs, whose noise
    model reuses the first coordinate.
    """

    n_vertices: int
    edges: np.ndarray
    vertex_positions: Optional[np.ndarray] = None
    _adj: Optional[sparse.csr_matrix] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        e = np.sort(e, axis=1)
        if e.size and (e[:, 0] == e[:, 1]).any():
            raise ValueError("self-loops are not allowed")
        if e.size and (e.min() < 0 or e.max() >= self.n_vertices):
            raise ValueError("edge endpoint out of range")
        self.edges = e

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric 0/1 adjacency in CSR form (cached)."""
        if self._adj is None:
            i, j = self.edges[:, 0], self.edges[:, 1]
            rows = np.concatenate([i, j])
            cols = np.concatenate([j, i])
            data = np.ones(rows.shape[0])
            self._adj = sparse.csr_matrix(
                (data, (rows, cols)), shape=(self.n_vertices, self.n_vertices)
            )
        return self._adj

    @property
    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n_vertices, dtype=np.int64)
        np.add.at(d, self.edges[:, 0], 1)
        np.add.at(d, self.edges[:, 1], 1)
        return d


def rgg_radius(n_units: int, kappa: float) -> float:
    """Connection radius giving mean degree ~ kappa on uniform [0,1]^2 points."""
    return math.sqrt(kappa / (math.pi * n_units))


def gen_rgg(n_units: int, kappa: float, rng: np.random.Generator) -> Graph:
    """Random geometric graph: uniform points in [0,1]^2, edge iff distance <= r."""
    if n_units < 2:
        raise ValueError("need at least 2 vertices")
    if kappa <= 0:
        raise ValueError("kappa must be > 0")
    pos = rng.random((n_units, 2))
    pairs = cKDTree(pos).query_pairs(r=rgg_radius(n_units, kappa), output_type="ndarray")
    return Graph(n_vertices=n_units, edges=pairs, vertex_positions=pos)


def gen_er(n_units: int, p_edge: float, rng: np.random.Generator) -> Graph:
    """Erdos-Renyi G(n, p) via geometric edge skipping (Batagelj-Brandes)."""
    if n_units < 2:
        raise ValueError("need at least 2 vertices")
    if not 0.0 <= p_edge <= 1.0:
        raise ValueError("p_edge must lie in [0, 1]")
    if p_edge == 0.0:
        return Graph(n_vertices=n_units, edges=np.empty((0, 2), dtype=np.int64))
    if p_edge == 1.0:
        i, j = np.triu_indices(n_units, k=1)
        return Graph(n_vertices=n_units, edges=np.column_stack([i, j]))
    edges = []
    log_q = math.log(1.0 - p_edge)
    v, w = 1, -1
    while v < n_units:
        w += 1 + int(math.log(1.0 - rng.random()) / log_q)
        while w >= v and v < n_units:
            w -= v
            v += 1
        if v < n_units:
            edges.append((w, v))
    return Graph(
        n_vertices=n_units,
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
    )


def load_edge_list(path: str | Path) -> Graph:
    """Read a whitespace-separated integer edge list.

    1-based ids are detected from the minimum id and shifted to 0-based.
    Duplicate edges are collapsed; self-loops are dropped with a warning.
    """
    path = Path(path)
    raw = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two tokens, got {parts}")
            try:
                raw.append((int(parts[0]), int(parts[1])))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-integer token") from exc
    if not raw:
        raise ValueError(f"{path}: empty edge list")
    e = np.array(raw, dtype=np.int64)
    if e.min() == 1:
        e -= 1
    self_loops = int((e[:, 0] == e[:, 1]).sum())
    if self_loops:
        warnings.warn(f"{path}: dropped {self_loops} self-loop(s)")
        e = e[e[:, 0] != e[:, 1]]
    e = np.unique(np.sort(e, axis=1), axis=0)
    return Graph(n_vertices=int(e.max()) + 1, edges=e)


def save_edge_list(graph: Graph, path: str | Path) -> None:
    with open(path, "w") as f:
        for i, j in graph.edges:
            f.write(f"{i} {j}\n")


def degree_histogram(graph: Graph) -> np.ndarray:
    """(degree, count) rows covering every observed degree, including zero."""
    counts = np.bincount(graph.degrees)
    degs = np.arange(counts.shape[0])
    return np.column_stack([degs, counts])
