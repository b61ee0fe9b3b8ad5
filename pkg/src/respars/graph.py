"""Canonical weighted undirected graphs, their Laplacians and content hashes.

A :class:`Graph` stores its edges as three parallel arrays sorted by
``(u, v)`` with ``u < v``.  Self-loops are stripped on construction and
duplicate or reversed pairs are merged by summing weights.
"""
from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _cc

from .errors import ParseError, ZeroDegreeError

LAPLACIAN_KINDS = ("combinatorial", "sym_norm", "rw_norm", "gcn_norm")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF
_HEADER = re.compile(r"^#\s*n\s*=\s*(\d+)\s*$")


@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    self_loops_dropped: int = field(default=0)

    def __post_init__(self):
        for name in ("u", "v", "w"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable, *, strict_weights=True) -> "Graph":
        """Build a canonical graph from ``(u, v)`` or ``(u, v, w)`` tuples."""
        if n < 1:
            raise ValueError("graph needs at least one node")
        rows = [tuple(e) for e in edges]
        if not rows:
            return cls(n, np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
        u = np.array([r[0] for r in rows], dtype=np.int64)
        v = np.array([r[1] for r in rows], dtype=np.int64)
        w = np.array([r[2] if len(r) > 2 else 1.0 for r in rows], dtype=float)
        return cls.from_arrays(n, u, v, w, strict_weights=strict_weights)

    @classmethod
    def from_arrays(cls, n, u, v, w=None, *, strict_weights=True) -> "Graph":
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        w = np.ones(len(u)) if w is None else np.asarray(w, dtype=float)
        if strict_weights and np.any(~(w > 0)):
            raise ValueError("edge weights must be strictly positive")
        if len(u) and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= n):
            raise ValueError("node id out of range")
        loops = u == v
        n_loops = int(loops.sum())
        u, v, w = u[~loops], v[~loops], w[~loops]
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        key = lo * n + hi
        uniq, inv = np.unique(key, return_inverse=True)
        merged = np.zeros(len(uniq))
        # np.add.at accumulates in input order, so merges are reproducible
        np.add.at(merged, inv, w)
        return cls(int(n), uniq // n, uniq % n, merged, n_loops)

    @classmethod
    def from_dense(cls, adj: np.ndarray, tol=0.0) -> "Graph":
        """Graph from the upper triangle of a symmetric weight matrix."""
        adj = np.asarray(adj, dtype=float)
        iu, ju = np.nonzero(np.triu(adj, 1) > tol)
        return cls.from_arrays(adj.shape[0], iu, ju, adj[iu, ju])

    @property
    def m(self) -> int:
        return len(self.w)

    def edges(self):
        return list(zip(self.u.tolist(), self.v.tolist(), self.w.tolist()))

    def with_weights(self, w) -> "Graph":
        return Graph(self.n, self.u, self.v, np.array(w, dtype=float))

    def subgraph(self, keep, weights=None) -> "Graph":
        """Edge-induced subgraph on the same node set (``keep`` is a mask or index)."""
        w = self.w[keep] if weights is None else np.asarray(weights, dtype=float)
        return Graph(self.n, self.u[keep].copy(), self.v[keep].copy(), np.array(w, dtype=float))

    @cached_property
    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n)
        np.add.at(d, self.u, self.w)
        np.add.at(d, self.v, self.w)
        return d

    @cached_property
    def neighbors(self) -> list[np.ndarray]:
        """Per-node sorted neighbor ids."""
        a = self.adjacency_sparse()
        return [a.indices[a.indptr[i]:a.indptr[i + 1]].copy() for i in range(self.n)]

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        a[self.u, self.v] = self.w
        a[self.v, self.u] = self.w
        return a

    def adjacency_sparse(self) -> sp.csr_matrix:
        rows = np.concatenate([self.u, self.v])
        cols = np.concatenate([self.v, self.u])
        vals = np.concatenate([self.w, self.w])
        a = sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))
        a.sort_indices()
        return a

    def laplacian_sparse(self) -> sp.csr_matrix:
        lap = sp.diags(self.degrees) - self.adjacency_sparse()
        lap = sp.csr_matrix(lap)
        lap.sort_indices()
        return lap

    def incidence(self) -> sp.csr_matrix:
        """Signed M x n edge-node incidence matrix (+1 at u, -1 at v)."""
        rows = np.repeat(np.arange(self.m), 2)
        cols = np.column_stack([self.u, self.v]).ravel()
        vals = np.tile([1.0, -1.0], self.m)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.m, self.n))

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.v, other.v)
            and np.array_equal(self.w, other.w)
        )

    __hash__ = None

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


def parse_edge_list(text) -> Graph:
    """Parse ``u v [w]`` lines into a canonical :class:`Graph`.

    ``text`` may be ``str``, ``bytes`` or a readable stream.  An optional
    first line ``# n=<count>`` declares the node count (to admit isolated
    nodes); otherwise ``n`` is one past the largest id seen.
    """
    if hasattr(text, "read"):
        text = text.read()
    if isinstance(text, bytes):
        text = text.decode()
    declared = None
    us, vs, ws = [], [], []
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _HEADER.match(line)
            if m and declared is None and not us:
                declared = int(m.group(1))
            continue
        parts = line.split("#", 1)[0].split()
        if len(parts) not in (2, 3):
            raise ParseError(f"line {lineno}: expected 'u v [w]', got {line!r}")
        try:
            a, b = int(parts[0]), int(parts[1])
            wt = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if a < 0 or b < 0:
            raise ParseError(f"line {lineno}: negative node id")
        if not wt > 0 or not np.isfinite(wt):
            raise ParseError(f"line {lineno}: weight must be positive, got {wt}")
        if declared is not None and max(a, b) >= declared:
            raise ParseError(f"line {lineno}: node id {max(a, b)} >= declared n={declared}")
        us.append(a)
        vs.append(b)
        ws.append(wt)
    if declared is not None:
        n = declared
    else:
        n = max(max(us, default=-1), max(vs, default=-1)) + 1
    if n < 1:
        raise ParseError("empty edge list without '# n=' header")
    return Graph.from_arrays(n, us, vs, ws)


def format_edge_list(g: Graph) -> str:
    lines = [f"# n={g.n}"]
    lines += [f"{a} {b} {wt:.17g}" for a, b, wt in zip(g.u.tolist(), g.v.tolist(), g.w.tolist())]
    return "\n".join(lines) + "\n"


def build_laplacian(g: Graph, kind: str = "combinatorial") -> np.ndarray:
    """Dense Laplacian-type matrix of ``g``.

    ``combinatorial`` is D - A, ``sym_norm`` is I - D^-1/2 A D^-1/2,
    ``rw_norm`` is D^-1 L and ``gcn_norm`` is the propagation matrix
    D~^-1/2 (A + I) D~^-1/2 used by graph convolution layers.
    """
    a = g.adjacency()
    d = g.degrees
    if kind == "combinatorial":
        return np.diag(d) - a
    if kind == "gcn_norm":
        at = a + np.eye(g.n)
        s = 1.0 / np.sqrt(d + 1.0)
        return s[:, None] * at * s[None, :]
    if kind in ("sym_norm", "rw_norm"):
        if np.any(d <= 0):
            raise ZeroDegreeError(f"zero degree at node {int(np.argmin(d))}; {kind} undefined")
        if kind == "sym_norm":
            s = 1.0 / np.sqrt(d)
            return np.eye(g.n) - s[:, None] * a * s[None, :]
        return (np.diag(d) - a) / d[:, None]
    raise ValueError(f"unknown Laplacian kind {kind!r}; expected one of {LAPLACIAN_KINDS}")


def connected_components(g: Graph) -> tuple[np.ndarray, int]:
    """Component labels in ``[0, count)`` and the component count."""
    count, labels = _cc(g.adjacency_sparse(), directed=False)
    return labels.astype(np.int64), int(count)


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def content_hash(g: Graph) -> int:
    """FNV-1a-64 of the canonical serialization (header plus sorted edges)."""
    return fnv1a64(format_edge_list(g).encode())


def hash_hex(h: int) -> str:
    return f"{h:016x}"
