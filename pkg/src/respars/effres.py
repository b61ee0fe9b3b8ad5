"""Effective resistances: exact (pseudo-inverse) and sketched (random projection + CG).

The sketch uses the identity ``R_uv = ||Y^1/2 B L^+ (x_u - x_v)||^2``: the
resistances are squared distances between columns of ``Y^1/2 B L^+``, which a
random ``t x M`` sign matrix preserves up to ``1 +- tau``.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import CacheFormatError, StaleCacheError
from .graph import Graph, build_laplacian, connected_components, content_hash, hash_hex
from .io import atomic_write_text
from .linalg import cg_solve_laplacian, pinv_laplacian

log = logging.getLogger(__name__)

CACHE_MAGIC = "# respars-cache v1"
SKETCH_CHUNK = 256


@dataclass(frozen=True, eq=False)
class ResistanceTable:
    values: np.ndarray  # aligned with the graph's canonical edge order
    method: str  # "exact" or "sketched"
    graph_hash: int
    tau: float | None = None
    t: int | None = None
    seed: int | None = None

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, ResistanceTable):
            return NotImplemented
        return (
            self.method == other.method
            and self.graph_hash == other.graph_hash
            and (self.tau, self.t, self.seed) == (other.tau, other.t, other.seed)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True)
class SketchConfig:
    tau: float = 0.1
    t: int | None = None
    seed: int = 0
    cg_tol: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.t is not None and self.t < 1:
            raise ValueError("sketch needs at least one row")

    def rows(self, n: int) -> int:
        if self.t is not None:
            return self.t
        return max(1, math.ceil(24.0 * math.log(n) / self.tau**2))


def exact_resistances(g: Graph) -> ResistanceTable:
    """``R_e = b_e^T L^+ b_e`` for every edge, from a dense pseudo-inverse."""
    lp = pinv_laplacian(build_laplacian(g, "combinatorial"))
    d = np.diag(lp)
    r = d[g.u] + d[g.v] - 2.0 * lp[g.u, g.v]
    return ResistanceTable(r, "exact", content_hash(g))


def _rademacher_row(seed: int, row: int, m: int) -> np.ndarray:
    # one counter-based stream per row: identical output whatever the scheduling
    rng = np.random.Generator(np.random.Philox(key=(seed ^ row) & (2**128 - 1)))
    return rng.integers(0, 2, size=m).astype(float) * 2.0 - 1.0


def _sketch_chunk(g, lap, bt_scaled, seed, rows, t, tol):
    signs = np.stack([_rademacher_row(seed, i, g.m) for i in rows]) / math.sqrt(t)
    # each column is one row of R Y^1/2 B, as a vector over nodes
    rhs = bt_scaled @ signs.T
    z = cg_solve_laplacian(lap, rhs, tol=tol)
    diff = z[g.u] - z[g.v]
    return np.einsum("ij,ij->i", diff, diff)


def approx_resistances(g: Graph, cfg: SketchConfig, workers: int = 1) -> ResistanceTable:
    """Sketched resistances within ``1 +- tau`` (with high probability).

    Rows of the projection are split into fixed chunks; ``workers`` only
    changes how many chunks run at once, never the result.
    """
    if not isinstance(cfg, SketchConfig):
        raise TypeError("cfg must be a SketchConfig")
    t = cfg.rows(g.n)
    if g.m == 0:
        return ResistanceTable(np.zeros(0), "sketched", content_hash(g), cfg.tau, t, cfg.seed)
    lap = g.laplacian_sparse()
    bt_scaled = (g.incidence().T @ sp.diags(np.sqrt(g.w))).tocsr()
    chunks = [range(s, min(s + SKETCH_CHUNK, t)) for s in range(0, t, SKETCH_CHUNK)]

    def run(rows):
        return _sketch_chunk(g, lap, bt_scaled, cfg.seed, rows, t, cfg.cg_tol)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(rows) for rows in chunks]
    total = np.zeros(g.m)
    for part in parts:
        total += part
    log.debug("sketched %d edges with t=%d rows in %d chunks", g.m, t, len(chunks))
    return ResistanceTable(total, "sketched", content_hash(g), cfg.tau, t, cfg.seed)


@dataclass(frozen=True)
class FosterResult:
    total: float
    expected: float
    passed: bool


def foster_check(g: Graph, r: ResistanceTable) -> FosterResult:
    """Foster's theorem: sum of ``w_e R_e`` equals ``n`` minus the component count."""
    if r.method != "exact":
        raise ValueError("oracle requires exact resistances")
    total = float(np.dot(g.w, r.values))
    _, comps = connected_components(g)
    expected = float(g.n - comps)
    return FosterResult(total, expected, abs(total - expected) <= 1e-6 * g.n)


def _fmt(x):
    return "" if x is None else str(x)


def cache_store(path, r: ResistanceTable, g: Graph) -> None:
    """Write ``r`` as a text cache file keyed by the graph's content hash."""
    if len(r.values) != g.m or r.graph_hash != content_hash(g):
        raise ValueError("resistance table does not belong to this graph")
    lines = [
        CACHE_MAGIC,
        f"graph_hash={hash_hex(r.graph_hash)}",
        f"method={r.method}",
        f"tau={_fmt(r.tau)}",
        f"t={_fmt(r.t)}",
        f"seed={_fmt(r.seed)}",
    ]
    lines += [f"{a} {b} {x:.17g}" for a, b, x in zip(g.u.tolist(), g.v.tolist(), r.values.tolist())]
    atomic_write_text(path, "\n".join(lines) + "\n")


def cache_load(path, g: Graph) -> ResistanceTable:
    """Load a cache file, refusing it when it was computed for a different graph."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if len(lines) < 6 or lines[0].strip() != CACHE_MAGIC:
        raise CacheFormatError(f"{path}: not a resistance cache")
    meta = {}
    for line in lines[1:6]:
        key, sep, val = line.partition("=")
        if not sep:
            raise CacheFormatError(f"{path}: bad header line {line!r}")
        meta[key.strip()] = val.strip()
    try:
        stored_hash = int(meta["graph_hash"], 16)
        method = meta["method"]
        tau = float(meta["tau"]) if meta["tau"] else None
        t = int(meta["t"]) if meta["t"] else None
        seed = int(meta["seed"]) if meta["seed"] else None
    except (KeyError, ValueError) as exc:
        raise CacheFormatError(f"{path}: bad header ({exc})") from None
    if method not in ("exact", "sketched"):
        raise CacheFormatError(f"{path}: unknown method {method!r}")
    if stored_hash != content_hash(g):
        raise StaleCacheError(f"stale cache: {path} was computed for a different graph")
    body = [ln.split() for ln in lines[6:] if ln.strip()]
    if len(body) != g.m or any(len(row) != 3 for row in body):
        raise CacheFormatError(f"{path}: expected {g.m} 'u v r' lines")
    try:
        uv = np.array([[int(a), int(b)] for a, b, _ in body], dtype=np.int64).reshape(-1, 2)
        vals = np.array([float(x) for _, _, x in body])
    except ValueError as exc:
        raise CacheFormatError(f"{path}: {exc}") from None
    if not (np.array_equal(uv[:, 0], g.u) and np.array_equal(uv[:, 1], g.v)):
        raise CacheFormatError(f"{path}: edge order does not match the graph")
    return ResistanceTable(vals, method, stored_hash, tau, t, seed)
