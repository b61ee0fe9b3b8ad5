"""Resistance-weighted edge sampling and spectral verification of the result."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .effres import ResistanceTable
from .graph import Graph, build_laplacian, connected_components, content_hash
from .linalg import ZERO_EIG_RTOL, sym_eigvals

MIN_SKETCHED_RESISTANCE = 1e-12


@dataclass(frozen=True)
class SparsifyConfig:
    epsilon: float = 0.5
    q: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.q is not None and self.q < 1:
            raise ValueError("q must be at least 1")


@dataclass(frozen=True, eq=False)
class SparsifiedGraph:
    graph: Graph
    epsilon: float
    q: int
    seed: int
    original_edges: int
    multiplicity: np.ndarray  # per original edge, number of times drawn

    @property
    def distinct_edges(self) -> int:
        return self.graph.m

    @property
    def percent_reduction(self) -> float:
        """Fraction of original edges dropped, ``1 - distinct / M`` (x100 for a percentage)."""
        if self.original_edges == 0:
            return 0.0
        return 1.0 - self.distinct_edges / self.original_edges

    def record(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "q": self.q,
            "seed": self.seed,
            "distinct_edges": self.distinct_edges,
            "percent_reduction": self.percent_reduction,
        }


def sample_count(n: int, m: int, epsilon: float) -> int:
    """Number of with-replacement draws, ``max(1, int(0.16 n ln n / eps^2))``.

    ``m`` is accepted for signature symmetry; it does not cap the count.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if n < 2:
        raise ValueError("need at least two nodes")
    return max(1, int(math.floor(0.16 * n * math.log(n) / epsilon**2)))


def theory_sample_count(n: int, epsilon: float, constant: float = 4.0) -> int:
    """Oversampled count ``ceil(c n ln n / eps^2)`` for the small-eps regime."""
    return max(1, math.ceil(constant * n * math.log(n) / epsilon**2))


def sampling_probabilities(g: Graph, r: ResistanceTable) -> np.ndarray:
    if len(r.values) != g.m:
        raise ValueError("resistance table does not match the graph's edge count")
    vals = r.values
    if r.method == "sketched":
        vals = np.maximum(vals, MIN_SKETCHED_RESISTANCE)
    mass = g.w * vals
    total = mass.sum()
    if not total > 0:
        raise ValueError("all sampling probabilities are zero (edgeless graph?)")
    return mass / total


def draw_edges(p: np.ndarray, q: int, seed: int) -> np.ndarray:
    """Indices of ``q`` independent draws from ``p``.

    Philox is counter-based, so draw ``i`` depends only on ``(seed, i)``.
    """
    rng = np.random.Generator(np.random.Philox(key=seed & (2**128 - 1)))
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(q), side="right")
    return np.minimum(idx, len(p) - 1)


def sample_sparsifier(g: Graph, r: ResistanceTable, cfg: SparsifyConfig) -> SparsifiedGraph:
    """Draw ``q`` edges with probability proportional to ``w_e R_e``.

    An edge drawn ``m_e`` times gets weight ``m_e w_e / (q p_e)``; undrawn
    edges are dropped.
    """
    if r.graph_hash != content_hash(g):
        raise ValueError("resistance table was computed for a different graph")
    p = sampling_probabilities(g, r)
    q = cfg.q if cfg.q is not None else sample_count(g.n, g.m, cfg.epsilon)
    mult = np.bincount(draw_edges(p, q, cfg.seed), minlength=g.m)
    keep = mult > 0
    w = mult[keep] * g.w[keep] / (q * p[keep])
    h = g.subgraph(keep, w)
    return SparsifiedGraph(h, cfg.epsilon, q, cfg.seed, g.m, mult)


@dataclass(frozen=True)
class SpectralReport:
    eigs_g: np.ndarray
    eigs_h: np.ndarray
    epsilon_star: float
    degree_deviation: float
    components_g: int
    components_h: int
    epsilon_star_norm: float | None = None

    @property
    def components_match(self) -> bool:
        return self.components_g == self.components_h

    @property
    def passed(self) -> bool:
        return self.components_match

    @property
    def diagnostic(self) -> str:
        if self.components_match:
            return ""
        return (f"component counts differ: original has {self.components_g}, "
                f"sparsified has {self.components_h}")


def relative_eig_deviation(eg: np.ndarray, eh: np.ndarray) -> float:
    """max |lam_i(H) - lam_i(G)| / lam_i(G) over nonzero lam_i(G), index by index."""
    scale = np.abs(eg).max() if len(eg) else 0.0
    nz = eg > ZERO_EIG_RTOL * scale
    if not np.any(nz):
        return 0.0
    return float(np.max(np.abs(eh[nz] - eg[nz]) / eg[nz]))


def degree_deviation(g: Graph, h: Graph) -> float:
    dg, dh = g.degrees, h.degrees
    nz = dg > 0
    if not np.any(nz):
        return 0.0
    return float(np.max(np.abs(dh[nz] - dg[nz]) / dg[nz]))


def spectral_check(g: Graph, h, method="auto") -> SpectralReport:
    """Compare the sorted combinatorial-Laplacian spectra of ``g`` and ``h``."""
    if isinstance(h, SparsifiedGraph):
        h = h.graph
    if g.n != h.n:
        raise ValueError(f"node counts differ ({g.n} vs {h.n})")
    eg = sym_eigvals(build_laplacian(g), method)
    eh = sym_eigvals(build_laplacian(h), method)
    _, cg = connected_components(g)
    _, ch = connected_components(h)
    norm_dev = None
    if np.all(g.degrees > 0) and np.all(h.degrees > 0):
        ng = sym_eigvals(build_laplacian(g, "sym_norm"), method)
        nh = sym_eigvals(build_laplacian(h, "sym_norm"), method)
        norm_dev = relative_eig_deviation(ng, nh)
    return SpectralReport(
        eg, eh, relative_eig_deviation(eg, eh), degree_deviation(g, h), cg, ch, norm_dev
    )


def expectation_check(g: Graph, r: ResistanceTable, epsilon: float, trials: int = 10_000,
                      seed: int = 0, q: int | None = None) -> float:
    """Max relative entry error between the Monte-Carlo mean of sampled
    Laplacians and the original Laplacian, over the original's nonzero entries."""
    if trials < 1000:
        raise ValueError("expectation_check needs at least 1000 trials")
    p = sampling_probabilities(g, r)
    if q is None:
        q = sample_count(g.n, g.m, epsilon)
    idx = draw_edges(p, q * trials, seed)
    counts = np.bincount(idx, minlength=g.m)
    # the sampled Laplacian is linear in the edge weights, so average the weights
    mean_w = counts * g.w / (q * p) / trials
    lg = build_laplacian(g)
    # edges never drawn have mean weight 0, which with_weights tolerates
    lh = build_laplacian(g.with_weights(mean_w))
    nz = lg != 0
    return float(np.max(np.abs(lh[nz] - lg[nz]) / np.abs(lg[nz])))

