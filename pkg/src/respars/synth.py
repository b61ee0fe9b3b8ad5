"""Seeded synthetic graphs: Erdos-Renyi, random connected graphs and a
stochastic block model with Gaussian block-mean features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, connected_components


def erdos_renyi(n: int, p: float, seed: int) -> Graph:
    rng = np.random.default_rng(seed)
    iu, ju = np.nonzero(np.triu(rng.random((n, n)) < p, 1))
    return Graph.from_arrays(n, iu, ju)


def random_connected_graph(n: int, p: float, seed: int, weights=(1.0, 1.0)) -> Graph:
    """Random spanning tree plus Erdos-Renyi extras, weights uniform in ``weights``."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    parents = np.array([order[rng.integers(0, i)] for i in range(1, n)], dtype=np.int64)
    iu, ju = np.nonzero(np.triu(rng.random((n, n)) < p, 1))
    u = np.concatenate([order[1:], iu])
    v = np.concatenate([parents, ju])
    lo, hi = weights
    w = rng.uniform(lo, hi, len(u)) if hi > lo else np.full(len(u), float(lo))
    return Graph.from_arrays(n, u, v, w)


@dataclass(frozen=True)
class SBMSpec:
    n: int = 120
    k: int = 3
    p_in: float = 0.3
    p_out: float = 0.02
    features: int = 16
    seed: int = 1
    signal: float = 1.0  # block-mean offset, in units of the unit noise

    def __post_init__(self):
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ValueError("need 0 <= p_out <= p_in <= 1")
        if self.k < 1 or self.n % self.k:
            raise ValueError("n must be divisible by k")


@dataclass(frozen=True, eq=False)
class SBMData:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    masks: dict


def split_masks(n: int, rng, fractions=(0.6, 0.2, 0.2)) -> dict:
    perm = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    masks = {name: np.zeros(n, dtype=bool) for name in ("train", "val", "test")}
    masks["train"][perm[:n_train]] = True
    masks["val"][perm[n_train:n_train + n_val]] = True
    masks["test"][perm[n_train + n_val:]] = True
    return masks


def sbm(spec: SBMSpec, max_attempts: int = 10) -> SBMData:
    """Sample a connected SBM graph (retrying up to ``max_attempts``) with features and a 60/20/20 split."""
    rng = np.random.default_rng(spec.seed)
    labels = np.repeat(np.arange(spec.k), spec.n // spec.k)
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, spec.p_in, spec.p_out)
    for _ in range(max_attempts):
        iu, ju = np.nonzero(np.triu(rng.random((spec.n, spec.n)) < prob, 1))
        g = Graph.from_arrays(spec.n, iu, ju)
        if connected_components(g)[1] == 1:
            break
    else:
        raise ValueError(f"SBM graph still disconnected after {max_attempts} attempts")
    means = np.zeros((spec.k, spec.features))
    for b in range(spec.k):
        means[b, b % spec.features] = spec.signal
    x = means[labels] + rng.standard_normal((spec.n, spec.features))
    return SBMData(g, x, labels, split_masks(spec.n, rng))
