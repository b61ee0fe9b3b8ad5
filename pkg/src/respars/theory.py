"""Numerical checks of the propagation-error bounds for sparsified graphs and
the weight-drift experiment.

The bounds compare one propagation step on a graph and on its sparsifier:
``||H_f - H_s||_F <= c * eps * ||L_norm|| * ||HW||_F`` with ``c = 4`` for
GCN propagation and ``c = 6`` for symmetric attention.  ``eps`` is measured,
not assumed: it is the largest of the relative Laplacian eigenvalue
deviation, the sym-normalized eigenvalue deviation and the relative degree
deviation.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .effres import exact_resistances
from .gnn import AttentionMatrix, activate
from .graph import Graph, build_laplacian, connected_components
from .linalg import spectral_norm, sym_eigvals
from .sparsifier import (
    SparsifyConfig,
    relative_eig_deviation,
    sample_sparsifier,
    theory_sample_count,
)

GCN_CONSTANT = 4.0
ATTENTION_CONSTANT = 6.0
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class BoundReport:
    model: str
    lhs: float
    rhs: float
    eps_star: float
    degree_deviation: float
    seed: int | None = None
    context: dict = field(default_factory=dict, compare=False)

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs

    def as_json(self) -> dict:
        return {
            "model": self.model,
            "eps_star": self.eps_star,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "holds": self.holds,
            "seed": self.seed,
        }


def _norm_laplacian(adj):
    d = adj.sum(axis=1)
    if np.any(d <= 0):
        raise ValueError("normalized Laplacian needs positive degrees")
    s = 1.0 / np.sqrt(d)
    return np.eye(len(d)) - s[:, None] * adj * s[None, :]


def _eps_star(adj_f, adj_s):
    """Largest relative deviation over combinatorial spectra, normalized spectra and degrees."""
    off_f = adj_f - np.diag(np.diag(adj_f))
    off_s = adj_s - np.diag(np.diag(adj_s))
    lf = np.diag(off_f.sum(axis=1)) - off_f
    ls = np.diag(off_s.sum(axis=1)) - off_s
    comb = relative_eig_deviation(sym_eigvals(lf), sym_eigvals(ls))
    norm = relative_eig_deviation(sym_eigvals(_norm_laplacian(adj_f)),
                                  sym_eigvals(_norm_laplacian(adj_s)))
    df, ds = adj_f.sum(axis=1), adj_s.sum(axis=1)
    deg = float(np.max(np.abs(ds - df) / df))
    return max(comb, norm, deg), deg


def _check_activation(sigma):
    if sigma not in ("relu", "elu"):
        raise ValueError("bounds are stated for relu or elu activations")


def theorem1_check(g_full: Graph, g_sparse: Graph, h, w, sigma="relu", seed=None) -> BoundReport:
    """GCN propagation on a graph and its sparsifier, against the ``4 eps`` bound."""
    _check_activation(sigma)
    if g_full.n != g_sparse.n:
        raise ValueError("graphs must share the node set")
    if connected_components(g_full)[1] != connected_components(g_sparse)[1]:
        raise ValueError("sparsified graph has a different number of components")
    hw = np.asarray(h, dtype=float) @ np.asarray(w, dtype=float)
    hf = activate(build_laplacian(g_full, "gcn_norm") @ hw, sigma)
    hs = activate(build_laplacian(g_sparse, "gcn_norm") @ hw, sigma)
    af = g_full.adjacency() + np.eye(g_full.n)
    as_ = g_sparse.adjacency() + np.eye(g_sparse.n)
    eps, deg = _eps_star(af, as_)
    lhs = float(np.linalg.norm(hf - hs))
    rhs = GCN_CONSTANT * eps * spectral_norm(_norm_laplacian(af)) * float(np.linalg.norm(hw))
    return BoundReport("gcn", lhs, rhs, eps, deg, seed)


def _as_gamma(x) -> np.ndarray:
    if isinstance(x, AttentionMatrix):
        return x.gamma()
    return np.asarray(x, dtype=float)


def theorem2_check(gamma_full, gamma_sparse, h, w, sigma="relu", seed=None) -> BoundReport:
    """Attention propagation ``sigma(Gamma_D^-1 Gamma H W)`` on full and sparsified
    attention graphs, against the ``6 eps`` bound."""
    _check_activation(sigma)
    gf, gs = _as_gamma(gamma_full), _as_gamma(gamma_sparse)
    if gf.shape != gs.shape or gf.shape[0] != gf.shape[1]:
        raise ValueError("attention matrices must be square and of equal size")
    for m in (gf, gs):
        if np.abs(m - m.T).max() > SYMMETRY_TOL * max(1.0, np.abs(m).max()):
            raise ValueError("theorem requires symmetric attention")
    if np.any(gf < 0) or np.any(gs < 0):
        raise ValueError("attention matrices must be nonnegative")
    hw = np.asarray(h, dtype=float) @ np.asarray(w, dtype=float)
    df, ds = gf.sum(axis=1), gs.sum(axis=1)
    hf = activate((gf / df[:, None]) @ hw, sigma)
    hs = activate((gs / ds[:, None]) @ hw, sigma)
    eps, deg = _eps_star(gf, gs)
    lhs = float(np.linalg.norm(hf - hs))
    rhs = ATTENTION_CONSTANT * eps * spectral_norm(_norm_laplacian(gf)) * float(np.linalg.norm(hw))
    return BoundReport("gat", lhs, rhs, eps, deg, seed)


def sparsify_gamma(gamma, epsilon, seed, q=None):
    """Sparsify the off-diagonal part of a symmetric attention matrix as a
    weighted graph (theory-grade ``q`` by default); the diagonal is kept."""
    gm = _as_gamma(gamma)
    g = Graph.from_dense(gm - np.diag(np.diag(gm)))
    r = exact_resistances(g)
    if q is None:
        q = theory_sample_count(g.n, epsilon)
    h = sample_sparsifier(g, r, SparsifyConfig(epsilon, q, seed)).graph
    return h.adjacency() + np.diag(np.diag(gm))


def lemma1_check(a, d) -> dict:
    """``||A - D^-1 A D|| <= ||A|| (||I - D^-1|| + ||D^-1|| ||I - D||)`` in the spectral norm."""
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    if d.ndim == 2:
        if np.any(d != np.diag(np.diag(d))):
            raise ValueError("D must be diagonal")
        d = np.diag(d)
    if np.any(d <= 0):
        raise ValueError("D must have a positive diagonal")
    eye = np.eye(len(d))
    dm, dinv = np.diag(d), np.diag(1.0 / d)
    two = lambda m: float(np.linalg.norm(m, 2))  # noqa: E731
    lhs = two(a - dinv @ a @ dm)
    rhs = two(a) * (two(eye - dinv) + two(dinv) * two(eye - dm))
    return {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs + 1e-10}


# -- weight drift --------------------------------------------------------------------

@dataclass
class DriftReport:
    rows: list  # one {"epsilon", "mean_error", "errors"} per epsilon

    def table(self) -> str:
        lines = ["epsilon  mean_rel_frobenius_error"]
        lines += [f"{row['epsilon']:<8g} {row['mean_error']:.6g}" for row in self.rows]
        return "\n".join(lines)


def weight_error(params_full, params_sparse) -> float:
    """Mean over layers and heads of ``||W - W_s||_F / ||W||_F``."""
    errs = []
    for lf, ls in zip(params_full, params_sparse):
        for pf, ps in zip(lf, ls):
            errs.append(np.linalg.norm(pf["W"] - ps["W"]) / np.linalg.norm(pf["W"]))
    return float(np.mean(errs))


def weight_drift_experiment(data, epsilons, seeds, cfg, r=None) -> DriftReport:
    """Train full-graph and constant-sparsifier models from the same initialization
    and report the mean relative drift of their weight matrices.

    ``data`` is an :class:`~respars.synth.SBMData`; ``cfg`` a
    :class:`~respars.train.TrainConfig` whose model mode is ignored.
    ``epsilon == 0`` means no sparsification, so its error is exactly zero.
    """
    from .train import train

    g = data.graph
    if r is None and any(e > 0 for e in epsilons):
        r = exact_resistances(g)
    full_cache = {}
    rows = []
    for eps in epsilons:
        errors = []
        for s in seeds:
            if s not in full_cache:
                full_cfg = replace(cfg, seed=s, model=replace(cfg.model, mode="full", seed=s))
                full_cache[s] = train(full_cfg, g, data.features, data.labels).params
            if eps == 0:
                params_s = full_cache[s]
            else:
                sp_cfg = replace(cfg, seed=s, model=replace(cfg.model, mode="fastgat-const",
                                                           epsilon=eps, seed=s))
                params_s = train(sp_cfg, g, data.features, data.labels, r).params
            errors.append(weight_error(full_cache[s], params_s))
        rows.append({"epsilon": eps, "mean_error": float(np.mean(errors)), "errors": errors})
    return DriftReport(rows)
