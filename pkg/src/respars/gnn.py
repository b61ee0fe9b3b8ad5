"""Attention GNN layers (GAT, cosine, GaAN), GCN propagation and the
sparsified-graph forward pass.

Every neighborhood includes the node itself.  Attention is computed only on
the edges of whichever graph a head is given, so handing a head a
sparsified graph is all it takes to skip the pruned coefficients.

Parameters are plain nested containers: ``params[layer][head]`` is a dict of
arrays.  Its keys depend on the attention kind:

* ``gat``: ``W`` (D x F), ``a`` (2F,)
* ``cosine``: ``W``, ``beta`` (1,)
* ``gaan``: ``W``, ``src1``/``dst1`` (D x F), ``src2``/``dst2`` (F x F)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .effres import ResistanceTable
from .errors import ShapeError
from .graph import Graph, build_laplacian
from .sparsifier import SparsifyConfig, sample_count, sample_sparsifier

ATTENTION_KINDS = ("gat", "cosine", "gaan")
ACTIVATIONS = ("relu", "elu", "identity", "softmax")
SAMPLER_MODES = ("full", "fastgat-per-head", "fastgat-layer", "fastgat-const")
COMBINERS = ("concat", "average")


# -- elementwise pieces ------------------------------------------------------

def leaky_relu(x, slope=0.2):
    return np.where(x > 0, x, slope * x)


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def row_softmax(x):
    z = x - x.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)


def activate(x, kind):
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "elu":
        return elu(x)
    if kind == "identity":
        return x
    if kind == "softmax":
        return row_softmax(x)
    raise ValueError(f"unknown activation {kind!r}")


def activate_backward(x, y, dy, kind):
    if kind == "relu":
        return dy * (x > 0)
    if kind == "elu":
        return dy * np.where(x > 0, 1.0, y + 1.0)
    if kind == "identity":
        return dy
    if kind == "softmax":
        return y * (dy - np.sum(y * dy, axis=1, keepdims=True))
    raise ValueError(f"unknown activation {kind!r}")


# -- neighborhoods -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Neighborhood:
    """Directed attention edges ``(i <- j)`` sorted by target row, self-loops included."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    indptr: np.ndarray

    @classmethod
    def from_graph(cls, g: Graph) -> "Neighborhood":
        idx = np.arange(g.n)
        rows = np.concatenate([g.u, g.v, idx])
        cols = np.concatenate([g.v, g.u, idx])
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=g.n))])
        return cls(g.n, rows, cols, indptr)

    @property
    def size(self) -> int:
        """Number of attention coefficients (2 per edge plus one per node)."""
        return len(self.rows)

    def matrix(self, vals) -> sp.csr_matrix:
        return sp.csr_matrix((vals, self.cols, self.indptr), shape=(self.n, self.n))

    def row_sum(self, vals):
        return np.add.reduceat(vals, self.indptr[:-1])

    def softmax(self, e):
        mx = np.maximum.reduceat(e, self.indptr[:-1])
        ex = np.exp(e - mx[self.rows])
        return ex / self.row_sum(ex)[self.rows]


# -- attention scores ----------------------------------------------------------

def _check_head(kind, p, d_in):
    if kind not in ATTENTION_KINDS:
        raise ValueError(f"unknown attention kind {kind!r}")
    w = p["W"]
    if w.ndim != 2 or w.shape[0] != d_in:
        raise ShapeError(f"W has shape {w.shape}, expected ({d_in}, F)")
    f = w.shape[1]
    if kind == "gat" and p["a"].shape != (2 * f,):
        raise ShapeError(f"attention vector has shape {p['a'].shape}, expected ({2 * f},)")
    if kind == "cosine" and np.size(p["beta"]) != 1:
        raise ShapeError("beta must be a scalar")
    if kind == "gaan":
        for side in ("src", "dst"):
            if p[side + "1"].shape[0] != d_in or p[side + "2"].shape[0] != p[side + "1"].shape[1]:
                raise ShapeError(f"FC_{side} layer shapes are inconsistent")


def _unit_rows(h):
    norms = np.linalg.norm(h, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    return h / safe[:, None], norms


def _scores(kind, p, h, z, nb, slope):
    """Pre-softmax attention logits on ``nb`` plus what backward needs."""
    if kind == "gat":
        f = z.shape[1]
        s_src = z @ p["a"][:f]
        s_dst = z @ p["a"][f:]
        raw = s_src[nb.rows] + s_dst[nb.cols]
        return leaky_relu(raw, slope), {"raw": raw}
    if kind == "cosine":
        unit, norms = _unit_rows(h)
        cos = np.einsum("ij,ij->i", unit[nb.rows], unit[nb.cols])
        return float(np.ravel(p["beta"])[0]) * cos, {"unit": unit, "norms": norms, "cos": cos}
    pre_s = h @ p["src1"]
    pre_d = h @ p["dst1"]
    src = np.maximum(pre_s, 0.0) @ p["src2"]
    dst = np.maximum(pre_d, 0.0) @ p["dst2"]
    e = np.einsum("ij,ij->i", src[nb.rows], dst[nb.cols])
    return e, {"pre_s": pre_s, "pre_d": pre_d, "src": src, "dst": dst}


@dataclass(frozen=True, eq=False)
class AttentionMatrix:
    """Attention on a neighborhood: logits ``scores`` and their row softmax ``alpha``."""

    nb: Neighborhood
    scores: np.ndarray
    alpha: np.ndarray

    def gamma(self) -> np.ndarray:
        """Dense un-normalized attention matrix ``exp(scores)`` on the support."""
        out = np.zeros((self.nb.n, self.nb.n))
        out[self.nb.rows, self.nb.cols] = np.exp(self.scores)
        return out

    def dense_scores(self) -> np.ndarray:
        out = np.zeros((self.nb.n, self.nb.n))
        out[self.nb.rows, self.nb.cols] = self.scores
        return out

    def dense(self) -> np.ndarray:
        out = np.zeros((self.nb.n, self.nb.n))
        out[self.nb.rows, self.nb.cols] = self.alpha
        return out


def attention_matrix(g: Graph, h, p, kind="gat", slope=0.2) -> AttentionMatrix:
    h = np.asarray(h, dtype=float)
    if h.shape[0] != g.n:
        raise ShapeError(f"feature matrix has {h.shape[0]} rows, graph has {g.n} nodes")
    _check_head(kind, p, h.shape[1])
    nb = Neighborhood.from_graph(g)
    e, _ = _scores(kind, p, h, h @ p["W"], nb, slope)
    return AttentionMatrix(nb, e, nb.softmax(e))


# -- heads, layers, models -----------------------------------------------------

def head_forward(kind, p, h, nb, slope=0.2):
    """Pre-activation head output ``sum_j alpha_ij W h_j`` and a backward cache."""
    z = h @ p["W"]
    e, cache = _scores(kind, p, h, z, nb, slope)
    alpha = nb.softmax(e)
    cache.update(z=z, alpha=alpha, h=h)
    return nb.matrix(alpha) @ z, cache


def head_backward(kind, p, nb, cache, dout, slope=0.2):
    """Gradients of one head w.r.t. its parameters and its input features."""
    h, z, alpha = cache["h"], cache["z"], cache["alpha"]
    grads = {}
    dz = nb.matrix(alpha).T @ dout
    dalpha = np.einsum("ij,ij->i", dout[nb.rows], z[nb.cols])
    de = alpha * (dalpha - nb.row_sum(alpha * dalpha)[nb.rows])
    dh = np.zeros_like(h)
    if kind == "gat":
        f = z.shape[1]
        draw = de * np.where(cache["raw"] > 0, 1.0, slope)
        ds_src = np.bincount(nb.rows, weights=draw, minlength=nb.n)
        ds_dst = np.bincount(nb.cols, weights=draw, minlength=nb.n)
        grads["a"] = np.concatenate([z.T @ ds_src, z.T @ ds_dst])
        dz += np.outer(ds_src, p["a"][:f]) + np.outer(ds_dst, p["a"][f:])
    elif kind == "cosine":
        unit, norms = cache["unit"], cache["norms"]
        grads["beta"] = np.array([np.dot(de, cache["cos"])]).reshape(np.shape(p["beta"]))
        dmat = nb.matrix(float(np.ravel(p["beta"])[0]) * de)
        dunit = dmat @ unit + dmat.T @ unit
        radial = np.sum(unit * dunit, axis=1, keepdims=True)
        safe = np.where(norms > 0, norms, 1.0)[:, None]
        dh += np.where(norms[:, None] > 0, (dunit - unit * radial) / safe, 0.0)
    else:
        dmat = nb.matrix(de)
        for side, other, sign in (("src", "dst", False), ("dst", "src", True)):
            dv = (dmat.T if sign else dmat) @ cache[other]
            pre = cache["pre_" + side[0]]
            hid = np.maximum(pre, 0.0)
            grads[side + "2"] = hid.T @ dv
            dpre = (dv @ p[side + "2"].T) * (pre > 0)
            grads[side + "1"] = h.T @ dpre
            dh += dpre @ p[side + "1"].T
    grads["W"] = h.T @ dz
    dh += dz @ p["W"].T
    return grads, dh


@dataclass(frozen=True)
class LayerSpec:
    heads: int
    out_features: int
    kind: str = "gat"
    combiner: str = "concat"
    activation: str = "elu"

    def __post_init__(self):
        if self.kind not in ATTENTION_KINDS:
            raise ValueError(f"unknown attention kind {self.kind!r}")
        if self.combiner not in COMBINERS:
            raise ValueError(f"unknown combiner {self.combiner!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.heads < 1 or self.out_features < 1:
            raise ValueError("heads and out_features must be positive")
        if self.activation == "softmax" and self.combiner == "concat":
            raise ValueError("a classification (softmax) layer must average its heads")

    def width(self) -> int:
        return self.heads * self.out_features if self.combiner == "concat" else self.out_features


@dataclass(frozen=True)
class ModelConfig:
    layers: tuple
    mode: str = "full"
    epsilon: float = 0.5
    seed: int = 0
    q: int | None = None
    slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("model needs at least one layer")
        if self.layers[-1].combiner != "average":
            raise ValueError("the last layer must average its heads")
        if self.mode not in SAMPLER_MODES:
            raise ValueError(f"unknown sampler mode {self.mode!r}")
        if not 0.0 < self.slope < 1.0:
            raise ValueError("LeakyReLU slope must lie in (0, 1)")

    @classmethod
    def two_layer(cls, n_classes, kind="gat", heads=8, hidden=8, **kw) -> "ModelConfig":
        """Hidden attention layer (``heads`` x ``hidden``, ELU, concat) then a
        single-head softmax classifier."""
        return cls((
            LayerSpec(heads, hidden, kind, "concat", "elu"),
            LayerSpec(1, n_classes, kind, "average", "softmax"),
        ), **kw)


def _glorot(rng, shape):
    fan = shape[0] + (shape[1] if len(shape) > 1 else 1)
    lim = np.sqrt(6.0 / fan)
    return rng.uniform(-lim, lim, size=shape)


def init_params(model: ModelConfig, in_features: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    params = []
    d = in_features
    for spec in model.layers:
        f = spec.out_features
        heads = []
        for _ in range(spec.heads):
            p = {"W": _glorot(rng, (d, f))}
            if spec.kind == "gat":
                p["a"] = _glorot(rng, (2 * f,))
            elif spec.kind == "cosine":
                p["beta"] = np.ones(1)
            else:
                for side in ("src", "dst"):
                    p[side + "1"] = _glorot(rng, (d, f))
                    p[side + "2"] = _glorot(rng, (f, f))
            heads.append(p)
        params.append(heads)
        d = spec.width()
    return params


def layer_forward(spec: LayerSpec, heads, h, nbs, slope=0.2):
    """One layer.  ``nbs`` holds one neighborhood per head."""
    outs, caches = [], []
    for p, nb in zip(heads, nbs):
        _check_head(spec.kind, p, h.shape[1])
        out, cache = head_forward(spec.kind, p, h, nb, slope)
        outs.append(out)
        caches.append(cache)
    pre = np.hstack(outs) if spec.combiner == "concat" else np.mean(outs, axis=0)
    post = activate(pre, spec.activation)
    return post, {"pre": pre, "post": post, "heads": caches}


def layer_backward(spec: LayerSpec, heads, nbs, cache, dpost, slope=0.2):
    dpre = activate_backward(cache["pre"], cache["post"], dpost, spec.activation)
    grads, dh = [], 0.0
    f = spec.out_features
    for k, (p, nb, hc) in enumerate(zip(heads, nbs, cache["heads"])):
        if spec.combiner == "concat":
            dout = dpre[:, k * f:(k + 1) * f]
        else:
            dout = dpre / spec.heads
        g, dhk = head_backward(spec.kind, p, nb, hc, dout, slope)
        grads.append(g)
        dh = dh + dhk
    return grads, dh


def model_forward(model: ModelConfig, params, h, nbs):
    """Forward through every layer; ``nbs[l][k]`` is the neighborhood of head k in layer l."""
    caches = []
    x = np.asarray(h, dtype=float)
    for spec, heads, layer_nbs in zip(model.layers, params, nbs):
        x, cache = layer_forward(spec, heads, x, layer_nbs, model.slope)
        caches.append(cache)
    return x, caches


def model_backward(model: ModelConfig, params, nbs, caches, dout):
    grads = [None] * len(model.layers)
    d = dout
    for li in reversed(range(len(model.layers))):
        grads[li], d = layer_backward(model.layers[li], params[li], nbs[li], caches[li], d, model.slope)
    return grads


def gat_layer_forward(g: Graph, h, heads, combiner="concat", activation="elu", kind="gat", slope=0.2):
    """Multi-head attention layer on the full graph."""
    h = np.asarray(h, dtype=float)
    if h.shape[0] != g.n:
        raise ShapeError(f"feature matrix has {h.shape[0]} rows, graph has {g.n} nodes")
    spec = LayerSpec(len(heads), heads[0]["W"].shape[1], kind, combiner, activation)
    nb = Neighborhood.from_graph(g)
    out, _ = layer_forward(spec, heads, h, [nb] * len(heads), slope)
    return out


def gcn_forward(g: Graph, h, w, activation="relu"):
    """``sigma(D~^-1/2 (A + I) D~^-1/2 H W)``."""
    h = np.asarray(h, dtype=float)
    w = np.asarray(w, dtype=float)
    if h.shape[0] != g.n or h.shape[1] != w.shape[0]:
        raise ShapeError(f"incompatible shapes H{h.shape}, W{w.shape} for n={g.n}")
    return activate(build_laplacian(g, "gcn_norm") @ h @ w, activation)


# -- sampling plans --------------------------------------------------------------

def derive_seed(*parts) -> int:
    ss = np.random.SeedSequence([int(x) & 0xFFFFFFFFFFFFFFFF for x in parts])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True, eq=False)
class SamplePlan:
    """Which graph each (layer, head) attends over, and how many sampler calls made it."""

    graphs: list
    invocations: int
    _cache: dict = field(default_factory=dict, repr=False)

    @cached_property
    def neighborhoods(self):
        out = []
        for layer in self.graphs:
            row = []
            for g in layer:
                if id(g) not in self._cache:
                    self._cache[id(g)] = Neighborhood.from_graph(g)
                row.append(self._cache[id(g)])
            out.append(row)
        return out

    @property
    def attention_count(self) -> int:
        return sum(nb.size for layer in self.neighborhoods for nb in layer)


def plan_subgraphs(g: Graph, r: ResistanceTable | None, model: ModelConfig, epoch=None) -> SamplePlan:
    """Draw sparsified graphs at the granularity set by ``model.mode``.

    Seeds derive from ``(model.seed, layer, head)`` (plus ``epoch`` when given)
    so results do not depend on the order heads are evaluated in.
    """
    shape = [spec.heads for spec in model.layers]
    if model.mode == "full":
        return SamplePlan([[g] * k for k in shape], 0)
    if r is None:
        raise ValueError(f"mode {model.mode} needs a resistance table")
    q = model.q if model.q is not None else sample_count(g.n, g.m, model.epsilon)
    calls = 0

    def draw(*key):
        nonlocal calls
        calls += 1
        salt = () if epoch is None else (epoch,)
        cfg = SparsifyConfig(model.epsilon, q, derive_seed(model.seed, *key, *salt))
        return sample_sparsifier(g, r, cfg).graph

    if model.mode == "fastgat-const":
        shared = draw(-1)
        graphs = [[shared] * k for k in shape]
    elif model.mode == "fastgat-layer":
        graphs = []
        for li, k in enumerate(shape):
            lg = draw(li)
            graphs.append([lg] * k)
    else:
        graphs = [[draw(li, k) for k in range(kk)] for li, kk in enumerate(shape)]
    return SamplePlan(graphs, calls)


def forward(g: Graph, h, model: ModelConfig, params, r=None, plan=None):
    """Class probabilities for every node, full-graph or sparsified per ``model.mode``."""
    h = np.asarray(h, dtype=float)
    if h.shape[0] != g.n:
        raise ShapeError(f"feature matrix has {h.shape[0]} rows, graph has {g.n} nodes")
    if plan is None:
        plan = plan_subgraphs(g, r, model)
    out, _ = model_forward(model, params, h, plan.neighborhoods)
    return out


def fastgat_forward(g: Graph, h, model: ModelConfig, params, r: ResistanceTable):
    return forward(g, h, model, params, r)


# -- attention as a graph operator ---------------------------------------------------

def prop1_equivalence_check(g: Graph, h, p, slope=0.2) -> float:
    """Max abs gap between ``Gamma_D^-1 Gamma`` with ``Gamma = exp(LeakyReLU(.))``
    and the softmax attention rows."""
    att = attention_matrix(g, h, p, "gat", slope)
    gamma = att.gamma()
    rw = gamma / gamma.sum(axis=1, keepdims=True)
    return float(np.abs(rw - att.dense()).max())


def score_asymmetry(g: Graph, h, p, slope=0.2) -> float:
    """max |E - E^T| of the pre-softmax logits (zero for a symmetric attention vector)."""
    e = attention_matrix(g, h, p, "gat", slope).dense_scores()
    return float(np.abs(e - e.T).max())


def symmetric_attention_vector(a_half) -> np.ndarray:
    a_half = np.asarray(a_half, dtype=float)
    return np.concatenate([a_half, a_half])
