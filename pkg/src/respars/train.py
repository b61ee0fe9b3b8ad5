"""Training for attention GNNs with hand-written gradients and Adam.

Sampled subgraphs are treated as constants within a step; no gradient flows
through the sampler.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .effres import ResistanceTable
from .gnn import (
    ModelConfig,
    Neighborhood,
    SamplePlan,
    derive_seed,
    init_params,
    model_backward,
    model_forward,
    plan_subgraphs,
)
from .graph import Graph
from .sparsifier import SparsifyConfig, sample_count, sample_sparsifier, sampling_probabilities

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-12


# -- metrics -----------------------------------------------------------------

def _mask_index(mask, n=None):
    idx = np.flatnonzero(np.asarray(mask, dtype=bool))
    if idx.size == 0:
        raise ValueError("mask selects no nodes")
    return idx


def cross_entropy_loss(probs, labels, mask) -> float:
    """Mean negative log-likelihood of the true class over masked nodes."""
    idx = _mask_index(mask)
    p = np.clip(probs[idx, labels[idx]], PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(np.log(p)))


def cross_entropy_backward(probs, labels, mask):
    idx = _mask_index(mask)
    p = probs[idx, labels[idx]]
    d = np.zeros_like(probs)
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    d[idx[inside], labels[idx[inside]]] = -1.0 / (idx.size * p[inside])
    return d


def micro_f1(predictions, labels, mask) -> float:
    """Micro-averaged F1 for single-label predictions (equal to accuracy)."""
    idx = _mask_index(mask)
    pred = np.asarray(predictions)
    if pred.ndim == 2:
        pred = pred.argmax(axis=1)
    tp = int(np.sum(pred[idx] == labels[idx]))
    wrong = idx.size - tp
    # every wrong prediction is one false positive and one false negative
    return 2.0 * tp / (2.0 * tp + 2.0 * wrong)


def accuracy(probs, labels, mask) -> float:
    idx = _mask_index(mask)
    return float(np.mean(probs[idx].argmax(axis=1) == labels[idx]))


# -- gradients -----------------------------------------------------------------

def _neighborhoods(model, structure):
    if isinstance(structure, SamplePlan):
        return structure.neighborhoods
    if isinstance(structure, Graph):
        nb = Neighborhood.from_graph(structure)
        return [[nb] * spec.heads for spec in model.layers]
    return structure


def backprop_gradients(model: ModelConfig, params, structure, h, labels, mask):
    """Loss and exact gradients for every parameter.

    ``structure`` is a :class:`Graph` (all heads attend over it), a
    :class:`SamplePlan`, or nested per-(layer, head) neighborhoods.
    Returns ``(loss, grads)`` with ``grads`` shaped like ``params``.
    """
    nbs = _neighborhoods(model, structure)
    probs, caches = model_forward(model, params, h, nbs)
    loss = cross_entropy_loss(probs, labels, mask)
    grads = model_backward(model, params, nbs, caches, cross_entropy_backward(probs, labels, mask))
    return loss, grads


def iter_params(params):
    for li, layer in enumerate(params):
        for k, head in enumerate(layer):
            for name in sorted(head):
                yield (li, k, name), head[name]


def _kink_signs(caches):
    parts = []
    for cache in caches:
        parts.append(cache["pre"] > 0)
        for hc in cache["heads"]:
            for key in ("raw", "pre_s", "pre_d"):
                if key in hc:
                    parts.append(hc[key] > 0)
    return parts


@dataclass
class GradcheckResult:
    max_rel_error: float
    passed: bool
    checked: int
    excluded: int
    worst: tuple | None = None


def finite_diff_gradcheck(model, params, data, h=1e-4, tol=1e-4) -> GradcheckResult:
    """Compare analytic gradients against central differences on every scalar.

    ``data`` is ``(structure, features, labels, mask)``.  A coordinate is
    excluded when the +-h perturbation flips the sign of any ReLU, ELU or
    LeakyReLU pre-activation, since the loss is not differentiable there.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    structure, x, labels, mask = data
    nbs = _neighborhoods(model, structure)
    _, grads = backprop_gradients(model, params, nbs, x, labels, mask)

    def evaluate():
        probs, caches = model_forward(model, params, x, nbs)
        return cross_entropy_loss(probs, labels, mask), _kink_signs(caches)

    _, base = evaluate()
    worst, worst_key, checked, excluded = 0.0, None, 0, 0
    for key, arr in iter_params(params):
        ga = grads[key[0]][key[1]][key[2]]
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            fp, sp_ = evaluate()
            arr[idx] = orig - h
            fm, sm = evaluate()
            arr[idx] = orig
            if any(not np.array_equal(a, b) for a, b in zip(base, sp_)) or any(
                not np.array_equal(a, b) for a, b in zip(base, sm)
            ):
                excluded += 1
                continue
            gn = (fp - fm) / (2.0 * h)
            g = ga[idx]
            err = abs(g - gn) / max(abs(g), abs(gn), 1e-8)
            checked += 1
            if err > worst:
                worst, worst_key = err, (key, idx)
    return GradcheckResult(float(worst), bool(worst <= tol), checked, excluded, worst_key)


# -- Adam ----------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_step(param, grad, state: AdamState, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns the new parameter and state."""
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), AdamState(m, v, t)


class Adam:
    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = {}

    def step(self, params, grads):
        for key, arr in iter_params(params):
            li, k, name = key
            st = self.state.get(key)
            if st is None:
                st = AdamState(np.zeros_like(arr), np.zeros_like(arr))
            new, self.state[key] = adam_step(arr, grads[li][k][name], st, self.lr,
                                             self.beta1, self.beta2, self.eps)
            params[li][k][name] = new


# -- training loop -----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig
    masks: dict
    epochs: int = 200
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        tr, va, te = (np.asarray(self.masks[k], dtype=bool) for k in ("train", "val", "test"))
        if np.any(tr & va) or np.any(tr & te) or np.any(va & te):
            raise ValueError("train/val/test masks must be disjoint")
        if not tr.any():
            raise ValueError("need at least one training node")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float
    edges: int
    attention: int
    seconds: float = field(default=0.0, compare=False)

    def as_dict(self, include_time=False) -> dict:
        out = {
            "epoch": self.epoch,
            "loss": self.loss,
            "train_acc": self.train_acc,
            "val_acc": self.val_acc,
            "edges": self.edges,
            "attention": self.attention,
        }
        if include_time:
            out["seconds"] = self.seconds
        return out


@dataclass
class TrainResult:
    trace: list
    params: list
    test_acc: float | None = None
    train_acc: float | None = None
    val_acc: float | None = None
    edge_trace: list = field(default_factory=list)
    actions: list = field(default_factory=list)


def _plan_edges(plan: SamplePlan) -> int:
    distinct = {id(g): g.m for layer in plan.graphs for g in layer}
    return int(round(sum(distinct.values()) / len(distinct)))


def _fit(cfg: TrainConfig, g, x, labels, plan_for_epoch, after_epoch=None):
    model = cfg.model
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    params = init_params(model, x.shape[1], cfg.seed)
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    trace = []
    masks = {k: np.asarray(v, dtype=bool) for k, v in cfg.masks.items()}
    val_mask = masks["val"] if masks["val"].any() else masks["train"]
    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        plan = plan_for_epoch(epoch)
        nbs = plan.neighborhoods
        probs, caches = model_forward(model, params, x, nbs)
        loss = cross_entropy_loss(probs, labels, masks["train"])
        dprobs = cross_entropy_backward(probs, labels, masks["train"])
        grads = model_backward(model, params, nbs, caches, dprobs)
        opt.step(params, grads)
        rec = EpochRecord(
            epoch, loss,
            accuracy(probs, labels, masks["train"]),
            accuracy(probs, labels, val_mask),
            _plan_edges(plan), plan.attention_count,
            time.perf_counter() - start,
        )
        trace.append(rec)
        if after_epoch is not None:
            after_epoch(epoch, trace)
    return params, trace


def _evaluate(model, params, x, labels, masks, plan):
    probs, _ = model_forward(model, params, np.asarray(x, dtype=float), plan.neighborhoods)
    out = {}
    for name in ("train", "val", "test"):
        m = np.asarray(masks[name], dtype=bool)
        out[name] = accuracy(probs, labels, m) if m.any() else None
    return out


def train(cfg: TrainConfig, g: Graph, x, labels, r: ResistanceTable | None = None) -> TrainResult:
    """Train ``cfg.model`` for ``cfg.epochs`` full-batch Adam steps.

    ``fastgat-const`` samples one subgraph for the whole run; per-layer and
    per-head modes redraw every epoch.
    """
    model = cfg.model
    if model.mode in ("full", "fastgat-const"):
        fixed = plan_subgraphs(g, r, model)
        plan_for_epoch = lambda epoch: fixed  # noqa: E731
    else:
        fixed = None
        plan_for_epoch = lambda epoch: plan_subgraphs(g, r, model, epoch=epoch)  # noqa: E731
    params, trace = _fit(cfg, g, x, labels, plan_for_epoch)
    eval_plan = fixed if fixed is not None else plan_subgraphs(g, r, model, epoch=cfg.epochs)
    acc = _evaluate(model, params, x, labels, cfg.masks, eval_plan)
    return TrainResult(trace, params, acc["test"], acc["train"], acc["val"],
                       [rec.edges for rec in trace])


# -- adaptive sparsity ---------------------------------------------------------------

@dataclass(frozen=True)
class AdaptiveConfig:
    window: int = 20
    increment_fraction: float = 0.003
    eps_floor: float = 0.5
    eps_start: float = 0.9
    delta: float = 1e-4
    metric: str = "train"  # slope of "train" or "val" accuracy
    undo_on_improvement: bool = True

    def __post_init__(self):
        if self.eps_floor > self.eps_start:
            raise ValueError("eps_floor must not exceed eps_start")
        if self.window < 2:
            raise ValueError("window needs at least two epochs to fit a slope")
        if self.metric not in ("train", "val"):
            raise ValueError("metric must be 'train' or 'val'")

    def increment(self, m: int) -> int:
        return max(1, math.ceil(self.increment_fraction * m))


class AdaptiveController:
    """Decides, once per window, whether to add edges, drop the last batch, or keep.

    The window's accuracy slope is a least-squares fit.  Learning counts as
    stalled when the slope falls below ``delta`` or drops more than ``delta``
    under the previous window's slope; a stall adds a batch.  When the last
    action was an addition and the slope then rose by at least ``delta``,
    the most recent batch is removed.
    """

    def __init__(self, cfg: AdaptiveConfig):
        self.cfg = cfg
        self.prev_slope = None
        self.last_action = None

    def decide(self, window_acc) -> str:
        y = np.asarray(window_acc, dtype=float)
        slope = float(np.polyfit(np.arange(len(y)), y, 1)[0])
        d = self.cfg.delta
        prev = self.prev_slope
        stalled = slope < d or (prev is not None and slope < prev - d)
        if stalled:
            action = "add"
        elif (self.cfg.undo_on_improvement and self.last_action == "add"
              and prev is not None and slope >= prev + d):
            action = "remove"
        else:
            action = "keep"
        self.prev_slope = slope
        self.last_action = action
        return action


class _EdgeSet:
    """Mutable retained-edge set over an original graph, with batch history."""

    def __init__(self, g: Graph, p, q, mult):
        self.g, self.p, self.q = g, p, q
        self.weight = np.where(mult > 0, mult * g.w / (q * p), 0.0)
        self.batches = []

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.weight))

    def graph(self) -> Graph:
        keep = self.weight > 0
        return self.g.subgraph(keep, self.weight[keep])

    def add(self, k, seed) -> int:
        absent = np.flatnonzero(self.weight == 0)
        k = min(k, absent.size)
        if k <= 0:
            return 0
        rng = np.random.default_rng(seed)
        pa = self.p[absent] / self.p[absent].sum()
        chosen = np.sort(rng.choice(absent, size=k, replace=False, p=pa))
        self.weight[chosen] = self.g.w[chosen] / (self.q * self.p[chosen])
        self.batches.append(chosen)
        return k

    def remove_last(self) -> int:
        if not self.batches:
            return 0
        batch = self.batches.pop()
        self.weight[batch] = 0.0
        return batch.size


def adaptive_train(cfg: TrainConfig, adaptive: AdaptiveConfig, g: Graph, x, labels,
                   r: ResistanceTable) -> TrainResult:
    """Train on a sparsifier whose density is adjusted every ``adaptive.window`` epochs."""
    model = replace(cfg.model, mode="full")
    p = sampling_probabilities(g, r)
    q = sample_count(g.n, g.m, adaptive.eps_start)
    # same draw a fastgat-const run at eps_start would use, so the two are comparable
    start = sample_sparsifier(g, r, SparsifyConfig(adaptive.eps_start, q, derive_seed(cfg.model.seed, -1)))
    floor = sample_sparsifier(g, r, SparsifyConfig(adaptive.eps_floor, None, derive_seed(cfg.model.seed, -2)))
    budget = max(floor.distinct_edges, start.distinct_edges)
    edges = _EdgeSet(g, p, q, start.multiplicity)
    controller = AdaptiveController(adaptive)
    step = adaptive.increment(g.m)
    actions = []
    state = {"plan": plan_subgraphs(edges.graph(), None, model)}

    def plan_for_epoch(epoch):
        return state["plan"]

    def after_epoch(epoch, trace):
        if (epoch + 1) % adaptive.window:
            return
        window = trace[-adaptive.window:]
        acc = [rec.train_acc if adaptive.metric == "train" else rec.val_acc for rec in window]
        action = controller.decide(acc)
        changed = 0
        if action == "add":
            changed = edges.add(min(step, budget - edges.count), derive_seed(cfg.model.seed, -3, epoch))
            if changed == 0:
                action = "keep"
                controller.last_action = "keep"
        elif action == "remove":
            changed = edges.remove_last()
        actions.append((epoch, action, changed, edges.count))
        log.info("epoch %d: %s %d edges -> %d retained", epoch, action, changed, edges.count)
        if changed:
            state["plan"] = plan_subgraphs(edges.graph(), None, model)

    params, trace = _fit(replace(cfg, model=model), g, x, labels, plan_for_epoch, after_epoch)
    acc = _evaluate(model, params, x, labels, cfg.masks, state["plan"])
    return TrainResult(trace, params, acc["test"], acc["train"], acc["val"],
                       [rec.edges for rec in trace], actions)
