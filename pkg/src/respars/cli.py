"""Command-line entry point.

Every command is deterministic given ``--seed``; data goes to files (written
atomically) or standard output, logs go to standard error.  Exit codes: 0 on
success, 1 when a check or bound fails, 2 on usage or I/O errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .effres import SketchConfig, approx_resistances, cache_load, cache_store, exact_resistances
from .errors import ResparsError
from .gnn import ATTENTION_KINDS, SAMPLER_MODES, ModelConfig, attention_matrix, init_params
from .gnn import symmetric_attention_vector
from .graph import Graph, format_edge_list, parse_edge_list
from .io import (
    atomic_write_text,
    dumps_report,
    read_labels,
    read_masks,
    read_matrix,
    write_labels,
    write_masks,
    write_matrix,
)
from .sparsifier import SparsifyConfig, sample_sparsifier, spectral_check, theory_sample_count
from .synth import SBMSpec, random_connected_graph, sbm
from .theory import theorem1_check, theorem2_check
from .train import AdaptiveConfig, TrainConfig, adaptive_train, finite_diff_gradcheck, train

log = logging.getLogger("respars")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# -- helpers -------------------------------------------------------------------

def read_graph(path) -> Graph:
    return parse_edge_list(Path(path).read_text())


def emit(report: dict, path=None) -> None:
    text = dumps_report(report)
    if path:
        atomic_write_text(path, text)
    else:
        sys.stdout.write(text)


def load_config(path) -> dict:
    """``key=value`` lines; blank lines and ``#`` comments ignored."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def resistances_for(g, args):
    """Load ``--cache`` when given (and still valid), else compute."""
    cache = getattr(args, "cache", None)
    if cache and Path(cache).exists():
        r = cache_load(cache, g)
        log.info("cache hit: loaded %s resistances from %s", r.method, cache)
        return r
    if getattr(args, "sketch", False):
        r = approx_resistances(g, SketchConfig(args.tau, seed=args.seed), workers=args.threads)
    else:
        r = exact_resistances(g)
    if cache:
        cache_store(cache, r, g)
        log.info("cache miss: wrote %s", cache)
    return r


# -- commands ----------------------------------------------------------------------

def cmd_resist(args):
    g = read_graph(args.graph)
    if args.exact:
        r = exact_resistances(g)
    else:
        r = approx_resistances(g, SketchConfig(args.tau, args.t, args.seed), workers=args.threads)
    cache_store(args.output, r, g)
    log.info("wrote %d %s resistances to %s", g.m, r.method, args.output)
    return EXIT_OK


def cmd_sparsify(args):
    g = read_graph(args.graph)
    r = resistances_for(g, args)
    q = args.q
    if q is None and args.theory:
        q = theory_sample_count(g.n, args.epsilon)
    sg = sample_sparsifier(g, r, SparsifyConfig(args.epsilon, q, args.seed))
    atomic_write_text(args.output, format_edge_list(sg.graph))
    record = sg.record()
    if args.spectral:
        record["epsilon_star"] = spectral_check(g, sg).epsilon_star
    emit(record, args.report)
    log.info("kept %d of %d edges (%.2f%% reduction)", sg.distinct_edges, g.m, 100.0 * sg.percent_reduction)
    return EXIT_OK


def cmd_spectral_check(args):
    g, h = read_graph(args.graph), read_graph(args.sparse)
    rep = spectral_check(g, h)
    ok = rep.passed and (args.max_eps is None or rep.epsilon_star <= args.max_eps)
    emit({
        "epsilon_star": rep.epsilon_star,
        "epsilon_star_norm": rep.epsilon_star_norm,
        "degree_deviation": rep.degree_deviation,
        "components_original": rep.components_g,
        "components_sparsified": rep.components_h,
        "components_match": rep.components_match,
        "passed": bool(ok),
    }, args.report)
    if not rep.passed:
        log.error("%s", rep.diagnostic)
    return EXIT_OK if ok else EXIT_FAIL


def _restrict_gamma(gamma, g_full: Graph, g_sparse: Graph):
    """Attention matrix on the sparse support, rescaled by sparse/full edge weight."""
    full_w = {(a, b): w for a, b, w in g_full.edges()}
    out = np.diag(np.diag(gamma)).copy()
    for a, b, w in g_sparse.edges():
        if (a, b) not in full_w:
            raise UsageError(f"sparsified edge ({a}, {b}) is not in the original graph")
        scale = w / full_w[(a, b)]
        out[a, b] = gamma[a, b] * scale
        out[b, a] = gamma[b, a] * scale
    return out


def cmd_bound_check(args):
    g, h = read_graph(args.graph), read_graph(args.sparse)
    x = read_matrix(args.features)
    if x.shape[0] != g.n:
        raise UsageError(f"features have {x.shape[0]} rows, graph has {g.n} nodes")
    rng = np.random.default_rng(args.seed)
    if args.weights:
        w = read_matrix(args.weights)
    else:
        lim = np.sqrt(6.0 / (x.shape[1] + args.out_features))
        w = rng.uniform(-lim, lim, size=(x.shape[1], args.out_features))
    if args.model == "gcn":
        rep = theorem1_check(g, h, x, w, args.sigma, args.seed)
    else:
        f = w.shape[1]
        if args.attention:
            a = read_matrix(args.attention).ravel()
        else:
            a = symmetric_attention_vector(rng.uniform(-1.0, 1.0, size=f))
        gamma = attention_matrix(g, x, {"W": w, "a": a}).gamma()
        rep = theorem2_check(gamma, _restrict_gamma(gamma, g, h), x, w, args.sigma, args.seed)
    emit(rep.as_json(), args.report)
    return EXIT_OK if rep.holds else EXIT_FAIL


def _model_from(args, n_classes):
    return ModelConfig.two_layer(
        n_classes, args.kind, heads=args.heads, hidden=args.hidden,
        mode=args.mode, epsilon=args.epsilon, seed=args.seed,
    )


def _training_inputs(args):
    g = read_graph(args.graph)
    x = read_matrix(args.features)
    labels = read_labels(args.labels)
    masks = read_masks(args.masks)
    if not (x.shape[0] == len(labels) == len(masks["train"]) == g.n):
        raise UsageError("graph, features, labels and masks disagree on the node count")
    return g, x, labels, masks


def _write_trace(path, trace, timing):
    lines = [json.dumps(rec.as_dict(timing), sort_keys=True) for rec in trace]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def _train_report(result, cfg):
    return {
        "mode": cfg.model.mode,
        "epochs": cfg.epochs,
        "train_acc": result.train_acc,
        "val_acc": result.val_acc,
        "test_acc": result.test_acc,
        "final_edges": result.edge_trace[-1] if result.edge_trace else None,
        "attention_per_epoch": result.trace[-1].attention if result.trace else None,
    }


def cmd_train(args):
    g, x, labels, masks = _training_inputs(args)
    model = _model_from(args, int(labels.max()) + 1)
    r = resistances_for(g, args) if model.mode != "full" else None
    cfg = TrainConfig(model, masks, epochs=args.epochs, lr=args.lr, seed=args.seed)
    result = train(cfg, g, x, labels, r)
    _write_trace(args.output, result.trace, args.timing)
    emit(_train_report(result, cfg), args.report)
    return EXIT_OK


def cmd_adaptive_train(args):
    g, x, labels, masks = _training_inputs(args)
    args.mode = "fastgat-const"
    model = _model_from(args, int(labels.max()) + 1)
    r = resistances_for(g, args)
    cfg = TrainConfig(model, masks, epochs=args.epochs, lr=args.lr, seed=args.seed)
    acfg = AdaptiveConfig(window=args.window, increment_fraction=args.increment_fraction,
                          eps_floor=args.eps_floor, eps_start=args.eps_start,
                          delta=args.delta, metric=args.metric)
    result = adaptive_train(cfg, acfg, g, x, labels, r)
    _write_trace(args.output, result.trace, args.timing)
    report = _train_report(result, cfg)
    report["mode"] = "adaptive"
    report["actions"] = [{"epoch": e, "action": a, "changed": c, "edges": k}
                         for e, a, c, k in result.actions]
    emit(report, args.report)
    return EXIT_OK


def cmd_gradcheck(args):
    g = random_connected_graph(args.nodes, 0.3, args.seed)
    rng = np.random.default_rng(args.seed)
    x = rng.standard_normal((args.nodes, args.in_features))
    labels = rng.integers(0, args.classes, args.nodes)
    model = ModelConfig.two_layer(args.classes, args.kind, heads=args.heads, hidden=args.hidden)
    params = init_params(model, args.in_features, args.seed)
    res = finite_diff_gradcheck(model, params, (g, x, labels, np.ones(args.nodes, bool)),
                                h=args.step, tol=args.tol)
    emit({
        "kind": args.kind,
        "seed": args.seed,
        "max_rel_error": res.max_rel_error,
        "passed": res.passed,
        "checked": res.checked,
        "excluded": res.excluded,
    }, args.report)
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_gen_synth(args):
    spec = SBMSpec(args.n, args.k, args.p_in, args.p_out, args.features, args.seed, args.signal)
    data = sbm(spec)
    prefix = args.output
    atomic_write_text(f"{prefix}.edges", format_edge_list(data.graph))
    write_matrix(f"{prefix}.features", data.features)
    write_labels(f"{prefix}.labels", data.labels)
    write_masks(f"{prefix}.masks", data.masks)
    log.info("wrote %s.{edges,features,labels,masks}: n=%d, M=%d", prefix, data.graph.n, data.graph.m)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------

def _add_resistance_source(p):
    p.add_argument("--cache", help="resistance cache file (read if present, else written)")
    p.add_argument("--sketch", action="store_true", help="use sketched instead of exact resistances")
    p.add_argument("--tau", type=float, default=0.1, help="sketch accuracy (default 0.1)")


def _add_training(p, with_mode=True):
    p.add_argument("graph")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("-o", "--output", required=True, help="per-epoch trace (JSON lines)")
    p.add_argument("--report", help="summary JSON (default: stdout)")
    p.add_argument("--kind", choices=ATTENTION_KINDS, default="gat")
    if with_mode:
        p.add_argument("--mode", choices=SAMPLER_MODES, default="full")
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--timing", action="store_true", help="include wall time per epoch in the trace")
    _add_resistance_source(p)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1, help="cap on internal parallelism")
    common.add_argument("--config", help="key=value defaults file (flags take precedence)")
    common.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")

    parser = argparse.ArgumentParser(prog="respars", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("resist", parents=[common], help="compute effective resistances")
    p.add_argument("graph")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--exact", action="store_true", help="exact pseudo-inverse (default: sketched)")
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--t", type=int, default=None, help="sketch rows (default from tau)")
    p.set_defaults(func=cmd_resist)

    p = sub.add_parser("sparsify", parents=[common], help="sample a spectral sparsifier")
    p.add_argument("graph")
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--q", type=int, default=None, help="number of draws (overrides --epsilon)")
    p.add_argument("--theory", action="store_true", help="use the oversampled draw count")
    p.add_argument("--spectral", action="store_true", help="add epsilon_star to the report")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--report")
    _add_resistance_source(p)
    p.set_defaults(func=cmd_sparsify)

    p = sub.add_parser("spectral-check", parents=[common], help="compare Laplacian spectra")
    p.add_argument("graph")
    p.add_argument("sparse")
    p.add_argument("--max-eps", type=float, default=None, help="fail when eps* exceeds this")
    p.add_argument("--report")
    p.set_defaults(func=cmd_spectral_check)

    p = sub.add_parser("bound-check", parents=[common], help="evaluate a propagation-error bound")
    p.add_argument("graph")
    p.add_argument("sparse")
    p.add_argument("--model", choices=("gcn", "gat"), default="gcn")
    p.add_argument("--features", required=True)
    p.add_argument("--weights", help="D x F weight matrix (default: seeded random)")
    p.add_argument("--attention", help="attention vector of length 2F (gat; default: seeded symmetric)")
    p.add_argument("--out-features", type=int, default=8)
    p.add_argument("--sigma", choices=("relu", "elu"), default="relu")
    p.add_argument("--report")
    p.set_defaults(func=cmd_bound_check)

    p = sub.add_parser("train", parents=[common], help="train a two-layer attention network")
    _add_training(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("adaptive-train", parents=[common], help="train with adaptive sparsity")
    _add_training(p, with_mode=False)
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--increment-fraction", type=float, default=0.003)
    p.add_argument("--eps-start", type=float, default=0.9)
    p.add_argument("--eps-floor", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=1e-4)
    p.add_argument("--metric", choices=("train", "val"), default="train")
    p.set_defaults(func=cmd_adaptive_train)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("--kind", choices=ATTENTION_KINDS, default="gat")
    p.add_argument("--nodes", type=int, default=8)
    p.add_argument("--in-features", type=int, default=3)
    p.add_argument("--hidden", type=int, default=2)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--report")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gen-synth", parents=[common], help="generate a stochastic block model dataset")
    p.add_argument("-o", "--output", required=True, help="output prefix")
    p.add_argument("--n", type=int, default=120)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--p-in", type=float, default=0.3)
    p.add_argument("--p-out", type=float, default=0.02)
    p.add_argument("--features", type=int, default=16)
    p.add_argument("--signal", type=float, default=1.0)
    p.set_defaults(func=cmd_gen_synth)
    return parser


def _apply_config(parser, argv):
    """Feed ``--config`` values in as subcommand defaults so explicit flags win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = load_config(known.config)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    command = next((tok for tok in argv if tok in sub.choices), None)
    if command is None:
        return
    sp = sub.choices[command]
    actions = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, raw in values.items():
        if key not in actions or key in ("config", "help", "func"):
            raise UsageError(f"unknown config key {key!r} for {command}")
        act = actions[key]
        if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = act.type(raw) if act.type else raw
    sp.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (UsageError, OSError, ValueError) as exc:
        print(f"respars: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    if args.threads < 1:
        log.error("--threads must be at least 1")
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ResparsError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
