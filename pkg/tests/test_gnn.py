import numpy as np
import pytest

from respars.effres import exact_resistances
from respars.errors import ShapeError
from respars.gnn import (
    ATTENTION_KINDS,
    LayerSpec,
    ModelConfig,
    Neighborhood,
    attention_matrix,
    derive_seed,
    fastgat_forward,
    forward,
    gat_layer_forward,
    gcn_forward,
    init_params,
    plan_subgraphs,
    prop1_equivalence_check,
    score_asymmetry,
    symmetric_attention_vector,
)
from respars.graph import Graph, build_laplacian
from respars.synth import SBMSpec, erdos_renyi, random_connected_graph, sbm

from conftest import path3, single_edge


def _head(kind, d, f, rng):
    model = ModelConfig((LayerSpec(1, f, kind, "average", "identity"),))
    p = init_params(model, d, int(rng.integers(1 << 30)))[0][0]
    if kind == "cosine":
        p["beta"] = np.array([rng.uniform(0.5, 3.0)])
    return p


def _softmax(x):
    e = np.exp(x - np.max(x))
    return e / e.sum()


@pytest.mark.parametrize("kind", ["gat", "gaan"])
def test_zero_weights_give_uniform_rows(kind):
    g = erdos_renyi(15, 0.3, 1)
    rng = np.random.default_rng(0)
    h = rng.standard_normal((15, 4))
    p = {"W": np.zeros((4, 3)), "a": np.ones(6)}
    if kind == "gaan":
        # zero first FC layers make every score zero
        p = {"W": np.zeros((4, 3)), "src1": np.zeros((4, 3)), "dst1": np.zeros((4, 3)),
             "src2": rng.standard_normal((3, 3)), "dst2": rng.standard_normal((3, 3))}
    dense = attention_matrix(g, h, p, kind).dense()
    sizes = np.count_nonzero(g.adjacency(), axis=1) + 1
    for i in range(15):
        np.testing.assert_allclose(dense[i][dense[i] > 0], 1.0 / sizes[i])
        assert np.count_nonzero(dense[i]) == sizes[i]


def test_zero_attention_vector_gives_uniform_rows():
    g = path3()
    h = np.arange(6.0).reshape(3, 2)
    att = attention_matrix(g, h, {"W": np.eye(2), "a": np.zeros(4)})
    np.testing.assert_allclose(att.dense(), [[0.5, 0.5, 0], [1 / 3, 1 / 3, 1 / 3], [0, 0.5, 0.5]])


def test_path3_scalar_attention():
    # e_ij = LeakyReLU(h_i + h_j) with h = (0, 1, 2)
    att = attention_matrix(path3(), np.array([[0.0], [1.0], [2.0]]), {"W": np.eye(1), "a": np.ones(2)})
    expected = np.zeros((3, 3))
    expected[0, [0, 1]] = _softmax(np.array([0.0, 1.0]))
    expected[1, [0, 1, 2]] = _softmax(np.array([1.0, 2.0, 3.0]))
    expected[2, [1, 2]] = _softmax(np.array([3.0, 4.0]))
    np.testing.assert_allclose(att.dense(), expected, rtol=1e-14)


def test_leaky_slope_applies_to_negative_scores():
    att = attention_matrix(single_edge(), np.array([[-1.0], [-2.0]]), {"W": np.eye(1), "a": np.ones(2)})
    # e00 = 0.2*(-2), e01 = 0.2*(-3)
    np.testing.assert_allclose(att.dense()[0], _softmax(np.array([-0.4, -0.6])))


def test_cosine_zero_norm_row_is_zero_similarity():
    h = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    att = attention_matrix(path3(), h, {"W": np.eye(2), "beta": np.array([2.0])}, "cosine")
    dense_scores = att.dense_scores()
    assert dense_scores[0, 1] == 0.0 and dense_scores[0, 0] == 0.0
    assert dense_scores[1, 1] == pytest.approx(2.0)
    assert dense_scores[1, 2] == pytest.approx(0.0)


def test_attention_dimension_mismatch():
    g = path3()
    with pytest.raises(ShapeError):
        attention_matrix(g, np.ones((4, 2)), {"W": np.ones((2, 1)), "a": np.ones(2)})
    with pytest.raises(ShapeError):
        attention_matrix(g, np.ones((3, 2)), {"W": np.ones((3, 1)), "a": np.ones(2)})
    with pytest.raises(ShapeError):
        attention_matrix(g, np.ones((3, 2)), {"W": np.ones((2, 2)), "a": np.ones(3)})
    with pytest.raises(ValueError):
        attention_matrix(g, np.ones((3, 2)), {"W": np.ones((2, 2))}, "dot")


@pytest.mark.parametrize("kind", ATTENTION_KINDS)
@pytest.mark.parametrize("seed", range(4))
def test_rows_stochastic_and_supported(kind, seed):
    rng = np.random.default_rng(seed)
    g = erdos_renyi(20, 0.2, seed)
    h = rng.standard_normal((20, 5))
    att = attention_matrix(g, h, _head(kind, 5, 3, rng), kind)
    dense = att.dense()
    np.testing.assert_allclose(dense.sum(axis=1), 1.0, atol=1e-10)
    support = (g.adjacency() + np.eye(20)) > 0
    assert np.all(dense[~support] == 0.0)


def test_gcn_examples():
    h = np.array([[0.5, 2.0]])
    w = np.array([[1.0], [-1.0]])
    np.testing.assert_allclose(gcn_forward(Graph.from_edges(1, []), h, w, "identity"), h @ w)
    h3 = np.abs(np.random.default_rng(0).standard_normal((3, 2)))
    np.testing.assert_allclose(gcn_forward(Graph.from_edges(3, []), h3, np.eye(2), "relu"), h3)
    out = gcn_forward(path3(), np.array([[1.0], [0.0], [0.0]]), np.eye(1), "identity")
    np.testing.assert_allclose(out.ravel(), [1 / 2, 1 / np.sqrt(6), 0.0])
    with pytest.raises(ShapeError):
        gcn_forward(path3(), np.ones((3, 2)), np.ones((3, 1)))


def test_gat_layer_zero_weights_relu():
    g = erdos_renyi(10, 0.3, 2)
    heads = [{"W": np.zeros((4, 3)), "a": np.ones(6)} for _ in range(2)]
    out = gat_layer_forward(g, np.ones((10, 4)), heads, "concat", "relu")
    assert out.shape == (10, 6) and np.all(out == 0)


def test_gat_layer_identical_heads_concat():
    g = erdos_renyi(10, 0.3, 2)
    rng = np.random.default_rng(3)
    p = _head("gat", 4, 3, rng)
    out = gat_layer_forward(g, rng.standard_normal((10, 4)), [p, p], "concat")
    np.testing.assert_array_equal(out[:, :3], out[:, 3:])


def test_gat_layer_path3_composes_attention():
    h = np.array([[0.0], [1.0], [2.0]])
    p = {"W": np.eye(1), "a": np.ones(2)}
    out = gat_layer_forward(path3(), h, [p], "average", "identity")
    np.testing.assert_allclose(out, attention_matrix(path3(), h, p).dense() @ h, rtol=1e-14)


def test_softmax_layer_must_average():
    with pytest.raises(ValueError):
        LayerSpec(2, 3, "gat", "concat", "softmax")
    with pytest.raises(ValueError):
        gat_layer_forward(path3(), np.ones((3, 1)), [{"W": np.eye(1), "a": np.ones(2)}], "concat", "softmax")
    with pytest.raises(ValueError):
        ModelConfig((LayerSpec(2, 3, "gat", "concat", "elu"),))


def test_model_config_validation():
    with pytest.raises(ValueError):
        ModelConfig.two_layer(3, mode="sometimes")
    with pytest.raises(ValueError):
        ModelConfig.two_layer(3, slope=1.5)
    with pytest.raises(ValueError):
        LayerSpec(2, 3, "transformer")


@pytest.mark.parametrize("seed", range(10))
def test_prop1_equivalence(seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(25, 0.15, seed)
    h = rng.standard_normal((25, 6))
    assert prop1_equivalence_check(g, h, _head("gat", 6, 4, rng)) <= 1e-12


def test_symmetric_attention_vector_gives_symmetric_scores(rng):
    g = erdos_renyi(20, 0.3, 1)
    p = {"W": rng.standard_normal((5, 3)), "a": symmetric_attention_vector(rng.standard_normal(3))}
    assert score_asymmetry(g, rng.standard_normal((20, 5)), p) <= 1e-12
    p["a"] = rng.standard_normal(6)
    assert score_asymmetry(g, rng.standard_normal((20, 5)), p) > 1e-3


def test_prop1_zero_weights_row_uniform():
    g = erdos_renyi(12, 0.3, 0)
    att = attention_matrix(g, np.ones((12, 2)), {"W": np.zeros((2, 2)), "a": np.ones(4)})
    gamma = att.gamma()
    rw = gamma / gamma.sum(axis=1, keepdims=True)
    for i in range(12):
        nz = rw[i][rw[i] > 0]
        np.testing.assert_allclose(nz, nz[0])


@pytest.mark.parametrize("kind", ATTENTION_KINDS)
def test_permutation_equivariance(kind):
    rng = np.random.default_rng(7)
    n = 15
    g = erdos_renyi(n, 0.3, 5)
    h = rng.standard_normal((n, 4))
    model = ModelConfig.two_layer(3, kind, heads=2, hidden=3)
    params = init_params(model, 4, 1)
    perm = rng.permutation(n)
    inv = np.argsort(perm)
    gp = Graph.from_arrays(n, inv[g.u], inv[g.v], g.w)
    out = forward(g, h, model, params)
    out_p = forward(gp, h[perm], model, params)
    np.testing.assert_allclose(out_p, out[perm], atol=1e-12)


def test_full_mode_equals_plain_layers():
    rng = np.random.default_rng(0)
    g = erdos_renyi(20, 0.2, 0)
    h = rng.standard_normal((20, 4))
    model = ModelConfig.two_layer(3, heads=2, hidden=3)
    params = init_params(model, 4, 0)
    hidden = gat_layer_forward(g, h, params[0], "concat", "elu")
    expected = gat_layer_forward(g, hidden, params[1], "average", "softmax")
    np.testing.assert_array_equal(forward(g, h, model, params), expected)


@pytest.mark.parametrize("mode", ["fastgat-per-head", "fastgat-layer", "fastgat-const"])
def test_single_edge_sparsified_equals_full(mode):
    g = single_edge()
    r = exact_resistances(g)
    h = np.array([[1.0, -0.5], [0.3, 2.0]])
    model = ModelConfig.two_layer(2, heads=3, hidden=2, mode=mode, seed=4)
    params = init_params(model, 2, 2)
    full = forward(g, h, ModelConfig.two_layer(2, heads=3, hidden=2), params)
    np.testing.assert_allclose(fastgat_forward(g, h, model, params, r), full, rtol=1e-14)


def test_sampler_invocation_counts():
    g = erdos_renyi(40, 0.3, 1)
    r = exact_resistances(g)
    kw = dict(heads=3, hidden=2, seed=1)
    assert plan_subgraphs(g, r, ModelConfig.two_layer(2, mode="full", **kw)).invocations == 0
    assert plan_subgraphs(g, r, ModelConfig.two_layer(2, mode="fastgat-const", **kw)).invocations == 1
    assert plan_subgraphs(g, r, ModelConfig.two_layer(2, mode="fastgat-layer", **kw)).invocations == 2
    assert plan_subgraphs(g, r, ModelConfig.two_layer(2, mode="fastgat-per-head", **kw)).invocations == 4


def test_plan_requires_resistances():
    with pytest.raises(ValueError):
        plan_subgraphs(path3(), None, ModelConfig.two_layer(2, mode="fastgat-const"))


def test_per_head_graphs_differ_and_are_order_independent():
    g = erdos_renyi(40, 0.3, 1)
    r = exact_resistances(g)
    model = ModelConfig.two_layer(2, heads=3, hidden=2, mode="fastgat-per-head", seed=9)
    plan = plan_subgraphs(g, r, model)
    first = plan.graphs[0]
    assert first[0] != first[1]
    # seeds derive from (seed, layer, head) only
    assert derive_seed(9, 0, 1) == derive_seed(9, 0, 1) != derive_seed(9, 1, 0)
    again = plan_subgraphs(g, r, model)
    assert all(a == b for la, lb in zip(plan.graphs, again.graphs) for a, b in zip(la, lb))


def test_attention_count_matches_retained_edges():
    data = sbm(SBMSpec())
    g = data.graph
    r = exact_resistances(g)
    model = ModelConfig.two_layer(3, mode="fastgat-const", epsilon=0.5, seed=0)
    plan = plan_subgraphs(g, r, model)
    h = plan.graphs[0][0]
    assert plan.attention_count == 9 * (2 * h.m + g.n)
    assert h.m < g.m
    full = plan_subgraphs(g, r, ModelConfig.two_layer(3))
    assert plan.attention_count < full.attention_count


def test_isolated_node_after_sparsification_attends_to_itself():
    g = Graph.from_edges(3, [(0, 1)])
    att = attention_matrix(g, np.ones((3, 2)), {"W": np.eye(2), "a": np.ones(4)})
    assert att.dense()[2, 2] == 1.0


def test_neighborhood_includes_self():
    nb = Neighborhood.from_graph(path3())
    assert nb.size == 2 * 2 + 3
    pairs = set(zip(nb.rows.tolist(), nb.cols.tolist()))
    assert {(0, 0), (1, 1), (2, 2), (0, 1), (1, 0)} <= pairs


# pinned from a reference run: SBM(60, seed 2), const mode, eps 0.5, seed 3
SBM60_ROW0 = [0.40142431696813885, 0.23444263071188098, 0.3641330523199802]


def test_sampled_forward_sbm60_reproducible():
    data = sbm(SBMSpec(n=60, seed=2))
    r = exact_resistances(data.graph)
    model = ModelConfig.two_layer(3, mode="fastgat-const", epsilon=0.5, seed=3)
    params = init_params(model, data.features.shape[1], 3)
    a = fastgat_forward(data.graph, data.features, model, params, r)
    b = fastgat_forward(data.graph, data.features, model, params, r)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(a.sum(axis=1), 1.0)
    np.testing.assert_allclose(a[0], SBM60_ROW0, rtol=1e-10)


def test_laplacian_import_is_consistent():
    # gcn propagation matrix is symmetric and has spectral radius 1
    p = build_laplacian(erdos_renyi(10, 0.4, 1), "gcn_norm")
    np.testing.assert_allclose(p, p.T)
    assert np.abs(np.linalg.eigvalsh(p)).max() == pytest.approx(1.0)
