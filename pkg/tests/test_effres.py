import itertools

import numpy as np
import pytest

from respars.effres import (
    CACHE_MAGIC,
    ResistanceTable,
    SketchConfig,
    approx_resistances,
    cache_load,
    cache_store,
    exact_resistances,
    foster_check,
)
from respars.errors import CacheFormatError, StaleCacheError
from respars.graph import Graph, build_laplacian, content_hash
from respars.linalg import pinv_laplacian
from respars.synth import erdos_renyi, random_connected_graph

from conftest import path3, single_edge, triangle


def test_exact_examples():
    np.testing.assert_allclose(exact_resistances(single_edge()).values, [1.0], rtol=1e-14)
    np.testing.assert_allclose(exact_resistances(path3()).values, [1.0, 1.0], rtol=1e-14)
    np.testing.assert_allclose(exact_resistances(triangle()).values, [2 / 3] * 3, rtol=1e-14)


def test_exact_table_metadata():
    g = triangle()
    r = exact_resistances(g)
    assert r.method == "exact" and r.graph_hash == content_hash(g) and len(r) == 3


@pytest.mark.parametrize("seed", range(10))
def test_exact_bounded_by_inverse_weight_with_equality_on_bridges(seed):
    g = random_connected_graph(20, 0.08, seed, weights=(0.5, 3.0))
    r = exact_resistances(g).values
    assert np.all(r > 0)
    assert np.all(r <= 1.0 / g.w * (1 + 1e-10))
    # an edge is a bridge iff removing it disconnects the graph
    from respars.graph import connected_components

    for e in range(g.m):
        keep = np.ones(g.m, bool)
        keep[e] = False
        bridge = connected_components(g.subgraph(keep, g.w[keep]))[1] > 1
        assert np.isclose(r[e], 1.0 / g.w[e], rtol=1e-9) == bridge


@pytest.mark.parametrize("seed", range(5))
def test_resistance_distance_is_a_metric(seed):
    g = random_connected_graph(12, 0.2, seed, weights=(0.5, 2.0))
    lp = pinv_laplacian(build_laplacian(g))
    d = np.diag(lp)
    dist = d[:, None] + d[None, :] - 2 * lp
    for a, b, c in itertools.permutations(range(g.n), 3):
        assert dist[a, c] <= dist[a, b] + dist[b, c] + 1e-12


def test_foster_examples():
    res = foster_check(triangle(), exact_resistances(triangle()))
    assert res.total == pytest.approx(2.0) and res.expected == 2.0 and res.passed
    two = Graph.from_edges(4, [(0, 1), (2, 3)])
    res = foster_check(two, exact_resistances(two))
    assert res.total == pytest.approx(2.0) and res.expected == 2.0 and res.passed
    res = foster_check(path3(), exact_resistances(path3()))
    assert res.total == pytest.approx(2.0) and res.passed


def test_foster_rejects_sketched():
    g = triangle()
    with pytest.raises(ValueError, match="oracle requires exact"):
        foster_check(g, approx_resistances(g, SketchConfig(0.1, seed=1)))


def test_foster_on_disconnected_graph():
    g = erdos_renyi(30, 0.05, 2)
    assert foster_check(g, exact_resistances(g)).passed


def test_sketch_rows_default():
    assert SketchConfig(0.1).rows(100) == int(np.ceil(24 * np.log(100) / 0.01))
    assert SketchConfig(0.5, t=7).rows(100) == 7
    assert SketchConfig(0.1).rows(1) == 1


@pytest.mark.parametrize("tau", [0.0, 1.0, -0.1, 1.5])
def test_sketch_rejects_tau(tau):
    with pytest.raises(ValueError):
        SketchConfig(tau)


def test_sketch_single_edge_pinned():
    r = approx_resistances(single_edge(), SketchConfig(0.1, seed=7))
    assert 0.75 <= r.values[0] <= 1.25
    # for a single edge every sign vector gives the same projection length
    assert r.values[0] == pytest.approx(1.0, rel=1e-12)
    assert (r.method, r.tau, r.seed) == ("sketched", 0.1, 7)


def test_sketch_triangle_pinned():
    r = approx_resistances(triangle(), SketchConfig(0.1, seed=7))
    np.testing.assert_allclose(r.values, [0.661526145030127, 0.6534361437660642, 0.6519192685290526],
                               rtol=1e-9)
    assert np.all(np.abs(r.values - 2 / 3) <= 0.2 * 2 / 3)


@pytest.mark.parametrize("seed", range(4))
def test_sketch_within_two_tau(seed):
    g = random_connected_graph(40, 0.1, seed, weights=(0.5, 2.0))
    exact = exact_resistances(g).values
    approx = approx_resistances(g, SketchConfig(0.1, seed=seed)).values
    assert np.all(np.abs(approx - exact) <= 0.2 * exact)


def test_sketch_deterministic_across_workers():
    g = random_connected_graph(60, 0.1, 9)
    cfg = SketchConfig(0.2, seed=3)
    a = approx_resistances(g, cfg, workers=1)
    b = approx_resistances(g, cfg, workers=4)
    assert a == b
    assert a != approx_resistances(g, SketchConfig(0.2, seed=4))


def test_sketch_type_check():
    with pytest.raises(TypeError):
        approx_resistances(triangle(), {"tau": 0.1})


def test_cache_round_trip(tmp_path):
    g = random_connected_graph(15, 0.2, 1, weights=(0.3, 3.0))
    for r in (exact_resistances(g), approx_resistances(g, SketchConfig(0.3, seed=5))):
        path = tmp_path / f"{r.method}.resist"
        cache_store(path, r, g)
        assert path.read_text().startswith(CACHE_MAGIC + "\n")
        back = cache_load(path, g)
        assert back == r
        np.testing.assert_array_equal(back.values, r.values)


def test_cache_stale(tmp_path):
    g = path3()
    path = tmp_path / "c.resist"
    cache_store(path, exact_resistances(g), g)
    changed = Graph.from_edges(3, [(0, 1, 2.0), (1, 2)])
    with pytest.raises(StaleCacheError, match="stale cache"):
        cache_load(path, changed)


def test_cache_missing_file(tmp_path):
    with pytest.raises(OSError):
        cache_load(tmp_path / "nope.resist", path3())


@pytest.mark.parametrize("text", [
    "",
    "not a cache\n",
    CACHE_MAGIC + "\ngraph_hash=zz\nmethod=exact\ntau=\nt=\nseed=\n",
    CACHE_MAGIC + "\ngraph_hash={h}\nmethod=magic\ntau=\nt=\nseed=\n0 1 1\n1 2 1\n",
    CACHE_MAGIC + "\ngraph_hash={h}\nmethod=exact\ntau=\nt=\nseed=\n0 1 1\n",
    CACHE_MAGIC + "\ngraph_hash={h}\nmethod=exact\ntau=\nt=\nseed=\n0 2 1\n1 2 1\n",
])
def test_cache_malformed(tmp_path, text):
    g = path3()
    path = tmp_path / "bad.resist"
    path.write_text(text.replace("{h}", f"{content_hash(g):016x}"))
    with pytest.raises(CacheFormatError):
        cache_load(path, g)


def test_cache_store_rejects_foreign_table(tmp_path):
    with pytest.raises(ValueError):
        cache_store(tmp_path / "x", exact_resistances(triangle()), path3())


def test_table_equality_is_value_based():
    a = ResistanceTable(np.array([1.0]), "exact", 5)
    assert a == ResistanceTable(np.array([1.0]), "exact", 5)
    assert a != ResistanceTable(np.array([1.0]), "exact", 6)
