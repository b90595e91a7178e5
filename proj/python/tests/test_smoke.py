import math

import numpy as np
import pytest

import exgc


@pytest.fixture(scope="module")
def graph():
    return exgc.generate_sbm(num_classes=3, nodes_per_class=30, feature_dim=6, seed=1)


def test_generate_and_round_trip(graph, tmp_path):
    assert graph.num_nodes == 90
    assert graph.features.shape == (90, 6)
    exgc.save_graph(graph, tmp_path / "g")
    back = exgc.load_graph(tmp_path / "g")
    assert np.array_equal(back.features, graph.features)
    assert back.edges == graph.edges


def test_condense_modes_agree_under_reduction(graph):
    cfg = exgc.CondenseConfig()
    cfg.ratio = 0.1
    cfg.max_epochs = 10
    cfg.patience = 0
    cfg.hidden = 8
    cfg.adjgen_hidden = 8
    a = exgc.condense(graph, cfg)
    cfg.mode = "mgcond"
    cfg.blocks = 1
    b = exgc.condense(graph, cfg)
    assert [r[1] for r in a.trace] == [r[1] for r in b.trace]
    assert a.features.shape == (9, 6)
    adj = a.adjacency(0.5)
    assert np.allclose(adj, adj.T)


def test_condense_save_and_evaluate(graph, tmp_path):
    cfg = exgc.CondenseConfig()
    cfg.update('{"mode": "exgc", "ratio": 0.1, "max_epochs": 20, "selection_period": 5}')
    report = exgc.condense(graph, cfg)
    report.save(tmp_path / "c")
    assert (tmp_path / "c" / "trace.csv").exists()
    result = exgc.evaluate(tmp_path / "c", graph, arch="gcn", repeats=2, epochs=50)
    assert len(result["accuracies"]) == 2
    assert 0.0 <= result["mean"] <= 1.0


def test_coreset_selection(graph, tmp_path):
    nodes = exgc.select_coreset(graph, "kcenter", 0.1, seed=3)
    assert len(nodes) == 9
    assert set(nodes) <= set(graph.train)
    exgc.save_coreset(graph, nodes, tmp_path / "k")
    assert exgc.evaluate(tmp_path / "k", graph, arch="mlp", repeats=1, epochs=20)["mean"] >= 0.0


def test_numeric_helpers():
    g = np.random.default_rng(0).normal(size=(4, 3))
    assert abs(exgc.grad_match_distance([g], [g])) < 1e-12
    assert exgc.grad_match_distance([-g], [g]) == pytest.approx(6.0)
    assert exgc.info_constraint([1.0], 0.5) == pytest.approx(math.log(2.0))
    a = exgc.normalize_adjacency(np.zeros((2, 2)))
    assert np.allclose(a, np.eye(2))
    assert all(passed for _, _, passed in exgc.selfcheck(0))


def test_errors_map_to_python_exceptions(graph, tmp_path):
    cfg = exgc.CondenseConfig()
    with pytest.raises(ValueError):
        cfg.mode = "fast"
    with pytest.raises(ValueError):
        cfg.update('{"unknown": 1}')
    with pytest.raises(OSError):
        exgc.load_graph(tmp_path / "missing")
    with pytest.raises(ValueError):
        exgc.select_coreset(graph, "magic", 0.1)
