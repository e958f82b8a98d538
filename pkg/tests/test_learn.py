import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emograph.graph import ContractError, Edge, Emotion, Graph, NodeState, generate_chain_graphs
from emograph.learn import (
    ChainRecipe,
    DegenerateTaskError,
    GcnParams,
    TrainConfig,
    build_features,
    classification_metrics,
    cross_domain_eval,
    evaluate,
    gcn_forward,
    labeled_chain_graph,
    load_model,
    loss_and_gradients,
    mean_adjacency,
    normalized_adjacency,
    propagation_matrix,
    save_model,
    stratified_split,
    train,
)

SIX = [
    (0, "positive", "positive", 0.9, 3),
    (1, "positive", "neutral", 0.2, 1),
    (2, "neutral", "neutral", 0.5, 0),
    (3, "negative", "negative", 0.7, 2),
    (4, "neutral", "positive", 0.1, 5),
    (5, "negative", "neutral", 0.4, 1),
]


def six_node_graph():
    g = Graph(directed=True, provenance="real")
    for nid, start, final, cred, posts in SIX:
        g.add_node(NodeState(id=nid, emotion=final, initial_emotion=start, credibility=cred, post_frequency=posts))
    for u, v, kind in [(0, 1, "reply"), (1, 2, "comment"), (2, 0, "reply"), (3, 4, "mention"), (4, 5, "reply"),
                       (5, 3, "reply"), (2, 3, "reply")]:
        g.add_edge(Edge(u, v, kind=kind))
    return g


def planted_graph(n_per_class=20):
    """Three cliques-ish communities whose label equals each member's start emotion."""
    g = Graph(directed=False, provenance="synthetic")
    for c, emo in enumerate(Emotion):
        for k in range(n_per_class):
            nid = c * n_per_class + k
            g.add_node(NodeState(id=nid, emotion=emo, credibility=0.5, post_frequency=1))
            if k:
                g.add_edge(Edge(nid - 1, nid))
            if k > 1:
                g.add_edge(Edge(nid - 2, nid))
    return g


def numeric_grad(params, X, adj, y, mask, name, eps=1e-5):
    W = getattr(params, name)
    out = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        orig = W[idx]
        W[idx] = orig + eps
        up, _ = loss_and_gradients(params, X, adj, y, mask)
        W[idx] = orig - eps
        down, _ = loss_and_gradients(params, X, adj, y, mask)
        W[idx] = orig
        out[idx] = (up - down) / (2 * eps)
    return out


@pytest.mark.parametrize("layer,weighting", [("gcn", False), ("gcn", True), ("mean", False)])
def test_gradients_match_finite_differences(layer, weighting):
    g = six_node_graph()
    feats = build_features(g)
    adj = propagation_matrix(g, layer, weighting)
    params = GcnParams.init(feats.X.shape[1], 4, seed=3, layer=layer)
    mask = np.array([True, True, False, True, True, False])
    _, grads = loss_and_gradients(params, feats.X, adj, feats.labels, mask)
    for name in ("W0", "W1"):
        num = numeric_grad(params, feats.X, adj, feats.labels, mask, name)
        rel = np.abs(grads[name] - num) / np.maximum(np.abs(grads[name]) + np.abs(num), 1e-8)
        assert rel.max() <= 1e-4, name


def test_uniform_logits_give_ln3():
    g = six_node_graph()
    feats = build_features(g)
    params = GcnParams.init(5, 8, seed=0)
    params.W1[:] = 0.0
    loss, _ = loss_and_gradients(params, feats.X, normalized_adjacency(g), feats.labels, np.ones(6, bool))
    assert abs(loss - math.log(3)) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.permutations(range(6)), st.integers(0, 1000))
def test_permutation_equivariance(perm, seed):
    g = six_node_graph()
    feats = build_features(g)
    adj = normalized_adjacency(g)
    params = GcnParams.init(5, 8, seed=seed)
    logits, _ = gcn_forward(params, feats.X, adj)
    P = np.eye(6)[list(perm)]
    permuted, _ = gcn_forward(params, P @ feats.X, P @ adj @ P.T)
    # class decisions permute exactly; logits agree up to summation-order rounding
    np.testing.assert_array_equal(permuted.argmax(axis=1), (P @ logits).argmax(axis=1))
    np.testing.assert_allclose(permuted, P @ logits, rtol=0, atol=1e-14)


def test_relabelled_graph_gives_same_predictions_per_node():
    g = six_node_graph()
    mapping = {0: 4, 1: 2, 2: 5, 3: 0, 4: 1, 5: 3}
    h = Graph(directed=True, provenance="real")
    for nid in sorted(g.nodes, key=mapping.get):
        n = g.nodes[nid]
        h.add_node(NodeState(id=mapping[nid], emotion=n.emotion, initial_emotion=n.initial_emotion,
                             credibility=n.credibility, post_frequency=n.post_frequency))
    for e in g.edges:
        h.add_edge(Edge(mapping[e.source], mapping[e.target], kind=e.kind))
    params = GcnParams.init(5, 8, seed=1)
    a, _ = gcn_forward(params, build_features(g).X, normalized_adjacency(g))
    b, _ = gcn_forward(params, build_features(h).X, normalized_adjacency(h))
    for old, new in mapping.items():
        np.testing.assert_allclose(b[new], a[old], rtol=0, atol=1e-12)


def test_adjacency_normalizations():
    g = six_node_graph()
    A = normalized_adjacency(g)
    np.testing.assert_allclose(A, A.T)
    assert np.linalg.eigvalsh(A).max() <= 1 + 1e-12
    # node 0: neighbors 1, 2 plus self-loop -> degree 3
    assert A[0, 0] == pytest.approx(1 / 3)
    M = mean_adjacency(g)
    np.testing.assert_allclose(M.sum(axis=1), 1.0)
    W = normalized_adjacency(g, edge_weighting=True)
    assert not np.allclose(W, A)
    with pytest.raises(ValueError):
        propagation_matrix(g, "gat")


def test_features():
    feats = build_features(six_node_graph())
    assert feats.X.shape == (6, 5)
    np.testing.assert_array_equal(feats.X[1, :3], [1, 0, 0])
    assert feats.X[4, 4] == 1.0 and feats.X[2, 4] == 0.0
    assert feats.labels.tolist() == [0, 1, 1, 2, 0, 1]


def test_planted_graph_is_learned():
    report, params = train(planted_graph(), TrainConfig())
    assert report.test.accuracy >= 0.95
    assert report.losses[-1] < report.losses[0]


def test_loss_decreases_early_with_small_lr():
    g = labeled_chain_graph(ChainRecipe(num_chains=30))
    for lr in (0.01, 0.05):
        report, _ = train(g, TrainConfig(lr=lr, epochs=10))
        assert all(b < a for a, b in zip(report.losses, report.losses[1:]))


def test_degenerate_graph_is_refused():
    g = generate_chain_graphs(5, 3)
    with pytest.raises(DegenerateTaskError):
        train(g)


def test_stratified_split_covers_each_class():
    labels = np.array([0] * 10 + [1] * 4 + [2] * 2)
    tr, te = stratified_split(labels, 0.7, seed=0)
    assert not (tr & te).any() and (tr | te).all()
    for c in range(3):
        assert tr[labels == c].any() and te[labels == c].any()
    again, _ = stratified_split(labels, 0.7, seed=0)
    np.testing.assert_array_equal(tr, again)


def brute_metrics(y_true, y_pred):
    f1 = []
    for c in range(3):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        f1.append(2 * tp / (2 * tp + fp + fn) if tp else 0.0)
    return f1


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=60))
def test_metrics_against_brute_force(pairs):
    y_true = [t for t, _ in pairs]
    y_pred = [p for _, p in pairs]
    m = classification_metrics(y_true, y_pred)
    assert m.accuracy == pytest.approx(sum(t == p for t, p in pairs) / len(pairs))
    assert m.f1 == pytest.approx(brute_metrics(y_true, y_pred))
    assert m.macro_f1 == pytest.approx(sum(m.f1) / 3)
    assert sum(m.support) == len(pairs) == sum(map(sum, m.confusion))


def test_metrics_zero_division_is_zero():
    m = classification_metrics([0, 0, 0], [0, 0, 0])
    assert m.f1 == [1.0, 0.0, 0.0]
    assert m.f1_for("neutral") == 0.0


def test_cross_eval_on_own_graph_matches_full_evaluation(tmp_path):
    g = planted_graph()
    config = TrainConfig(epochs=50)
    _, params = train(g, config)
    path = tmp_path / "model.json"
    save_model(params, path, config)
    loaded = load_model(path)
    np.testing.assert_array_equal(loaded.W0, params.W0)
    assert cross_domain_eval(loaded, g) == evaluate(params, g)
    with pytest.raises(ContractError):
        cross_domain_eval(GcnParams.init(4, 3, seed=0), g)


def test_training_is_deterministic():
    g = labeled_chain_graph(ChainRecipe(num_chains=20))
    a, pa = train(g, TrainConfig(epochs=20))
    b, pb = train(g, TrainConfig(epochs=20))
    assert a.to_dict() == b.to_dict()
    np.testing.assert_array_equal(pa.W1, pb.W1)


def test_chain_recipe_shape():
    g = labeled_chain_graph()
    assert (g.node_count, g.edge_count) == (500, 400)
    roots = [g.nodes[c * 5] for c in range(100)]
    assert all(r.emotion == r.initial_emotion for r in roots)
    assert {n.emotion for n in g.nodes.values()} == set(Emotion)
