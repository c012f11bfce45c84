import math

import numpy as np
import pytest
import scipy.sparse as sp

from stagt.hetero_gnn import (RelationOperator, fuse_layers, initial_embed, intra_relation,
                              neighbour_aggregates, relation_attention, relation_operators,
                              relation_scores)
from stagt.ingest import MultiRelationGraph
from stagt.numerics import make_rng


def adjacency(n, edges):
    rows = [i for i, j in edges] + [j for i, j in edges]
    cols = [j for i, j in edges] + [i for i, j in edges]
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


def test_zero_features_embed_to_zero():
    np.testing.assert_array_equal(initial_embed(np.zeros((3, 2)), np.ones((2, 4))), np.zeros((3, 4)))


def test_scalar_embedding():
    out = initial_embed(np.array([[1.0]]), np.array([[1.0]]))
    assert out[0, 0] == pytest.approx(0.761594, abs=1e-6)
    assert out[0, 0] == math.tanh(1.0)


def test_embedding_commutes_with_row_permutation():
    rng = make_rng(0)
    x, w = rng.standard_normal((6, 3)), rng.standard_normal((3, 4))
    perm = rng.permutation(6)
    np.testing.assert_array_equal(initial_embed(x[perm], w), initial_embed(x, w)[perm])


def test_embedding_ignores_adjacency():
    rng = make_rng(1)
    x = rng.standard_normal((4, 3))
    w = rng.standard_normal((3, 2))
    g1 = MultiRelationGraph(["r"], [[[1], [0], [], []]], x, np.zeros(4), np.zeros(4, int))
    g2 = MultiRelationGraph(["r"], [[[], [2, 3], [1], [1]]], x, np.zeros(4), np.zeros(4, int))
    np.testing.assert_array_equal(initial_embed(g1.features, w), initial_embed(g2.features, w))


def test_embedding_shape_error():
    with pytest.raises(ValueError):
        initial_embed(np.zeros((2, 3)), np.zeros((4, 2)))


def test_mean_aggregates_example():
    # node 0 has neighbours 1 and 2
    h = np.array([[1.0, 1.0], [1.0, 0.0], [3.0, 2.0]])
    op = RelationOperator.from_adjacency(adjacency(3, [(0, 1), (0, 2)]))
    a, b = neighbour_aggregates(h, op)
    np.testing.assert_array_equal(a[0], [2.0, 1.0])
    np.testing.assert_array_equal(b[0], [-1.0, 0.0])


def test_equal_sole_neighbour_gives_zero_difference():
    h = np.array([[0.3, -0.2], [0.3, -0.2]])
    _, b = neighbour_aggregates(h, RelationOperator.from_adjacency(adjacency(2, [(0, 1)])))
    np.testing.assert_array_equal(b, np.zeros((2, 2)))


def test_isolated_node_outputs_zero():
    h = make_rng(2).standard_normal((3, 2))
    op = RelationOperator.from_adjacency(adjacency(3, [(0, 1)]))
    a, b = neighbour_aggregates(h, op)
    np.testing.assert_array_equal(a[2], [0.0, 0.0])
    np.testing.assert_array_equal(b[2], [0.0, 0.0])
    out = intra_relation(h, op, make_rng(3).standard_normal((4, 2)))
    np.testing.assert_array_equal(out[2], [0.0, 0.0])


def test_no_edges_gives_zero_matrix():
    h = make_rng(4).standard_normal((5, 3))
    op = RelationOperator.from_adjacency(adjacency(5, []))
    np.testing.assert_array_equal(intra_relation(h, op, np.ones((6, 3))), np.zeros((5, 3)))


def test_sum_aggregator_matches_loop():
    rng = make_rng(5)
    adj = adjacency(5, [(0, 1), (0, 2), (3, 4), (1, 2)])
    h = rng.standard_normal((5, 2))
    a, b = neighbour_aggregates(h, RelationOperator.from_adjacency(adj, "sum"))
    dense = adj.toarray()
    for i in range(5):
        nb = np.flatnonzero(dense[i])
        np.testing.assert_allclose(a[i], h[nb].sum(axis=0), atol=1e-14)
        np.testing.assert_allclose(b[i], (h[i] - h[nb]).sum(axis=0), atol=1e-14)
    with pytest.raises(ValueError):
        RelationOperator.from_adjacency(adj, "max")


def test_intra_relation_matches_loop_oracle():
    rng = make_rng(6)
    adj = adjacency(6, [(0, 1), (1, 2), (2, 3), (0, 5), (3, 5), (4, 1)])
    h, w = rng.standard_normal((6, 3)), rng.standard_normal((6, 3))
    out = intra_relation(h, RelationOperator.from_adjacency(adj), w)
    dense = adj.toarray()
    for i in range(6):
        nb = np.flatnonzero(dense[i])
        cat = np.concatenate([h[nb].mean(axis=0), (h[i] - h[nb]).mean(axis=0)])
        np.testing.assert_allclose(out[i], np.tanh(cat @ w), atol=1e-14)


def test_zero_query_gives_uniform_mix():
    rng = make_rng(7)
    hs = [rng.standard_normal((4, 3)) for _ in range(3)]
    fused, alpha = relation_attention(hs, np.zeros((3, 1)), rng.standard_normal((3, 3)), np.zeros((1, 3)))
    np.testing.assert_allclose(alpha, [[1 / 3] * 3], atol=1e-15)
    np.testing.assert_allclose(fused, sum(hs) / 3, atol=1e-14)


def test_single_relation_passes_through():
    h = make_rng(8).standard_normal((4, 3))
    fused, alpha = relation_attention([h], np.ones((3, 1)), np.eye(3), np.zeros((1, 3)))
    assert alpha.tolist() == [[1.0]]
    np.testing.assert_array_equal(fused, h)


def test_scores_ln2_give_one_third_two_thirds():
    # constant embeddings with w2 = I, b = 0 make the score tanh(h) . q exactly
    target = math.atanh(math.log(2))
    hs = [np.zeros((3, 1)), np.full((3, 1), target)]
    scores = relation_scores(hs, np.ones((1, 1)), np.eye(1), np.zeros((1, 1)))
    np.testing.assert_allclose(scores, [[0.0, math.log(2)]], atol=1e-15)
    _, alpha = relation_attention(hs, np.ones((1, 1)), np.eye(1), np.zeros((1, 1)))
    np.testing.assert_allclose(alpha, [[1 / 3, 2 / 3]], atol=1e-15)


def test_scores_average_over_all_nodes():
    rng = make_rng(9)
    h = rng.standard_normal((5, 2))
    q, w2, b = rng.standard_normal((2, 1)), rng.standard_normal((2, 2)), rng.standard_normal((1, 2))
    expected = sum(float(q[:, 0] @ np.tanh(h[i] @ w2 + b[0])) for i in range(5)) / 5
    assert relation_scores([h], q, w2, b)[0, 0] == pytest.approx(expected, abs=1e-14)


def test_uniform_flag_ignores_parameters():
    rng = make_rng(10)
    hs = [rng.standard_normal((4, 2)) for _ in range(2)]
    _, alpha = relation_attention(hs, rng.standard_normal((2, 1)), rng.standard_normal((2, 2)),
                                  np.zeros((1, 2)), uniform=True)
    assert alpha.tolist() == [[0.5, 0.5]]


@pytest.mark.parametrize("seed", range(20))
def test_alpha_on_simplex(seed):
    rng = make_rng(seed, "simplex")
    r = int(rng.integers(1, 5))
    hs = [rng.standard_normal((6, 4)) * 5 for _ in range(r)]
    _, alpha = relation_attention(hs, rng.standard_normal((4, 1)) * 10, rng.standard_normal((4, 4)),
                                  rng.standard_normal((1, 4)))
    assert np.all(alpha >= 0)
    assert abs(alpha.sum() - 1.0) <= 1e-12


def test_fuse_layers():
    h = np.array([[1.0, 2.0]])
    np.testing.assert_array_equal(fuse_layers([h]), h)
    np.testing.assert_array_equal(fuse_layers([np.array([[1.0, 2.0]]), np.array([[3.0, 4.0]])]),
                                  [[1.0, 2.0, 3.0, 4.0]])
    layers = [make_rng(k).standard_normal((3, 4)) for k in range(3)]
    out = fuse_layers(layers)
    for ell, layer in enumerate(layers):
        for c in range(4):
            np.testing.assert_array_equal(out[:, ell * 4 + c], layer[:, c])
    with pytest.raises(ValueError):
        fuse_layers([np.zeros((2, 2)), np.zeros((2, 3))])
    with pytest.raises(ValueError):
        fuse_layers([])


def test_operators_follow_graph_relations():
    g = MultiRelationGraph(["a", "b"], [[[1], [0], []], [[], [2], [1]]],
                           np.zeros((3, 1)), np.zeros(3), np.zeros(3, int))
    ops = relation_operators(g)
    assert len(ops) == 2
    np.testing.assert_array_equal(ops[0].self_weight[:, 0], [1.0, 1.0, 0.0])
    np.testing.assert_array_equal(ops[1].agg.toarray(), [[0, 0, 0], [0, 0, 1], [0, 1, 0]])
