"""Small random graphs shared by the model-level tests."""
import numpy as np

from stagt.ingest import MultiRelationGraph
from stagt.numerics import make_rng


def random_graph(n=10, n_rel=2, feature_dim=3, p_edge=0.3, seed=0, empty_relations=()):
    rng = make_rng(seed, "test-graph")
    adjacency = []
    for r in range(n_rel):
        nb = [set() for _ in range(n)]
        if r not in empty_relations:
            for i in range(n):
                for j in range(i + 1, n):
                    if rng.random() < p_edge:
                        nb[i].add(j)
                        nb[j].add(i)
        adjacency.append([sorted(s) for s in nb])
    features = rng.random((n, feature_dim))
    timestamps = 1_600_000_000 + rng.integers(0, 30 * 86400, size=n)
    labels = np.zeros(n, dtype=int)
    labels[rng.permutation(n)[: max(2, n // 3)]] = 1
    train = np.zeros(n, bool)
    train[rng.permutation(n)[: (2 * n) // 3]] = True
    train[np.flatnonzero(labels == 1)[0]] = True
    train[np.flatnonzero(labels == 0)[0]] = True
    return MultiRelationGraph([f"r{r}" for r in range(n_rel)], adjacency, features, timestamps,
                              labels, train_mask=train, test_mask=~train)
