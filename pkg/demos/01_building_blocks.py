"""A walk through the model's pieces on toy inputs.

Run from the repo root:  python demos/01_building_blocks.py
"""
import numpy as np

from stagt.hetero_gnn import RelationOperator, neighbour_aggregates, relation_attention
from stagt.metrics import auc, confusion
from stagt.numerics import make_rng
from stagt.temporal import base_encoding
import scipy.sparse as sp

np.set_printoptions(precision=4, suppress=True)

# --- time as a vector ------------------------------------------------------
# Even slots are sines, odd slots cosines, each at a slower frequency.
print("base(0, 4)     ", base_encoding(0, 4))
print("base(1, 4)     ", base_encoding(1, 4))
# standard=True pairs every sine with a cosine at the same frequency,
# so one day can be encoded as one full turn of the first pair
day = 86400 / (2 * np.pi)
for hour in (0, 6, 12, 24):
    print(f"hour {hour:2d}        ", base_encoding(hour * 3600 / day, 4, standard=True))

# --- one relation, three nodes ---------------------------------------------
# node 0 shares an IP with nodes 1 and 2
adj = sp.csr_matrix(np.array([[0, 1, 1], [1, 0, 0], [1, 0, 0]], dtype=float))
h = np.array([[1.0, 1.0], [1.0, 0.0], [3.0, 2.0]])
mean_nb, mean_diff = neighbour_aggregates(h, RelationOperator.from_adjacency(adj))
print("neighbour mean of node 0      ", mean_nb[0])
print("self-minus-neighbour of node 0", mean_diff[0])

# --- blending relations ----------------------------------------------------
# A zero query scores every relation alike, so the blend is a plain average.
rng = make_rng(0, "demo")
per_rel = [rng.standard_normal((3, 2)) for _ in range(3)]
_, alpha = relation_attention(per_rel, np.zeros((2, 1)), np.eye(2), np.zeros((1, 2)))
print("alpha with zero query", alpha)
_, alpha = relation_attention(per_rel, rng.standard_normal((2, 1)) * 3, np.eye(2), np.zeros((1, 2)))
print("alpha with a real query", alpha, "sum", alpha.sum())

# --- scoring ---------------------------------------------------------------
probs, labels = np.array([0.9, 0.4, 0.6, 0.1]), np.array([1, 1, 0, 0])
print("(tp, fp, tn, fn) =", confusion(probs, labels))
print("auc =", auc(probs, labels))  # 3 of 4 fraud/legit pairs ordered right
