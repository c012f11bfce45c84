"""Attribute-driven embedding and relation-aware message passing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad


def initial_embed(x, w1):
    """h0 = tanh(X W1). Reads features only, never the graph."""
    xs, ws = np.shape(ad.value(x)), np.shape(ad.value(w1))
    if xs[1] != ws[0]:
        raise ValueError(f"initial_embed: features {xs} incompatible with W1 {ws}")
    return ad.tanh(ad.matmul(x, w1))


@dataclass(frozen=True)
class RelationOperator:
    """Sparse aggregation operator for one relation.

    ``agg @ h`` gives the per-node neighbour aggregate and ``self_weight``
    scales ``h_i`` in the difference aggregate, so that
    ``self_weight * h - agg @ h`` equals AGGR{h_i - h_j}.
    """

    agg: sp.csr_matrix
    self_weight: np.ndarray  # N x 1

    @classmethod
    def from_adjacency(cls, adj: sp.csr_matrix, aggr: str = "mean") -> "RelationOperator":
        deg = np.asarray(adj.sum(axis=1)).reshape(-1)
        if aggr == "mean":
            inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
            return cls(sp.diags(inv) @ adj, (deg > 0).astype(float)[:, None])
        if aggr == "sum":
            return cls(adj.tocsr(), deg[:, None])
        raise ValueError(f"unknown aggregator {aggr!r}")


def relation_operators(graph, aggr: str = "mean") -> list[RelationOperator]:
    return [RelationOperator.from_adjacency(a, aggr) for a in graph.sparse_adjacency()]


def neighbour_aggregates(h, op: RelationOperator):
    """Return (neighbour aggregate, difference aggregate); zeros for isolated nodes."""
    a = ad.sparse_matmul(op.agg, h)
    b = ad.sub(ad.mul(op.self_weight, h), a)
    return a, b


def intra_relation(h_prev, op: RelationOperator, w_self_diff):
    """tanh([AGGR{h_j} || AGGR{h_i - h_j}] W) over one relation."""
    a, b = neighbour_aggregates(h_prev, op)
    return ad.tanh(ad.matmul(ad.concat_cols([a, b]), w_self_diff))


def relation_scores(per_relation_h, q, w2, b):
    """Mean over all nodes of q^T tanh(W2 h + b), one score per relation (1 x R)."""
    cols = [ad.matmul(ad.mean_rows(ad.tanh(ad.add(ad.matmul(h, w2), b))), q)
            for h in per_relation_h]
    return ad.concat_cols(cols)


def relation_attention(per_relation_h, q, w2, b, uniform: bool = False):
    """Blend relation embeddings by softmax-normalised importance.

    Returns ``(fused, alpha)`` with ``alpha`` of shape 1 x R. ``uniform``
    fixes alpha at 1/R (the no-relation-attention ablation).
    """
    r = len(per_relation_h)
    if r < 1:
        raise ValueError("need at least one relation")
    if uniform:
        alpha = np.full((1, r), 1.0 / r)
    else:
        alpha = ad.softmax_rows(relation_scores(per_relation_h, q, w2, b))
    fused = ad.mul(ad.getitem(alpha, (slice(None), slice(0, 1))), per_relation_h[0])
    for k in range(1, r):
        fused = ad.add(fused, ad.mul(ad.getitem(alpha, (slice(None), slice(k, k + 1))),
                                     per_relation_h[k]))
    return fused, alpha


def fuse_layers(per_layer_h):
    if not per_layer_h:
        raise ValueError("need at least one layer")
    widths = {np.shape(ad.value(h))[1] for h in per_layer_h}
    if len(widths) != 1:
        raise ValueError(f"fuse_layers: layer widths differ {sorted(widths)}")
    return ad.concat_cols(list(per_layer_h))
