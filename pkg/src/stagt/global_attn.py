"""Dense multi-head self-attention over all node embeddings, with FFN and post-norm."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


class TooManyNodes(RuntimeError):
    pass


@dataclass
class HeadParams:
    wq: object
    wk: object
    wv: object


@dataclass
class TransformerParams:
    heads: list[HeadParams]
    wo: object
    ffn_w1: object
    ffn_b1: object
    ffn_w2: object
    ffn_b2: object
    ln1_gain: object
    ln1_bias: object
    ln2_gain: object
    ln2_bias: object
    eps: float = 1e-5
    max_nodes: int = 20000


def project_qkv(h, head: HeadParams):
    for w in (head.wq, head.wk, head.wv):
        if np.shape(ad.value(w))[0] != np.shape(ad.value(h))[1]:
            raise ValueError(f"project_qkv: H {np.shape(ad.value(h))} incompatible with "
                             f"projection {np.shape(ad.value(w))}")
    return ad.matmul(h, head.wq), ad.matmul(h, head.wk), ad.matmul(h, head.wv)


def attention_head(q, k, v):
    """softmax(Q K^T / sqrt(d_k)) V over every pair of nodes.

    Returns ``(output, attention_matrix)``.
    """
    if not (np.shape(ad.value(q))[1] == np.shape(ad.value(k))[1]
            and np.shape(ad.value(k))[0] == np.shape(ad.value(v))[0]):
        raise ValueError("attention_head: Q/K/V shapes disagree")
    return ad.attention(q, k, v)


def feed_forward(x, p: TransformerParams):
    hidden = ad.tanh(ad.add(ad.matmul(x, p.ffn_w1), p.ffn_b1))
    return ad.add(ad.matmul(hidden, p.ffn_w2), p.ffn_b2)


def multi_head(h, p: TransformerParams, maps: list | None = None):
    """Concat(head_1..head_S) Wo, then residual + norm, FFN, residual + norm.

    If ``maps`` is given, each head's N x N attention matrix is appended to it.
    """
    n = np.shape(ad.value(h))[0]
    if n > p.max_nodes:
        raise TooManyNodes(f"dense attention over {n} nodes exceeds attn.max_nodes={p.max_nodes}")
    outputs = []
    for head in p.heads:
        out, attn = attention_head(*project_qkv(h, head))
        outputs.append(out)
        if maps is not None:
            maps.append(attn)
    mixed = ad.matmul(ad.concat_cols(outputs), p.wo)
    out1 = ad.layer_norm_rows(ad.add(h, mixed), p.ln1_gain, p.ln1_bias, p.eps)
    return ad.layer_norm_rows(ad.add(out1, feed_forward(out1, p)), p.ln2_gain, p.ln2_bias, p.eps)
