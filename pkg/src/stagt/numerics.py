"""Dense float64 kernels and seeded random streams.

Matrices are plain 2-D ``numpy.ndarray`` objects in C (row-major) order.
Every kernel here is a pure function of its inputs.
"""
from __future__ import annotations

import hashlib

import numpy as np

DTYPE = np.float64


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a finite 2-D float64 array (1-D input becomes a row)."""
    m = np.ascontiguousarray(a, dtype=DTYPE)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise ValueError(f"{name}: expected 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name}: contains non-finite entries")
    return m


# -- random streams -------------------------------------------------------

def _stream_key(stream: str) -> tuple[int, ...]:
    digest = hashlib.sha256(stream.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))


def make_rng(seed: int, stream: str = "") -> np.random.Generator:
    """Counter-based generator for a named stream under ``seed``.

    Philox is counter-based, so each named stream is independent of how many
    draws other streams have made.
    """
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=_stream_key(stream))
    return np.random.Generator(np.random.Philox(ss))


def glorot_init(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ValueError("glorot_init needs rows, cols >= 1")
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


# -- row-wise kernels -----------------------------------------------------

def softmax_rows(m) -> np.ndarray:
    m = np.asarray(m, dtype=DTYPE)
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def layer_norm_rows(m, gain, bias, eps: float = 1e-5) -> np.ndarray:
    if eps <= 0:
        raise ValueError("eps must be positive")
    m = np.asarray(m, dtype=DTYPE)
    mu = m.mean(axis=-1, keepdims=True)
    centered = m - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / np.sqrt(var + eps) * gain + bias


def sigmoid(x):
    x = np.asarray(x, dtype=DTYPE)
    # two-branch form never calls exp on a large positive argument
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def concat_cols(blocks) -> np.ndarray:
    blocks = [np.asarray(b, dtype=DTYPE) for b in blocks]
    rows = {b.shape[0] for b in blocks}
    if len(rows) != 1:
        raise ValueError(f"concat_cols: row counts differ {sorted(rows)}")
    return np.concatenate(blocks, axis=1)
