"""Sinusoidal time base, learnable projection, and injection into node embeddings."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .numerics import glorot_init


def base_encoding(t, d: int, standard: bool = False) -> np.ndarray:
    """Sinusoidal base for one time value or an array of them.

    Even index ``2i`` is ``sin(t / 10000**(2i/d))`` and odd index ``2i+1`` is
    ``cos(t / 10000**((2i+1)/d))``. With ``standard=True`` the odd index uses
    the conventional exponent ``2i/d`` instead.

    Returns shape ``(d,)`` for scalar ``t`` and ``(len(t), d)`` otherwise.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    t_arr = np.asarray(t, dtype=float)
    idx = np.arange(d)
    expo = (idx - idx % 2) / d if standard else idx / d
    angles = t_arr[..., None] / np.power(10000.0, expo)
    return np.where(idx % 2 == 0, np.sin(angles), np.cos(angles))


@dataclass
class TemporalEncoder:
    linear: np.ndarray            # d x d
    bias: np.ndarray              # 1 x d
    time_scale: float = 3600.0
    epoch_offset: float = 0.0
    standard_sinusoid: bool = False

    def __post_init__(self):
        d = np.shape(ad.value(self.linear))[0]
        if np.shape(ad.value(self.linear)) != (d, d) or np.shape(ad.value(self.bias)) != (1, d):
            raise ValueError("temporal encoder needs a d x d projection and a 1 x d bias")
        if self.time_scale <= 0:
            raise ValueError("time_scale must be positive")

    @property
    def dim(self) -> int:
        return np.shape(ad.value(self.linear))[0]

    @classmethod
    def init(cls, rng, d: int, **kw) -> "TemporalEncoder":
        return cls(glorot_init(rng, d, d), np.zeros((1, d)), **kw)

    def base(self, timestamps) -> np.ndarray:
        scaled = (np.asarray(timestamps, dtype=float) - self.epoch_offset) / self.time_scale
        return base_encoding(scaled, self.dim, self.standard_sinusoid)


def temporal_encode(enc: TemporalEncoder, t):
    """Projected encoding; a length-d vector for scalar ``t``, N x d for an array."""
    scalar = np.ndim(t) == 0
    base = enc.base(np.atleast_1d(t))
    out = ad.add(ad.matmul(base, enc.linear), enc.bias)
    return out[0] if scalar and not isinstance(out, ad.Tensor) else out


def inject(h0, enc: TemporalEncoder, timestamps):
    n = np.shape(ad.value(h0))[0]
    timestamps = np.asarray(timestamps, dtype=float)
    if timestamps.shape != (n,) or np.shape(ad.value(h0))[1] != enc.dim:
        raise ValueError(
            f"inject: embeddings {np.shape(ad.value(h0))} do not match "
            f"{timestamps.shape} timestamps at dim {enc.dim}")
    return ad.add(h0, temporal_encode(enc, timestamps))
