"""Seeded synthetic transactions with planted spatial and temporal fraud signatures.

Generation model
----------------
Every row picks a *device slot* and takes that slot's entity under each
relation, so the relations are correlated the way a physical device ties an
IP to a MAC address. With probability ``roam`` the first relation's entity is
redrawn uniformly instead (a device seen behind a different IP). Each relation's
marginal is uniform over its full entity pool.

* Legitimate rows: device slot uniform over all ``n_entities`` slots,
  timestamp uniform over the horizon.
* Fraud rows: split evenly over ``n_bursts`` rings. A ring owns
  ``fraud_pool`` device slots drawn from the full set and is active during one
  window of ``burst_window`` seconds; its rows use only the ring's devices and
  fall inside that window. When ``burst_daily`` is below one day, every
  window opens within the first ``burst_daily`` seconds of a UTC day, so rings
  keep to a recurring off-hours band.

Continuous features are Gaussian per class with a mean shift; ``noise``
scales the spread and thereby the class overlap.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .ingest import Schema, TransactionRecord
from .numerics import make_rng


DAY = 86400


class SynthConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    n_transactions: int = 4000
    fraud_ratio: float = 0.1
    relations: tuple[str, ...] = ("ip", "mac")
    n_entities: int = 1000
    fraud_pool: int = 4
    n_bursts: int = 40
    burst_window: int = 7200
    burst_daily: int = 21600
    horizon: int = 60 * 86400
    start_time: int = 1_600_000_000
    n_features: int = 6
    n_categories: int = 4
    noise: float = 1.0
    feature_shift: float = 0.4
    roam: float = 0.05
    seed: int = 7

    def __post_init__(self):
        if not 0.0 < self.fraud_ratio < 1.0:
            raise SynthConfigError("fraud_ratio must lie strictly between 0 and 1")
        if not self.relations:
            raise SynthConfigError("at least one relation is required")
        if self.n_entities < 1 or not 1 <= self.fraud_pool <= self.n_entities:
            raise SynthConfigError("need 1 <= fraud_pool <= n_entities")
        if self.n_bursts < 1 or self.burst_window < 1 or self.burst_window > self.horizon:
            raise SynthConfigError("need n_bursts >= 1 and 1 <= burst_window <= horizon")
        if not 1 <= self.burst_daily <= DAY:
            raise SynthConfigError("need 1 <= burst_daily <= 86400")
        if self.burst_daily < DAY and not len(_burst_days(self)):
            raise SynthConfigError("horizon holds no complete daily burst band")
        if self.n_transactions < 2 or self.n_features < 1 or self.noise <= 0:
            raise SynthConfigError("need n_transactions >= 2, n_features >= 1, noise > 0")
        if self.n_categories < 1 or not 0.0 <= self.roam <= 1.0:
            raise SynthConfigError("need n_categories >= 1 and 0 <= roam <= 1")

    @classmethod
    def from_run(cls, cfg) -> "SynthConfig":
        return cls(n_transactions=cfg["synth.n_transactions"], fraud_ratio=cfg["synth.fraud_ratio"],
                   relations=tuple(r.strip() for r in cfg["synth.relations"].split(",") if r.strip()),
                   n_entities=cfg["synth.n_entities"], fraud_pool=cfg["synth.fraud_pool"],
                   n_bursts=cfg["synth.n_bursts"], burst_window=cfg["synth.burst_window"],
                   burst_daily=cfg["synth.burst_daily"],
                   horizon=cfg["synth.horizon"], start_time=cfg["synth.start_time"],
                   n_features=cfg["synth.n_features"], n_categories=cfg["synth.n_categories"],
                   noise=cfg["synth.noise"], feature_shift=cfg["synth.feature_shift"],
                   roam=cfg["synth.roam"], seed=cfg["synth.seed"])

    @property
    def n_fraud(self) -> int:
        return int(np.floor(self.n_transactions * self.fraud_ratio + 0.5))

    @property
    def feature_names(self) -> list[str]:
        return ["amount"] + [f"f{k}" for k in range(1, self.n_features)]

    def schema(self) -> Schema:
        return Schema(id="txn_id", timestamp="timestamp", label="label",
                      continuous=tuple(self.feature_names), categorical=("channel",),
                      relations=tuple(self.relations))


def _burst_days(cfg) -> np.ndarray:
    """Offsets (from start_time) of UTC midnights whose daily band fits the horizon."""
    first = -cfg.start_time % DAY
    last = cfg.horizon - cfg.burst_window - cfg.burst_daily
    return np.arange(first, last + 1, DAY) if last >= first else np.empty(0, dtype=np.int64)


def _burst_starts(cfg, rng) -> np.ndarray:
    if cfg.burst_daily >= DAY:
        return rng.integers(0, cfg.horizon - cfg.burst_window + 1, size=cfg.n_bursts)
    days = _burst_days(cfg)
    return days[rng.integers(0, len(days), size=cfg.n_bursts)] + rng.integers(0, cfg.burst_daily, size=cfg.n_bursts)


def generate(cfg: SynthConfig) -> list[TransactionRecord]:
    """Records sorted by timestamp, with exactly ``cfg.n_fraud`` fraud rows."""
    return generate_with_rings(cfg)[0]


def generate_with_rings(cfg: SynthConfig) -> tuple[list[TransactionRecord], np.ndarray]:
    """Like :func:`generate`, also returning each row's ring index (-1 for legit)."""
    n, n_fraud = cfg.n_transactions, cfg.n_fraud
    n_legit = n - n_fraud
    if n_fraud == 0 or n_legit == 0:
        raise SynthConfigError("configuration yields a single class")
    rng = make_rng(cfg.seed, "synth")

    # entity tables: device slot -> entity id per relation
    tables = {rel: rng.permutation(cfg.n_entities) for rel in cfg.relations}

    ts = np.empty(n, dtype=np.int64)
    slots = np.empty(n, dtype=np.int64)
    ring = np.full(n, -1)
    labels = np.zeros(n, dtype=np.int64)
    labels[:n_fraud] = 1

    ring[:n_fraud] = np.arange(n_fraud) % cfg.n_bursts
    starts = _burst_starts(cfg, rng)
    pools = [rng.choice(cfg.n_entities, size=cfg.fraud_pool, replace=False) for _ in range(cfg.n_bursts)]
    for i in range(n_fraud):
        b = ring[i]
        ts[i] = starts[b] + rng.integers(0, cfg.burst_window)
        slots[i] = pools[b][rng.integers(0, cfg.fraud_pool)]
    ts[n_fraud:] = rng.integers(0, cfg.horizon, size=n_legit)
    slots[n_fraud:] = rng.integers(0, cfg.n_entities, size=n_legit)

    entities = {rel: tables[rel][slots] for rel in cfg.relations}
    roaming = rng.random(n) < cfg.roam
    first = cfg.relations[0]
    entities[first] = np.where(roaming, rng.integers(0, cfg.n_entities, size=n), entities[first])

    shift = np.where(labels[:, None] == 1, cfg.feature_shift, 0.0)
    feats = shift + cfg.noise * rng.standard_normal((n, cfg.n_features))
    channel = rng.integers(0, cfg.n_categories, size=n)

    order = np.lexsort((rng.random(n), ts))
    records = []
    for k, i in enumerate(order):
        cont = {"amount": float(np.round(50.0 * np.exp(0.5 * feats[i, 0]), 2))}
        cont.update({f"f{j}": float(feats[i, j]) for j in range(1, cfg.n_features)})
        records.append(TransactionRecord(
            txn_id=f"T{k:07d}",
            timestamp=int(cfg.start_time + ts[i]),
            continuous=cont,
            categorical={"channel": f"c{channel[i]}"},
            entities={rel: f"{rel}-{entities[rel][i]:05d}" for rel in cfg.relations},
            label=int(labels[i]),
        ))
    return records, ring[order]


def split_temporal(records, boundary: int) -> tuple[np.ndarray, np.ndarray]:
    """Train mask = rows strictly before ``boundary``; test mask = the rest."""
    ts = np.array([r.timestamp for r in records])
    train = ts < boundary
    test = ~train
    if not train.any() or not test.any():
        raise ValueError(f"boundary {boundary} leaves an empty train or test side")
    return train, test


def quantile_boundary(records, fraction: float) -> int:
    """Timestamp at the given fraction of the sorted time axis."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("train fraction must lie in (0, 1)")
    ts = np.sort([r.timestamp for r in records])
    return int(ts[min(len(ts) - 1, int(np.floor(fraction * len(ts))))])


def collision_rate(records, relation: str, label: int) -> float:
    """Probability that two distinct rows of one class share the relation's entity."""
    counts = Counter(r.entities[relation] for r in records if r.label == label)
    m = sum(counts.values())
    if m < 2:
        return 0.0
    return sum(c * (c - 1) for c in counts.values()) / (m * (m - 1))


def audit(records, rings, cfg: SynthConfig) -> dict:
    """Ground-truth statistics of a generated set; ``rings`` as from generation."""
    rings = np.asarray(rings)
    spreads = []
    for b in np.unique(rings[rings >= 0]):
        t = np.array([r.timestamp for r, k in zip(records, rings) if k == b], dtype=float)
        if len(t) > 1:
            spreads.append(np.abs(t[:, None] - t[None, :]).sum() / (len(t) * (len(t) - 1)))
    collisions = {rel: {"fraud": collision_rate(records, rel, 1),
                        "legit": collision_rate(records, rel, 0)} for rel in cfg.relations}
    n_fraud = sum(r.label == 1 for r in records)
    return {
        "rows": len(records),
        "fraud_rows": n_fraud,
        "legit_rows": len(records) - n_fraud,
        "time_min": min(r.timestamp for r in records),
        "time_max": max(r.timestamp for r in records),
        "burst_count": int(len(np.unique(rings[rings >= 0]))),
        "burst_mean_abs_dt_max": float(max(spreads)) if spreads else 0.0,
        "collision_rate": collisions,
        "collision_ratio": {rel: (c["fraud"] / c["legit"] if c["legit"] else None)
                            for rel, c in collisions.items()},
    }
