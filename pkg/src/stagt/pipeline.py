"""Glue from records to a trained and evaluated model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .ingest import build_graph, downsample_legitimate, encode, fit_codec
from .metrics import MetricsReport, evaluate
from .model import ModelConfig, ModelParams, forward, train_loop
from .numerics import make_rng
from .synthgen import quantile_boundary, split_temporal

ABLATIONS = {
    "full": {},
    "no_temporal": {"temporal.enabled": False},
    "no_transformer": {"attn.enabled": False},
    "no_relation_attention": {"gnn.relation_attention": False},
}


@dataclass
class Prepared:
    graph: object
    codec: object
    boundary: int
    n_dropped: int


def prepare_graph(records, cfg: RunConfig) -> Prepared:
    """Temporal split, down-sampling of training legit rows, encoding and graph build."""
    records = list(records)
    if not records:
        raise ValueError("no records to build a graph from")
    boundary = cfg["split.boundary"]
    if boundary < 0:
        boundary = quantile_boundary(records, cfg["split.train_fraction"])
    train, _ = split_temporal(records, boundary)
    train_rows = [r for r, t in zip(records, train) if t]
    test_rows = [r for r, t in zip(records, train) if not t]
    kept = downsample_legitimate(train_rows, cfg["data.downsample"],
                                 make_rng(cfg["train.seed"], "downsample"))
    records = kept + test_rows
    train = np.array([True] * len(kept) + [False] * len(test_rows))
    labelled = np.array([r.label in (0, 1) for r in records])
    codec = fit_codec(kept)
    x, t = encode(codec, records)
    relations = sorted({rel for r in records for rel in r.entities}, key=_relation_order(records))
    graph = build_graph(records, relations, x, t,
                        train_mask=train & labelled, test_mask=~train & labelled,
                        entity_cap=cfg["graph.entity_cap"], seed=cfg["train.seed"],
                        partition=None if cfg["graph.cross_split_edges"] else train)
    return Prepared(graph, codec, boundary, len(train_rows) - len(kept))


def _relation_order(records):
    first = list(records[0].entities)
    return lambda rel: (first.index(rel) if rel in first else len(first), rel)


def train_model(graph, cfg: RunConfig, callback=None):
    mcfg = ModelConfig.from_run(cfg)
    return train_loop(graph, mcfg, epochs=cfg["train.epochs"], lr=cfg["train.lr"],
                      seed=cfg["train.seed"], callback=callback)


def evaluate_model(graph, params: ModelParams, cfg: RunConfig, score_fn=None) -> MetricsReport:
    """Metrics over the test mask. ``score_fn(graph) -> probs`` replaces the model if given."""
    if score_fn is None:
        probs = forward(graph, params, ModelConfig.from_run(cfg)).probs
    else:
        probs = np.asarray(score_fn(graph), dtype=float)
    return evaluate(probs, graph.labels, graph.test_mask, cfg["train.threshold"])


def run_ablation(graph, cfg: RunConfig, variants=None, log=None) -> dict[str, MetricsReport]:
    """Train and evaluate each variant on the same graph and seed, sequentially."""
    results = {}
    for name in variants or ABLATIONS:
        vcfg = RunConfig(cfg)
        vcfg.update(ABLATIONS[name])
        params, _ = train_model(graph, vcfg)
        results[name] = evaluate_model(graph, params, vcfg)
        if log is not None:
            log(name, results[name])
    return results
