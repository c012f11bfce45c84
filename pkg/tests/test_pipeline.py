import dataclasses

import numpy as np
import pytest

from stagt.config import RunConfig
from stagt.metrics import auc
from stagt.model import ModelConfig, forward
from stagt.pipeline import ABLATIONS, evaluate_model, prepare_graph, run_ablation, train_model
from stagt.synthgen import SynthConfig, generate

TINY = {"synth.n_transactions": 300, "synth.n_entities": 80, "synth.n_bursts": 6,
        "gnn.dim": 4, "gnn.layers": 1, "attn.heads": 1, "attn.ffn_mult": 1,
        "train.epochs": 3, "train.lr": 0.01}


def tiny_cfg(**extra):
    cfg = RunConfig(TINY)
    cfg.update(extra)
    return cfg


def records_for(cfg):
    return generate(SynthConfig.from_run(cfg))


def test_split_follows_time():
    cfg = tiny_cfg()
    prep = prepare_graph(records_for(cfg), cfg)
    g = prep.graph
    t = np.asarray(g.timestamps)
    assert t[g.train_mask].max() < prep.boundary <= t[g.test_mask].min()
    assert g.train_mask.sum() + g.test_mask.sum() == g.node_count


def test_downsampling_touches_only_training_legit_rows():
    cfg = tiny_cfg(**{"data.downsample": 0.3})
    records = records_for(cfg)
    full = prepare_graph(records, tiny_cfg()).graph
    prep = prepare_graph(records, cfg)
    g = prep.graph
    assert prep.n_dropped > 0
    assert g.test_mask.sum() == full.test_mask.sum()
    assert g.labels[g.train_mask].sum() == full.labels[full.train_mask].sum()


def test_codec_never_sees_test_rows():
    cfg = tiny_cfg()
    records = records_for(cfg)
    prep = prepare_graph(records, cfg)
    n_train = int(prep.graph.train_mask.sum())
    # perturb every test row's features; training features must not move
    changed = records[:n_train] + [dataclasses.replace(r, continuous={k: v * 100 + 7 for k, v in r.continuous.items()})
                                   for r in records[n_train:]]
    other = prepare_graph(changed, cfg)
    np.testing.assert_array_equal(other.graph.features[:n_train], prep.graph.features[:n_train])
    assert other.codec == prep.codec


def test_cross_split_edges_flag():
    cfg = tiny_cfg()
    records = records_for(cfg)
    joined = prepare_graph(records, cfg).graph
    cut = prepare_graph(records, tiny_cfg(**{"graph.cross_split_edges": False})).graph
    tr = np.asarray(cut.train_mask)
    for rel in cut.adjacency:
        for i, nb in enumerate(rel):
            assert np.all(tr[nb] == tr[i])
    assert sum(joined.edge_count(r) for r in range(2)) > sum(cut.edge_count(r) for r in range(2))


def test_empty_records_rejected():
    with pytest.raises(ValueError):
        prepare_graph([], tiny_cfg())


def test_evaluate_score_hook():
    cfg = tiny_cfg()
    g = prepare_graph(records_for(cfg), cfg).graph
    params, _ = train_model(g, cfg)
    perfect = evaluate_model(g, params, cfg, score_fn=lambda graph: graph.labels.astype(float))
    assert perfect.recall == perfect.f1 == perfect.auc == 1.0
    flat = evaluate_model(g, params, cfg, score_fn=lambda graph: np.full(graph.node_count, 0.3))
    assert flat.auc == 0.5
    report = evaluate_model(g, params, cfg)
    probs = forward(g, params, ModelConfig.from_run(cfg)).probs
    assert report.auc == auc(probs, g.labels, g.test_mask)


def test_ablation_rows_match_flag_runs():
    cfg = tiny_cfg()
    g = prepare_graph(records_for(cfg), cfg).graph
    results = run_ablation(g, cfg)
    assert list(results) == list(ABLATIONS)
    for name, overrides in ABLATIONS.items():
        params, _ = train_model(g, tiny_cfg(**overrides))
        assert evaluate_model(g, params, tiny_cfg(**overrides)) == results[name]
