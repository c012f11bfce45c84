import csv
import json

import numpy as np
import pytest

from stagt import cli
from stagt.config import RunConfig
from stagt.ingest import Schema, parse_csv
from stagt.model import ModelConfig, ModelParams, load_checkpoint

SMALL_CONF = """\
synth.n_transactions = 300
synth.n_entities = 80
synth.n_bursts = 6
gnn.dim = 4
gnn.layers = 1
attn.heads = 1
attn.ffn_mult = 1
train.epochs = 3
train.lr = 0.01
"""


@pytest.fixture
def conf(tmp_path):
    path = tmp_path / "small.conf"
    path.write_text(SMALL_CONF)
    return str(path)


@pytest.fixture
def data(tmp_path, conf):
    out = tmp_path / "data" / "synth.csv"
    assert cli.main(["generate", "--config", conf, "--out", str(out)]) == cli.EXIT_OK
    return out


def test_generate_writes_csv_schema_and_stats(data):
    lines = data.read_text().splitlines()
    assert len(lines) == 301
    schema = Schema.load(data.with_suffix(".schema"))
    assert len(parse_csv(data, schema)) == 300
    stats = json.loads(data.with_suffix(".stats.json").read_text())
    assert stats["rows"] == 300 and stats["fraud_rows"] == 30


def test_generate_is_byte_identical(tmp_path, conf, data):
    again = tmp_path / "again.csv"
    cli.main(["generate", "--config", conf, "--out", str(again)])
    assert again.read_bytes() == data.read_bytes()
    other = tmp_path / "other.csv"
    cli.main(["generate", "--config", conf, "--seed", "99", "--out", str(other)])
    assert other.read_bytes() != data.read_bytes()


def test_train_outputs_and_determinism(tmp_path, conf, data):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.main(["train", str(data), "--config", conf, "--out", str(out)]) == cli.EXIT_OK
    assert (a / "checkpoint.json").read_bytes() == (b / "checkpoint.json").read_bytes()
    assert (a / "loss_log.csv").read_bytes() == (b / "loss_log.csv").read_bytes()
    rows = list(csv.reader((a / "train_log.csv").open()))
    assert rows[0] == ["epoch", "loss", "wall_time"] and len(rows) == 4
    assert RunConfig.parse((a / "config.txt").read_text()) == RunConfig.load(conf)


def test_zero_epochs_saves_initialisation(tmp_path, conf, data):
    out = tmp_path / "zero"
    cli.main(["train", str(data), "--config", conf, "--set", "train.epochs=0", "--out", str(out)])
    params, doc = load_checkpoint(out / "checkpoint.json")
    cfg = RunConfig.load(conf)
    init = ModelParams.init(ModelConfig.from_run(cfg), params["embed.W1"].shape[0], 2, cfg["train.seed"])
    assert params.flat.tobytes() == init.flat.tobytes()
    assert (out / "loss_log.csv").read_text() == "epoch,loss\n"


def test_evaluate_writes_report(tmp_path, conf, data, capsys):
    run = tmp_path / "run"
    cli.main(["train", str(data), "--config", conf, "--out", str(run)])
    capsys.readouterr()
    assert cli.main(["evaluate", str(run / "checkpoint.json"), str(data), "--config", conf]) == cli.EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    saved = json.loads((run / "metrics.json").read_text())
    assert printed == saved
    assert set(saved) == {"recall", "precision", "f1", "auc", "tp", "fp", "tn", "fn", "threshold"}
    assert saved["tp"] + saved["fp"] + saved["tn"] + saved["fn"] == 90


def test_evaluate_refuses_other_config(tmp_path, conf, data, capsys):
    run = tmp_path / "run"
    cli.main(["train", str(data), "--config", conf, "--out", str(run)])
    code = cli.main(["evaluate", str(run / "checkpoint.json"), str(data), "--config", conf,
                     "--set", "gnn.aggr=sum"])
    assert code == cli.EXIT_CONFIG
    assert "hash" in capsys.readouterr().err


def test_evaluate_score_hook(tmp_path, conf, data, capsys):
    run = tmp_path / "run"
    cli.main(["train", str(data), "--config", conf, "--out", str(run)])
    args = cli.build_parser().parse_args(["evaluate", str(run / "checkpoint.json"), str(data),
                                          "--config", conf, "--out", str(tmp_path / "m.json")])
    cfg = RunConfig.load(conf)
    cli.cmd_evaluate(args, cfg, score_fn=lambda g: g.labels.astype(float))
    report = json.loads((tmp_path / "m.json").read_text())
    assert report["recall"] == report["f1"] == report["auc"] == 1.0
    cli.cmd_evaluate(args, cfg, score_fn=lambda g: np.zeros(g.node_count))
    assert json.loads((tmp_path / "m.json").read_text())["auc"] == 0.5


def test_ablate_table(tmp_path, conf, data):
    out = tmp_path / "abl"
    assert cli.main(["ablate", str(data), "--config", conf, "--out", str(out)]) == cli.EXIT_OK
    rows = list(csv.reader((out / "ablation.csv").open()))
    assert rows[0] == ["variant", "recall", "f1", "auc"]
    assert [r[0] for r in rows[1:]] == ["full", "no_temporal", "no_transformer", "no_relation_attention"]
    assert all(len(r) == 4 for r in rows)

    # the no_temporal row equals a plain run with the flag off
    run = tmp_path / "flag"
    cli.main(["train", str(data), "--config", conf, "--set", "temporal.enabled=false", "--out", str(run)])
    cli.main(["evaluate", str(run / "checkpoint.json"), str(data), "--config", conf,
              "--set", "temporal.enabled=false"])
    m = json.loads((run / "metrics.json").read_text())
    assert rows[2][1:] == [repr(m["recall"]), repr(m["f1"]), repr(m["auc"])]


def test_exit_codes(tmp_path, conf, data, capsys):
    assert cli.main(["generate", "--set", "no.such=1", "--out", str(tmp_path / "x.csv")]) == cli.EXIT_CONFIG
    assert cli.main(["generate", "--set", "synth.fraud_ratio=2", "--out", str(tmp_path / "x.csv")]) == cli.EXIT_CONFIG
    assert cli.main(["train", str(tmp_path / "missing.csv"), "--config", conf,
                     "--out", str(tmp_path / "m")]) == cli.EXIT_DATA
    bad = tmp_path / "data" / "bad.csv"
    bad.with_suffix(".schema").write_text(data.with_suffix(".schema").read_text())
    lines = data.read_text().splitlines()
    cells = lines[2].split(",")
    cells[1] = "notatime"
    lines[2] = ",".join(cells)
    bad.write_text("\n".join(lines) + "\n")
    assert cli.main(["train", str(bad), "--config", conf, "--out", str(tmp_path / "r")]) == cli.EXIT_DATA
    assert "line 3" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exits_numeric_and_keeps_last_params(tmp_path, conf, data):
    diverge = cli.main(["train", str(data), "--config", conf, "--set", "train.lr=1e300",
                        "--set", "train.epochs=5", "--out", str(tmp_path / "nan")])
    assert diverge == cli.EXIT_NUMERIC
    assert (tmp_path / "nan" / "checkpoint.json").exists()


def test_default_output_paths():
    parser = cli.build_parser()
    for command, extra in [("generate", []), ("train", ["d.csv"]), ("ablate", ["d.csv"])]:
        args = parser.parse_args([command, *extra])
        assert args.out is None
    assert cli.DEFAULT_OUT == {"generate": "data/synthetic.csv", "train": "runs/train",
                               "ablate": "runs/ablate"}


def test_verbose_logs_resolved_config(tmp_path, conf, caplog):
    caplog.set_level("INFO", logger="stagt")
    cli.main(["generate", "--config", conf, "--out", str(tmp_path / "v.csv"), "-v"])
    assert "synth.n_transactions = 300" in caplog.text
