"""Command-line entry point: ``stagt generate|train|evaluate|ablate``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig
from .ingest import RowError, Schema, SchemaError, parse_csv, write_csv
from .model import (CheckpointError, ModelConfig, NumericError, TrainingDiverged,
                    load_checkpoint, param_layout, save_checkpoint)
from .pipeline import ABLATIONS, evaluate_model, prepare_graph, run_ablation, train_model
from .synthgen import SynthConfig, SynthConfigError, audit, generate_with_rings

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

log = logging.getLogger("stagt")


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    cfg.apply_overrides(args.set)
    if args.seed is not None:
        cfg["train.seed"] = args.seed
        cfg["synth.seed"] = args.seed
    log.info("resolved config (hash %s):\n%s", cfg.hash(), cfg.dumps())
    return cfg


def _schema_for(data: Path) -> Schema:
    path = data.with_suffix(".schema")
    if not path.exists():
        raise SchemaError(f"no schema file next to {data} (expected {path})")
    return Schema.load(path)


def _load_graph(data: Path, cfg: RunConfig):
    records = parse_csv(data, _schema_for(data))
    return prepare_graph(records, cfg).graph


def cmd_generate(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    scfg = SynthConfig.from_run(cfg)
    records, rings = generate_with_rings(scfg)
    schema = scfg.schema()
    write_csv(out, records, schema)
    out.with_suffix(".schema").write_text(schema.dumps())
    stats = audit(records, rings, scfg)
    out.with_suffix(".stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(records)} rows to {out}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graph = _load_graph(Path(args.data), cfg)
    log.info("graph: %s", graph.summary())
    try:
        params, train_log = train_model(
            graph, cfg, callback=lambda e, loss, _: log.info("epoch %d loss %.6f", e, loss))
    except TrainingDiverged as exc:
        save_checkpoint(out / "checkpoint.json", exc.params, cfg.hash(), cfg)
        _write_logs(out, exc.log)
        raise
    save_checkpoint(out / "checkpoint.json", params, cfg.hash(), cfg)
    _write_logs(out, train_log)
    (out / "config.txt").write_text(cfg.dumps())
    print(f"checkpoint written to {out / 'checkpoint.json'}")
    return EXIT_OK


def _write_logs(out: Path, train_log) -> None:
    train_log.write_csv(out / "train_log.csv")
    train_log.write_csv(out / "loss_log.csv", wall_time=False)


def cmd_evaluate(args, cfg: RunConfig, score_fn=None) -> int:
    graph = _load_graph(Path(args.data), cfg)
    layout = param_layout(ModelConfig.from_run(cfg), graph.feature_dim, len(graph.relation_names))
    params, _ = load_checkpoint(args.checkpoint, expected_layout=layout, expected_hash=cfg.hash())
    report = evaluate_model(graph, params, cfg, score_fn=score_fn)
    text = report.to_json()
    sys.stdout.write(text)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / "metrics.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    return EXIT_OK


def cmd_ablate(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graph = _load_graph(Path(args.data), cfg)
    results = run_ablation(graph, cfg, log=lambda name, r: log.info("%s: %s", name, r))
    write_ablation_table(out / "ablation.csv", results)
    (out / "config.txt").write_text(cfg.dumps())
    for name, r in results.items():
        print(f"{name:24s} recall={r.recall:.4f} f1={r.f1:.4f} auc={r.auc:.4f}")
    return EXIT_OK


def write_ablation_table(path, results) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant", "recall", "f1", "auc"])
        for name in ABLATIONS:
            if name in results:
                r = results[name]
                writer.writerow([name, repr(r.recall), repr(r.f1), repr(r.auc)])


COMMANDS = {"generate": cmd_generate, "train": cmd_train,
            "evaluate": cmd_evaluate, "ablate": cmd_ablate}
# evaluate writes next to the checkpoint unless told otherwise
DEFAULT_OUT = {"generate": "data/synthetic.csv", "train": "runs/train", "ablate": "runs/ablate"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file or preset name (pr-style, tc-style)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--seed", type=int, help="shorthand for train.seed and synth.seed")
    common.add_argument("--out", help="output file (generate, evaluate) or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="stagt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    g = sub.add_parser("generate", parents=[common], help="write a synthetic transaction CSV")
    t = sub.add_parser("train", parents=[common], help="train on a CSV (schema file alongside)")
    t.add_argument("data")
    e = sub.add_parser("evaluate", parents=[common], help="score the test split with a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("data")
    a = sub.add_parser("ablate", parents=[common], help="train and compare the ablated variants")
    a.add_argument("data")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.out is None:
        args.out = DEFAULT_OUT.get(args.command)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, SynthConfigError, CheckpointError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, RowError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, TrainingDiverged) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
