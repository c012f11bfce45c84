"""Flat ``key = value`` run configuration with typed defaults."""
from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path


class ConfigError(ValueError):
    pass


# key -> (type, default)
DEFAULTS: dict[str, tuple[type, object]] = {
    # synthetic generator
    "synth.n_transactions": (int, 4000),
    "synth.fraud_ratio": (float, 0.1),
    "synth.relations": (str, "ip,mac"),
    "synth.n_entities": (int, 1000),
    "synth.fraud_pool": (int, 4),
    "synth.n_bursts": (int, 40),
    "synth.burst_window": (int, 7200),
    "synth.burst_daily": (int, 21600),
    "synth.horizon": (int, 60 * 86400),
    "synth.start_time": (int, 1_600_000_000),
    "synth.n_features": (int, 6),
    "synth.n_categories": (int, 4),
    "synth.noise": (float, 1.0),
    "synth.feature_shift": (float, 0.4),
    "synth.roam": (float, 0.05),
    "synth.seed": (int, 7),
    # splitting and preprocessing
    "split.train_fraction": (float, 0.7),
    "split.boundary": (int, -1),
    "data.downsample": (float, 1.0),
    "graph.entity_cap": (int, 100),
    "graph.cross_split_edges": (bool, True),
    # model
    "temporal.enabled": (bool, True),
    "temporal.time_scale": (float, 3600.0),
    "temporal.epoch_offset": (float, 0.0),
    "temporal.standard_sinusoid": (bool, False),
    "gnn.layers": (int, 2),
    "gnn.dim": (int, 32),
    "gnn.aggr": (str, "mean"),
    "gnn.relation_attention": (bool, True),
    "attn.enabled": (bool, True),
    "attn.heads": (int, 4),
    "attn.ffn_mult": (int, 4),
    "attn.max_nodes": (int, 20000),
    # optimisation
    "train.lr": (float, 1e-3),
    "train.epochs": (int, 200),
    "train.seed": (int, 0),
    "train.threshold": (float, 0.5),
}

# keys that change the graph or the parameter layout; checkpoints carry their hash
HASHED_PREFIXES = ("split.", "data.", "graph.", "temporal.", "gnn.", "attn.")
HASHED_KEYS = ("train.seed",)

PRESETS = ("pr-style", "tc-style")


def _coerce(key: str, raw):
    kind = DEFAULTS[key][0]
    if isinstance(raw, kind) and not (kind is int and isinstance(raw, bool)):
        return raw
    text = str(raw).strip()
    try:
        if kind is bool:
            if text.lower() in ("true", "1", "yes", "on"):
                return True
            if text.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(float(text)) if float(text).is_integer() else int(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind.__name__}") from None


class RunConfig(dict):
    """Resolved configuration. Unknown keys are rejected."""

    def __init__(self, values=None):
        super().__init__((k, d) for k, (_, d) in DEFAULTS.items())
        for k, v in (values or {}).items():
            self[k] = v

    def __setitem__(self, key, raw):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        super().__setitem__(key, _coerce(key, raw))

    def update(self, other=(), **kw):
        for k, v in dict(other, **kw).items():
            self[k] = v

    def replace(self, **dotted) -> "RunConfig":
        """Copy with overrides; keyword names use ``__`` for the dot."""
        new = RunConfig(self)
        for k, v in dotted.items():
            new[k.replace("__", ".")] = v
        return new

    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> "RunConfig":
        cfg = cls()
        for n, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = (s.strip() for s in line.partition("="))
            if not sep:
                raise ConfigError(f"{source}:{n}: expected 'key = value'")
            try:
                cfg[key] = val
            except ConfigError as exc:
                raise ConfigError(f"{source}:{n}: {exc}") from None
        return cfg

    @classmethod
    def load(cls, path_or_preset) -> "RunConfig":
        name = str(path_or_preset)
        if name in PRESETS:
            text = resources.files("stagt.presets").joinpath(f"{name}.conf").read_text()
            return cls.parse(text, name)
        return cls.parse(Path(name).read_text(), name)

    def apply_overrides(self, pairs) -> "RunConfig":
        for pair in pairs or ():
            key, sep, val = pair.partition("=")
            if not sep:
                raise ConfigError(f"override {pair!r} is not key=value")
            self[key.strip()] = val.strip()
        return self

    def dumps(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.items())

    def hash(self) -> str:
        picked = {k: _fmt(v) for k, v in sorted(self.items())
                  if k.startswith(HASHED_PREFIXES) or k in HASHED_KEYS}
        return hashlib.sha256(json.dumps(picked, sort_keys=True).encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)
