"""End-to-end model: parameters, forward pass, loss, gradients and training."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .global_attn import HeadParams, TransformerParams, multi_head
from .hetero_gnn import fuse_layers, initial_embed, intra_relation, relation_attention, relation_operators
from .numerics import glorot_init, make_rng
from .temporal import TemporalEncoder, inject

PROB_CLAMP = 1e-7
CHECKPOINT_FORMAT = "stagt-checkpoint"
CHECKPOINT_VERSION = 1


class NumericError(FloatingPointError):
    def __init__(self, stage: str, message: str = "non-finite values"):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, params, log):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch
        self.params = params
        self.log = log


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 32
    layers: int = 2
    heads: int = 4
    ffn_mult: int = 4
    aggr: str = "mean"
    temporal: bool = True
    time_scale: float = 3600.0
    epoch_offset: float = 0.0
    standard_sinusoid: bool = False
    relation_attention: bool = True
    transformer: bool = True
    max_nodes: int = 20000
    eps: float = 1e-5

    @classmethod
    def from_run(cls, cfg) -> "ModelConfig":
        return cls(dim=cfg["gnn.dim"], layers=cfg["gnn.layers"], heads=cfg["attn.heads"],
                   ffn_mult=cfg["attn.ffn_mult"], aggr=cfg["gnn.aggr"],
                   temporal=cfg["temporal.enabled"], time_scale=cfg["temporal.time_scale"],
                   epoch_offset=cfg["temporal.epoch_offset"],
                   standard_sinusoid=cfg["temporal.standard_sinusoid"],
                   relation_attention=cfg["gnn.relation_attention"],
                   transformer=cfg["attn.enabled"], max_nodes=cfg["attn.max_nodes"])

    @property
    def fused_dim(self) -> int:
        return self.layers * self.dim

    @property
    def head_dim(self) -> int:
        if self.fused_dim % self.heads:
            raise ValueError(f"attn.heads={self.heads} does not divide fused width {self.fused_dim}")
        return self.fused_dim // self.heads


def param_layout(cfg: ModelConfig, feature_dim: int, n_relations: int) -> list[tuple[str, tuple[int, int]]]:
    d, big_d = cfg.dim, cfg.fused_dim
    dk, hidden, m = cfg.head_dim, cfg.ffn_mult * cfg.fused_dim, max(1, big_d // 2)
    layout = [("embed.W1", (feature_dim, d)),
              ("temporal.linear", (d, d)), ("temporal.bias", (1, d))]
    for layer in range(cfg.layers):
        for r in range(n_relations):
            layout.append((f"gnn{layer}.rel{r}.W", (2 * d, d)))
        layout += [(f"gnn{layer}.q", (d, 1)), (f"gnn{layer}.W2", (d, d)), (f"gnn{layer}.b", (1, d))]
    for s in range(cfg.heads):
        layout += [(f"attn.head{s}.{w}", (big_d, dk)) for w in ("Wq", "Wk", "Wv")]
    layout += [("attn.Wo", (big_d, big_d)),
               ("attn.ffn.W1", (big_d, hidden)), ("attn.ffn.b1", (1, hidden)),
               ("attn.ffn.W2", (hidden, big_d)), ("attn.ffn.b2", (1, big_d)),
               ("attn.ln1.gain", (1, big_d)), ("attn.ln1.bias", (1, big_d)),
               ("attn.ln2.gain", (1, big_d)), ("attn.ln2.bias", (1, big_d)),
               ("head.W1", (big_d, m)), ("head.b1", (1, m)),
               ("head.W2", (m, 1)), ("head.b2", (1, 1))]
    return layout


class ModelParams:
    """Every learnable array, stored as views into one flat float64 buffer."""

    def __init__(self, layout, flat=None):
        self.layout = [(name, tuple(shape)) for name, shape in layout]
        sizes = [int(np.prod(shape)) for _, shape in self.layout]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        if flat is None:
            flat = np.zeros(self.offsets[-1])
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.offsets[-1],):
            raise ValueError(f"flat vector has {flat.size} entries, layout needs {self.offsets[-1]}")
        self.flat = flat
        self._views = {}
        for (name, shape), lo, hi in zip(self.layout, self.offsets[:-1], self.offsets[1:]):
            self._views[name] = self.flat[lo:hi].reshape(shape)

    @classmethod
    def init(cls, cfg: ModelConfig, feature_dim: int, n_relations: int, seed: int) -> "ModelParams":
        params = cls(param_layout(cfg, feature_dim, n_relations))
        for name, (rows, cols) in params.layout:
            if name.endswith(".gain"):
                params[name][...] = 1.0
            elif name.rsplit(".", 1)[-1].startswith("b"):
                continue
            else:
                params[name][...] = glorot_init(make_rng(seed, f"init/{name}"), rows, cols)
        return params

    def __getitem__(self, name) -> np.ndarray:
        return self._views[name]

    def __iter__(self):
        return iter(self._views)

    def __contains__(self, name) -> bool:
        return name in self._views

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.layout]

    def copy(self) -> "ModelParams":
        return ModelParams(self.layout, self.flat.copy())

    def unflatten(self, flat) -> "ModelParams":
        return ModelParams(self.layout, np.array(flat, dtype=float))


@dataclass
class ForwardTrace:
    h0: np.ndarray
    h0t: np.ndarray
    per_relation: list[list[np.ndarray]]
    alphas: list[np.ndarray]
    layers: list[np.ndarray]
    fused: np.ndarray
    z: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    attention: list[np.ndarray] = field(default_factory=list)


def _checked(stage, x):
    if not np.all(np.isfinite(ad.value(x))):
        raise NumericError(stage)
    return x


def _assemble(graph, p, cfg: ModelConfig, ops, maps=None):
    """Build the forward computation; ``p`` maps names to arrays or Tensors."""
    if graph.feature_dim != np.shape(ad.value(p["embed.W1"]))[0]:
        raise ValueError(f"embedding: graph has {graph.feature_dim} features, "
                         f"W1 expects {np.shape(ad.value(p['embed.W1']))[0]}")
    n_rel = len(graph.relation_names)
    if f"gnn0.rel{n_rel - 1}.W" not in p or f"gnn0.rel{n_rel}.W" in p:
        raise ValueError(f"gnn: parameters do not match {n_rel} relations")
    out = {"per_relation": [], "alphas": [], "layers": []}
    h0 = _checked("embedding", initial_embed(graph.features, p["embed.W1"]))
    out["h0"] = h0
    if cfg.temporal:
        enc = TemporalEncoder(p["temporal.linear"], p["temporal.bias"], cfg.time_scale,
                              cfg.epoch_offset, cfg.standard_sinusoid)
        h = _checked("temporal", inject(h0, enc, graph.timestamps))
    else:
        h = h0
    out["h0t"] = h
    for layer in range(cfg.layers):
        per_rel = [_checked(f"gnn layer {layer + 1}",
                            intra_relation(h, op, p[f"gnn{layer}.rel{r}.W"]))
                   for r, op in enumerate(ops)]
        h, alpha = relation_attention(per_rel, p[f"gnn{layer}.q"], p[f"gnn{layer}.W2"],
                                      p[f"gnn{layer}.b"], uniform=not cfg.relation_attention)
        _checked(f"relation attention {layer + 1}", h)
        out["per_relation"].append(per_rel)
        out["alphas"].append(alpha)
        out["layers"].append(h)
    fused = fuse_layers(out["layers"])
    out["fused"] = fused
    if cfg.transformer:
        tp = TransformerParams(
            heads=[HeadParams(p[f"attn.head{s}.Wq"], p[f"attn.head{s}.Wk"], p[f"attn.head{s}.Wv"])
                   for s in range(cfg.heads)],
            wo=p["attn.Wo"], ffn_w1=p["attn.ffn.W1"], ffn_b1=p["attn.ffn.b1"],
            ffn_w2=p["attn.ffn.W2"], ffn_b2=p["attn.ffn.b2"],
            ln1_gain=p["attn.ln1.gain"], ln1_bias=p["attn.ln1.bias"],
            ln2_gain=p["attn.ln2.gain"], ln2_bias=p["attn.ln2.bias"],
            eps=cfg.eps, max_nodes=cfg.max_nodes)
        z = _checked("transformer", multi_head(fused, tp, maps))
    else:
        z = fused
    out["z"] = z
    hidden = ad.tanh(ad.add(ad.matmul(z, p["head.W1"]), p["head.b1"]))
    logits = _checked("prediction", ad.add(ad.matmul(hidden, p["head.W2"]), p["head.b2"]))
    out["logits"] = logits
    out["probs"] = ad.clip(ad.sigmoid(logits), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return out


def forward(graph, params: ModelParams, cfg: ModelConfig, keep_attention: bool = False,
            ops=None) -> ForwardTrace:
    """Run the model on ``graph`` and return every intermediate in input node order.

    Computation happens in the graph's canonical node order, so relabelling
    the input nodes permutes the outputs exactly.
    """
    order = graph.canonical_order
    canon = graph.canonical
    if ops is None:
        ops = relation_operators(canon, cfg.aggr)
    maps = [] if keep_attention else None
    out = _assemble(canon, params, cfg, ops, maps)
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))

    def back(x):
        return np.asarray(x)[inv]

    return ForwardTrace(
        h0=back(out["h0"]), h0t=back(out["h0t"]),
        per_relation=[[back(h) for h in layer] for layer in out["per_relation"]],
        alphas=[np.asarray(a).reshape(-1) for a in out["alphas"]],
        layers=[back(h) for h in out["layers"]],
        fused=back(out["fused"]), z=back(out["z"]),
        logits=back(out["logits"]).reshape(-1), probs=back(out["probs"]).reshape(-1),
        attention=[a[np.ix_(inv, inv)] for a in (maps or [])],
    )


def _mask_indices(mask, n):
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if mask.shape != (n,):
            raise ValueError("boolean mask length must equal node count")
        return np.flatnonzero(mask)
    return mask.astype(np.int64).reshape(-1)


def loss(probs, labels, mask):
    """Summed binary cross-entropy over the masked nodes.

    ``mask`` is a boolean array or an index array (repeated indices count
    repeatedly). Probabilities are clamped to [1e-7, 1 - 1e-7].
    """
    if not isinstance(probs, ad.Tensor):
        probs = np.asarray(probs, dtype=float).reshape(-1, 1)
    n = np.shape(ad.value(probs))[0]
    idx = _mask_indices(mask, n)
    if idx.size == 0:
        raise ValueError("loss is undefined on an empty mask")
    y = np.asarray(labels)[idx].astype(float).reshape(-1, 1)
    if np.any((y != 0) & (y != 1)):
        raise ValueError("masked labels must be 0 or 1")
    p = ad.clip(ad.take_rows(probs, idx), PROB_CLAMP, 1.0 - PROB_CLAMP)
    ll = ad.add(ad.mul(y, ad.log(p)), ad.mul(1.0 - y, ad.log(ad.sub(1.0, p))))
    out = ad.mul(-1.0, ad.total(ll))
    return out if isinstance(out, ad.Tensor) else float(out)


def loss_and_gradient(graph, params: ModelParams, cfg: ModelConfig, mask, ops=None):
    """Loss and its exact gradient w.r.t. ``params.flat``.

    ``graph`` and ``mask`` must already be in the node order the caller wants
    to compute in; :func:`compute_gradients` handles canonicalisation.
    """
    if ops is None:
        ops = relation_operators(graph, cfg.aggr)
    leaves = {name: ad.Tensor(params[name], name=name) for name in params}
    out = _assemble(graph, leaves, cfg, ops)
    objective = loss(out["probs"], graph.labels, mask)
    if not np.isfinite(objective.value):
        raise NumericError("loss")
    objective.backward()
    grad = np.zeros_like(params.flat)
    for (name, _), lo, hi in zip(params.layout, params.offsets[:-1], params.offsets[1:]):
        g = leaves[name].grad
        if g is not None:
            grad[lo:hi] = g.reshape(-1)
    if not np.all(np.isfinite(grad)):
        raise NumericError("backward")
    return float(objective.value), grad


def compute_gradients(graph, params: ModelParams, cfg: ModelConfig, mask=None) -> np.ndarray:
    """Flat gradient of the training loss; ``mask`` defaults to ``graph.train_mask``."""
    if mask is None:
        mask = graph.train_mask
    idx = _mask_indices(mask, graph.node_count)
    order = graph.canonical_order
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    return loss_and_gradient(graph.canonical, params, cfg, inv[idx])[1]


class Adam:
    def __init__(self, size, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, flat, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        flat -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainLog:
    epochs: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    wall: list[float] = field(default_factory=list)

    def write_csv(self, path, wall_time: bool = True) -> None:
        """Write the log; ``wall_time=False`` gives a run-to-run reproducible file."""
        if wall_time:
            lines = ["epoch,loss,wall_time"]
            lines += [f"{e},{v!r},{w:.3f}" for e, v, w in zip(self.epochs, self.losses, self.wall)]
        else:
            lines = ["epoch,loss"] + [f"{e},{v!r}" for e, v in zip(self.epochs, self.losses)]
        Path(path).write_text("\n".join(lines) + "\n")


def train_loop(graph, cfg: ModelConfig, epochs: int, lr: float = 1e-3, seed: int = 0,
               params: ModelParams | None = None, callback=None):
    """Full-batch Adam on the training mask. Returns ``(params, log)``.

    Each log row is the loss evaluated before that epoch's update.
    """
    if not np.any(graph.train_mask):
        raise ValueError("training mask is empty")
    canon = graph.canonical
    if params is None:
        params = ModelParams.init(cfg, graph.feature_dim, len(graph.relation_names), seed)
    else:
        params = params.copy()
    ops = relation_operators(canon, cfg.aggr)
    opt = Adam(params.flat.size, lr=lr)
    log = TrainLog()
    start = time.perf_counter()
    for epoch in range(1, epochs + 1):
        last_good = params.copy()
        try:
            value_, grad = loss_and_gradient(canon, params, cfg, canon.train_mask, ops)
        except NumericError:
            raise TrainingDiverged(epoch, last_good, log) from None
        opt.step(params.flat, grad)
        log.epochs.append(epoch)
        log.losses.append(value_)
        log.wall.append(time.perf_counter() - start)
        if not np.all(np.isfinite(params.flat)):
            raise TrainingDiverged(epoch, last_good, log)
        if callback is not None:
            callback(epoch, value_, params)
    return params, log


# -- checkpoints ----------------------------------------------------------

class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: ModelParams, config_hash: str, config: dict | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config_hash": config_hash,
        "config": {k: config[k] for k in sorted(config)} if config else {},
        "params": [{"name": name, "shape": list(shape), "values": params[name].reshape(-1).tolist()}
                   for name, shape in params.layout],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path, expected_layout=None, expected_hash: str | None = None):
    """Return ``(params, doc)``; refuses a layout or config-hash mismatch."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: not a version {CHECKPOINT_VERSION} checkpoint")
    if expected_hash is not None and doc["config_hash"] != expected_hash:
        raise CheckpointError(f"{path}: config hash {doc['config_hash']} does not match {expected_hash}")
    layout = [(e["name"], tuple(e["shape"])) for e in doc["params"]]
    if expected_layout is not None and layout != [(n, tuple(s)) for n, s in expected_layout]:
        raise CheckpointError(f"{path}: parameter shapes do not match the model")
    flat = np.concatenate([np.asarray(e["values"], dtype=float) for e in doc["params"]]) \
        if layout else np.zeros(0)
    return ModelParams(layout, flat), doc
