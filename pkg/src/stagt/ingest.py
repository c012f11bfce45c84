"""Transaction CSV parsing, preprocessing and multi-relation graph building."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .numerics import make_rng

UNLABELED = -1
ROLES = ("id", "timestamp", "label", "continuous", "categorical", "relation")


class SchemaError(ValueError):
    pass


class RowError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class TransactionRecord:
    txn_id: str
    timestamp: int
    continuous: dict[str, float] = field(default_factory=dict)
    categorical: dict[str, str] = field(default_factory=dict)
    entities: dict[str, str] = field(default_factory=dict)
    label: int = UNLABELED

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError(f"{self.txn_id}: negative timestamp")
        if self.label not in (0, 1, UNLABELED):
            raise ValueError(f"{self.txn_id}: label must be 0, 1 or unlabeled")


@dataclass(frozen=True)
class Schema:
    """Column roles for a transaction CSV."""

    id: str
    timestamp: str
    label: str
    continuous: tuple[str, ...] = ()
    categorical: tuple[str, ...] = ()
    relations: tuple[str, ...] = ()

    @classmethod
    def parse(cls, text: str) -> "Schema":
        """Read ``role:column`` lines (``#`` comments and blank lines ignored)."""
        single: dict[str, str] = {}
        multi: dict[str, list[str]] = {"continuous": [], "categorical": [], "relation": []}
        for n, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            role, sep, column = (s.strip() for s in line.partition(":"))
            if not sep or not column or role not in ROLES:
                raise SchemaError(f"schema line {n}: expected '<role>:<column>', got {raw!r}")
            if role in multi:
                multi[role].append(column)
            elif role in single:
                raise SchemaError(f"schema line {n}: role {role!r} given twice")
            else:
                single[role] = column
        missing = [r for r in ("id", "timestamp", "label") if r not in single]
        if missing:
            raise SchemaError(f"schema missing roles: {', '.join(missing)}")
        return cls(single["id"], single["timestamp"], single["label"],
                   tuple(multi["continuous"]), tuple(multi["categorical"]),
                   tuple(multi["relation"]))

    @classmethod
    def load(cls, path) -> "Schema":
        return cls.parse(Path(path).read_text())

    def dumps(self) -> str:
        lines = [f"id:{self.id}", f"timestamp:{self.timestamp}", f"label:{self.label}"]
        lines += [f"continuous:{c}" for c in self.continuous]
        lines += [f"categorical:{c}" for c in self.categorical]
        lines += [f"relation:{c}" for c in self.relations]
        return "\n".join(lines) + "\n"

    @property
    def columns(self) -> list[str]:
        return [self.id, self.timestamp, *self.continuous, *self.categorical,
                *self.relations, self.label]


# -- CSV ------------------------------------------------------------------

def parse_csv(path, schema: Schema) -> list[TransactionRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in schema.columns if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        return [_parse_row(row, schema, reader.line_num) for row in reader]


def _parse_row(row: dict, schema: Schema, line: int) -> TransactionRecord:
    try:
        ts = int(row[schema.timestamp])
    except ValueError:
        raise RowError(line, f"bad timestamp {row[schema.timestamp]!r}") from None
    cont = {}
    for col in schema.continuous:
        try:
            cont[col] = float(row[col])
        except ValueError:
            raise RowError(line, f"bad value {row[col]!r} in column {col!r}") from None
        if not np.isfinite(cont[col]):
            raise RowError(line, f"non-finite value in column {col!r}")
    raw_label = row[schema.label].strip()
    if raw_label not in ("", "0", "1"):
        raise RowError(line, f"bad label {raw_label!r}")
    try:
        return TransactionRecord(
            txn_id=row[schema.id],
            timestamp=ts,
            continuous=cont,
            categorical={c: row[c] for c in schema.categorical},
            entities={r: row[r] for r in schema.relations},
            label=int(raw_label) if raw_label else UNLABELED,
        )
    except ValueError as exc:
        raise RowError(line, str(exc)) from None


def write_csv(path, records, schema: Schema) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(schema.columns)
        for r in records:
            writer.writerow([
                r.txn_id, r.timestamp,
                *(repr(float(r.continuous[c])) for c in schema.continuous),
                *(r.categorical[c] for c in schema.categorical),
                *(r.entities[c] for c in schema.relations),
                "" if r.label == UNLABELED else r.label,
            ])


# -- preprocessing --------------------------------------------------------

def downsample_legitimate(records, ratio: float, rng: np.random.Generator):
    """Keep every non-legitimate row and each legitimate row with probability ``ratio``."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"downsample ratio must lie in (0, 1], got {ratio}")
    draws = rng.random(len(records))
    return [r for r, u in zip(records, draws) if r.label != 0 or u < ratio]


@dataclass(frozen=True)
class FeatureCodec:
    continuous: tuple[tuple[str, float, float], ...]
    categorical: tuple[tuple[str, tuple[str, ...]], ...]

    @property
    def width(self) -> int:
        return len(self.continuous) + sum(len(v) for _, v in self.categorical)

    def decode_category(self, name: str, index: int) -> str:
        return dict(self.categorical)[name][index]


def fit_codec(records, continuous=None, categorical=None) -> FeatureCodec:
    """Fit min/max and vocabularies. Pass training rows only."""
    records = list(records)
    if continuous is None:
        continuous = sorted(records[0].continuous) if records else []
    if categorical is None:
        categorical = sorted(records[0].categorical) if records else []
    cont = []
    for name in continuous:
        vals = np.array([r.continuous[name] for r in records], dtype=float)
        lo, hi = (float(vals.min()), float(vals.max())) if len(vals) else (0.0, 0.0)
        cont.append((name, lo, hi))
    cat = [(name, tuple(sorted({r.categorical[name] for r in records}))) for name in categorical]
    return FeatureCodec(tuple(cont), tuple(cat))


def encode(codec: FeatureCodec, records) -> tuple[np.ndarray, np.ndarray]:
    """Encode records into a feature matrix with every column in [0, 1]."""
    records = list(records)
    x = np.zeros((len(records), codec.width))
    col = 0
    for name, lo, hi in codec.continuous:
        vals = np.array([r.continuous[name] for r in records], dtype=float)
        if hi > lo:
            x[:, col] = np.clip((vals - lo) / (hi - lo), 0.0, 1.0)
        col += 1
    for name, vocab in codec.categorical:
        index = {v: i for i, v in enumerate(vocab)}
        for row, r in enumerate(records):
            j = index.get(r.categorical[name])
            if j is not None:
                x[row, col + j] = 1.0
        col += len(vocab)
    t = np.array([r.timestamp for r in records], dtype=float)
    return x, t


# -- graph ----------------------------------------------------------------

class MultiRelationGraph:
    """Node set with one symmetric, self-loop-free edge set per relation.

    ``adjacency[r][i]`` is the sorted neighbour array of node ``i`` under
    relation ``r``. Arrays are made read-only on construction.
    """

    def __init__(self, relation_names, adjacency, features, timestamps, labels,
                 train_mask=None, test_mask=None):
        self.relation_names = tuple(relation_names)
        self.features = _frozen(np.asarray(features, dtype=float))
        n = self.features.shape[0]
        self.timestamps = _frozen(np.asarray(timestamps, dtype=float).reshape(n))
        self.labels = _frozen(np.asarray(labels, dtype=np.int64).reshape(n))
        self.train_mask = _frozen(np.zeros(n, bool) if train_mask is None else np.asarray(train_mask, bool))
        self.test_mask = _frozen(np.zeros(n, bool) if test_mask is None else np.asarray(test_mask, bool))
        if len(adjacency) != len(self.relation_names):
            raise ValueError("one adjacency list per relation required")
        self.adjacency = tuple(
            tuple(_frozen(np.unique(np.asarray(nb, dtype=np.int64))) for nb in rel)
            for rel in adjacency
        )
        self._validate()

    def _validate(self):
        n = self.node_count
        if np.any(self.train_mask & self.test_mask):
            raise ValueError("train and test masks overlap")
        masked = self.train_mask | self.test_mask
        if np.any(~np.isin(self.labels[masked], (0, 1))):
            raise ValueError("masked nodes must carry labels 0 or 1")
        for name, rel in zip(self.relation_names, self.adjacency):
            if len(rel) != n:
                raise ValueError(f"relation {name}: adjacency has {len(rel)} rows, expected {n}")
            for i, nb in enumerate(rel):
                if nb.size and (nb[0] < 0 or nb[-1] >= n):
                    raise ValueError(f"relation {name}: neighbour id out of range at node {i}")
                if np.any(nb == i):
                    raise ValueError(f"relation {name}: self edge at node {i}")
        for m in self.sparse_adjacency():
            if (m != m.T).nnz:
                raise ValueError("adjacency must be symmetric")

    @property
    def node_count(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def edge_count(self, r: int) -> int:
        return sum(len(nb) for nb in self.adjacency[r]) // 2

    def sparse_adjacency(self) -> list[sp.csr_matrix]:
        return [self._csr(r) for r in range(len(self.relation_names))]

    def _csr(self, r):
        rel = self.adjacency[r]
        n = self.node_count
        indptr = np.concatenate([[0], np.cumsum([len(nb) for nb in rel])])
        indices = np.concatenate(rel) if n else np.zeros(0, np.int64)
        return sp.csr_matrix((np.ones(len(indices)), indices, indptr), shape=(n, n))

    def permuted(self, order) -> "MultiRelationGraph":
        """Graph whose node ``k`` is this graph's node ``order[k]``."""
        order = np.asarray(order)
        inverse = np.empty_like(order)
        inverse[order] = np.arange(len(order))
        adjacency = [[inverse[rel[old]] for old in order] for rel in self.adjacency]
        return MultiRelationGraph(self.relation_names, adjacency, self.features[order],
                                  self.timestamps[order], self.labels[order],
                                  self.train_mask[order], self.test_mask[order])

    @cached_property
    def canonical_order(self) -> np.ndarray:
        """Node order derived from node content and topology alone.

        Colours start from (timestamp, features) and are refined by the
        multiset of neighbour colours per relation (Weisfeiler-Lehman style).
        Running the model in this order makes every floating-point reduction
        independent of how the input happened to number the nodes. Only nodes
        that remain indistinguishable after refinement fall back to input order.
        """
        n = self.node_count
        if n == 0:
            return np.zeros(0, np.int64)
        content = np.column_stack([self.timestamps, self.features])
        _, colour = np.unique(content, axis=0, return_inverse=True)
        colour = colour.reshape(n)
        while len(np.unique(colour)) < n:
            signatures = [
                (int(colour[i]),) + tuple(tuple(sorted(colour[rel[i]].tolist())) for rel in self.adjacency)
                for i in range(n)
            ]
            ranks = {s: k for k, s in enumerate(sorted(set(signatures)))}
            refined = np.array([ranks[s] for s in signatures])
            if len(ranks) == len(np.unique(colour)):
                colour = refined
                break
            colour = refined
        return np.lexsort((np.arange(n), colour))

    @cached_property
    def canonical(self) -> "MultiRelationGraph":
        return self.permuted(self.canonical_order)

    def summary(self) -> dict:
        return {
            "node_count": self.node_count,
            "relation_names": list(self.relation_names),
            "edge_counts": {name: self.edge_count(r) for r, name in enumerate(self.relation_names)},
            "feature_dim": self.feature_dim,
        }

    def dump_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2) + "\n")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


def build_graph(records, relation_fields, features=None, timestamps=None,
                train_mask=None, test_mask=None, entity_cap: int = 100,
                seed: int = 0, partition=None) -> MultiRelationGraph:
    """Connect every pair of records sharing a non-empty entity under each relation.

    An entity used by more than ``entity_cap`` records keeps a uniform sample
    of ``entity_cap * (entity_cap - 1) / 2`` of its clique edges. The sample
    depends only on ``seed``, the entity and the member transaction ids, so
    reordering the input records relabels the graph consistently.

    ``partition`` optionally assigns each record a group label; edges are then
    only formed inside a group (e.g. to keep train and test rows apart).
    """
    records = list(records)
    if not relation_fields:
        raise ValueError("at least one relation field is required")
    if entity_cap < 2:
        raise ValueError("entity_cap must be at least 2")
    n = len(records)
    if features is None:
        features = np.zeros((n, 0))
    if timestamps is None:
        timestamps = [r.timestamp for r in records]
    adjacency = []
    for rel in relation_fields:
        groups: dict[tuple, list[int]] = {}
        for i, r in enumerate(records):
            ent = r.entities.get(rel, "")
            if ent:
                key = (ent,) if partition is None else (ent, partition[i])
                groups.setdefault(key, []).append(i)
        src, dst = [], []
        for ent, members in groups.items():
            k = len(members)
            if k < 2:
                continue
            members = np.array(sorted(members, key=lambda i: records[i].txn_id))
            a, b = np.triu_indices(k, 1)
            if k > entity_cap:
                rng = make_rng(seed, f"clique/{rel}/{'/'.join(map(str, ent))}")
                keep = np.sort(rng.choice(len(a), size=entity_cap * (entity_cap - 1) // 2, replace=False))
                a, b = a[keep], b[keep]
            src += [members[a], members[b]]
            dst += [members[b], members[a]]
        adjacency.append(_neighbour_lists(n, src, dst))
    labels = [r.label for r in records]
    return MultiRelationGraph(relation_fields, adjacency, features, timestamps, labels,
                              train_mask, test_mask)


def _neighbour_lists(n, src, dst):
    if not src:
        return [np.zeros(0, np.int64) for _ in range(n)]
    src, dst = np.concatenate(src), np.concatenate(dst)
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    cuts = np.searchsorted(src, np.arange(n + 1))
    return [dst[cuts[i]:cuts[i + 1]] for i in range(n)]
