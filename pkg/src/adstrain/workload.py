"""Synthetic training batches: table/model specs, Zipf sampling, deduplication."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .errors import InvalidArgument, NotFound

ELEMENT_WISE = "element_wise"
ROW_WISE = "row_wise"


@dataclass(frozen=True)
class OptimizerKind:
    kind: str = ELEMENT_WISE
    params_width_multiplier: int = 1

    def __post_init__(self):
        if self.kind not in (ELEMENT_WISE, ROW_WISE):
            raise InvalidArgument(f"unknown optimizer kind {self.kind!r}")
        if self.params_width_multiplier < 1:
            raise InvalidArgument("params_width_multiplier must be >= 1")

    @property
    def allows_column_split(self) -> bool:
        return self.kind == ELEMENT_WISE


@dataclass(frozen=True)
class ValencyDist:
    """Per-example lookup count distribution.

    ``constant``: always ``value``. ``poisson``: Poisson with the table's mean
    valency, clipped to ``max``. ``empirical``: draws from ``values`` with
    optional ``weights``.
    """

    kind: str = "constant"
    value: int = 1
    max: int = 1000
    values: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "poisson", "empirical"):
            raise InvalidArgument(f"unknown valency distribution {self.kind!r}")
        if self.kind == "empirical" and not self.values:
            raise InvalidArgument("empirical valency distribution needs values")

    def sample(self, mean, size, rng):
        if self.kind == "constant":
            return np.full(size, self.value, dtype=np.int64)
        if self.kind == "poisson":
            return np.minimum(rng.poisson(mean, size), self.max).astype(np.int64)
        vals = np.asarray(self.values, dtype=np.int64)
        p = None
        if self.weights:
            w = np.asarray(self.weights, dtype=np.float64)
            p = w / w.sum()
        return rng.choice(vals, size=size, p=p).astype(np.int64)

    @property
    def upper(self):
        if self.kind == "constant":
            return self.value
        if self.kind == "poisson":
            return self.max
        return int(max(self.values))

    def to_dict(self):
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "poisson":
            return {"kind": "poisson", "max": self.max}
        d = {"kind": "empirical", "values": list(self.values)}
        if self.weights:
            d["weights"] = list(self.weights)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        return cls(
            kind=d.get("kind", "constant"),
            value=int(d.get("value", 1)),
            max=int(d.get("max", 1000)),
            values=tuple(d.get("values", ())),
            weights=tuple(d.get("weights", ())),
        )


@dataclass(frozen=True)
class EmbeddingTableSpec:
    name: str
    vocab_size: int
    dim: int
    mean_valency: float = 1.0
    valency_dist: ValencyDist = field(default_factory=ValencyDist)
    zipf_s: float = 1.0
    optimizer: OptimizerKind = field(default_factory=OptimizerKind)
    bytes_per_element: int = 4

    def __post_init__(self):
        if self.vocab_size < 1 or self.dim < 1:
            raise InvalidArgument(f"table {self.name!r}: vocab_size and dim must be >= 1")
        if self.mean_valency < 0 or self.zipf_s < 0:
            raise InvalidArgument(f"table {self.name!r}: mean_valency and zipf_s must be >= 0")

    @property
    def row_bytes(self):
        return self.dim * self.bytes_per_element

    def to_dict(self):
        return {
            "name": self.name,
            "vocab_size": self.vocab_size,
            "dim": self.dim,
            "mean_valency": self.mean_valency,
            "valency_dist": self.valency_dist.to_dict(),
            "zipf_s": self.zipf_s,
            "optimizer": {
                "kind": self.optimizer.kind,
                "params_width_multiplier": self.optimizer.params_width_multiplier,
            },
            "bytes_per_element": self.bytes_per_element,
        }

    @classmethod
    def from_dict(cls, d):
        opt = d.get("optimizer", {})
        if isinstance(opt, str):
            opt = {"kind": opt}
        return cls(
            name=d["name"],
            vocab_size=int(d["vocab_size"]),
            dim=int(d["dim"]),
            mean_valency=float(d.get("mean_valency", 1.0)),
            valency_dist=ValencyDist.from_dict(d.get("valency_dist", {})),
            zipf_s=float(d.get("zipf_s", 1.0)),
            optimizer=OptimizerKind(opt.get("kind", ELEMENT_WISE), int(opt.get("params_width_multiplier", 1))),
            bytes_per_element=int(d.get("bytes_per_element", 4)),
        )


@dataclass(frozen=True)
class ModelSpec:
    name: str
    tables: tuple
    dense_step_time_us: float = 0.0
    features: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "tables", tuple(self.tables))
        names = [t.name for t in self.tables]
        if len(set(names)) != len(names):
            raise InvalidArgument(f"model {self.name!r}: duplicate table names")
        feats = dict(self.features) or {n: n for n in names}
        for f, t in feats.items():
            if t not in names:
                raise InvalidArgument(f"feature {f!r} maps to unknown table {t!r}")
        object.__setattr__(self, "features", feats)

    def table(self, name) -> EmbeddingTableSpec:
        for t in self.tables:
            if t.name == name:
                return t
        raise NotFound(f"unknown table {name!r}")

    @property
    def specs(self):
        return {t.name: t for t in self.tables}

    def to_dict(self):
        return {
            "name": self.name,
            "tables": [t.to_dict() for t in self.tables],
            "dense_step_time_us": self.dense_step_time_us,
            "features": dict(self.features),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            name=d.get("name", "model"),
            tables=[EmbeddingTableSpec.from_dict(t) for t in d["tables"]],
            dense_step_time_us=float(d.get("dense_step_time_us", 0.0)),
            features=d.get("features", {}),
        )


@dataclass(frozen=True)
class RaggedRows:
    """Per-example row lists stored CSR-style: example i owns values[offsets[i]:offsets[i+1]]."""

    values: np.ndarray
    offsets: np.ndarray

    def example(self, i):
        return self.values[self.offsets[i]:self.offsets[i + 1]]

    @property
    def valencies(self):
        return np.diff(self.offsets)

    def __len__(self):
        return len(self.offsets) - 1


@dataclass(frozen=True)
class TrainingBatch:
    batch_size: int
    lookups: Mapping[str, RaggedRows]
    event_ids: np.ndarray


@dataclass(frozen=True)
class DedupResult:
    unique_rows: np.ndarray
    inverse: np.ndarray

    def reconstruct(self):
        return self.unique_rows[self.inverse]


@lru_cache(maxsize=256)
def zipf_cdf(s: float, n: int) -> np.ndarray:
    """Normalized cumulative weights of P(r) proportional to 1/(r+1)^s for r in [0, n)."""
    if n < 1:
        raise InvalidArgument("zipf support size must be >= 1")
    if s < 0:
        raise InvalidArgument("zipf exponent must be >= 0")
    w = 1.0 / np.power(np.arange(1, n + 1, dtype=np.float64), s)
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    cdf.flags.writeable = False
    return cdf


def zipf_probabilities(s: float, n: int) -> np.ndarray:
    cdf = zipf_cdf(s, n)
    return np.diff(cdf, prepend=0.0)


def sample_zipf_many(s: float, n: int, size: int, rng) -> np.ndarray:
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    cdf = zipf_cdf(float(s), int(n))
    return kernels.zipf_ranks(cdf, rng.random(size))


def sample_zipf(s: float, n: int, rng) -> int:
    """Draw one rank r in [0, n) with probability proportional to 1/(r+1)^s."""
    return int(sample_zipf_many(s, n, 1, rng)[0])


def generate_batch(model: ModelSpec, batch_size: int, first_event_id: int, rng) -> TrainingBatch:
    """Draw a batch for every table of ``model``.

    Each table consumes the generator in model order (valencies, then rows), so
    the output is a pure function of (model, generator state, first_event_id).
    """
    if batch_size < 0:
        raise InvalidArgument("batch_size must be >= 0")
    lookups = {}
    for t in model.tables:
        val = t.valency_dist.sample(t.mean_valency, batch_size, rng)
        offsets = np.zeros(batch_size + 1, dtype=np.int64)
        np.cumsum(val, out=offsets[1:])
        rows = sample_zipf_many(t.zipf_s, t.vocab_size, int(offsets[-1]), rng)
        lookups[t.name] = RaggedRows(rows, offsets)
    event_ids = np.arange(first_event_id, first_event_id + batch_size, dtype=np.int64)
    return TrainingBatch(batch_size, lookups, event_ids)


def dedup_rows(rows) -> DedupResult:
    uniq, inv = kernels.dedup_first(np.ascontiguousarray(rows, dtype=np.int64))
    return DedupResult(uniq, inv)


def dedup(batch: TrainingBatch, table: str) -> DedupResult:
    if table not in batch.lookups:
        raise NotFound(f"table {table!r} not in batch")
    return dedup_rows(batch.lookups[table].values)


def batch_from_lists(tables: Mapping[str, Sequence[Sequence[int]]], first_event_id=0) -> TrainingBatch:
    """Build a batch from explicit per-example row lists (handy for tests and fixtures)."""
    sizes = {len(v) for v in tables.values()}
    if len(sizes) > 1:
        raise InvalidArgument("all tables need the same number of examples")
    n = sizes.pop() if sizes else 0
    lookups = {}
    for name, examples in tables.items():
        val = np.array([len(e) for e in examples], dtype=np.int64)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(val, out=offsets[1:])
        flat = np.array([r for e in examples for r in e], dtype=np.int64)
        lookups[name] = RaggedRows(flat, offsets)
    return TrainingBatch(n, lookups, np.arange(first_event_id, first_event_id + n, dtype=np.int64))
