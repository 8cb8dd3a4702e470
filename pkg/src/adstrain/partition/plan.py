"""Partition plan data model, coverage checking, load and memory evaluation."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import InvalidArgument, NotFound
from ..rng import splitmix64
from ..workload import EmbeddingTableSpec, ModelSpec, zipf_probabilities

BLOCK = "block"
CYCLIC = "cyclic"
RANDOM_HASH = "random_hash"
SCHEMES = (BLOCK, CYCLIC, RANDOM_HASH)

# materialize row sets for exact coverage checks up to this vocabulary size
_MATERIALIZE_LIMIT = 1 << 22


@dataclass(frozen=True, order=True)
class RowSet:
    """Rows of a table owned by one shard.

    kind ``all``; ``block`` = rows [lo, hi); ``cyclic`` = rows r with
    r % stride == offset; ``hash`` = rows r with splitmix64(r, seed) % buckets == bucket.
    """

    kind: str = "all"
    lo: int = 0
    hi: int = 0
    offset: int = 0
    stride: int = 1
    bucket: int = 0
    buckets: int = 1
    seed: int = 0

    @classmethod
    def all(cls):
        return cls("all")

    @classmethod
    def block(cls, lo, hi):
        return cls("block", lo=lo, hi=hi)

    @classmethod
    def cyclic(cls, offset, stride):
        return cls("cyclic", offset=offset, stride=stride)

    @classmethod
    def hashed(cls, bucket, buckets, seed=0):
        return cls("hash", bucket=bucket, buckets=buckets, seed=seed)

    def materialize(self, vocab):
        if self.kind == "all":
            return np.arange(vocab, dtype=np.int64)
        if self.kind == "block":
            return np.arange(max(0, self.lo), min(vocab, self.hi), dtype=np.int64)
        if self.kind == "cyclic":
            return np.arange(self.offset, vocab, self.stride, dtype=np.int64)
        if self.kind == "hash":
            r = np.arange(vocab, dtype=np.int64)
            h = splitmix64(r, self.seed) % np.uint64(self.buckets)
            return r[h == np.uint64(self.bucket)]
        raise InvalidArgument(f"unknown row set kind {self.kind!r}")

    def count(self, vocab):
        if self.kind == "all":
            return vocab
        if self.kind == "block":
            return max(0, min(vocab, self.hi) - max(0, self.lo))
        if self.kind == "cyclic":
            return max(0, -(-(vocab - self.offset) // self.stride))
        return len(self.materialize(vocab))

    def weight_sum(self, weights):
        """Sum of per-row weights over this row set."""
        if self.kind == "all":
            return float(np.sum(weights))
        if self.kind == "block":
            return float(np.sum(weights[max(0, self.lo):self.hi]))
        if self.kind == "cyclic":
            return float(np.sum(weights[self.offset::self.stride]))
        return float(np.sum(weights[self.materialize(len(weights))]))

    def to_dict(self):
        if self.kind == "all":
            return {"kind": "all"}
        if self.kind == "block":
            return {"kind": "block", "lo": self.lo, "hi": self.hi}
        if self.kind == "cyclic":
            return {"kind": "cyclic", "offset": self.offset, "stride": self.stride}
        return {"kind": "hash", "bucket": self.bucket, "buckets": self.buckets, "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True, order=True)
class ShardSpec:
    table: str
    cols: tuple
    node: int
    rows: RowSet = RowSet.all()

    @property
    def width(self):
        return self.cols[1] - self.cols[0]

    def to_dict(self):
        return {"table": self.table, "rows": self.rows.to_dict(), "cols": list(self.cols), "node": self.node}

    @classmethod
    def from_dict(cls, d):
        return cls(d["table"], tuple(d["cols"]), int(d["node"]), RowSet.from_dict(d.get("rows", {"kind": "all"})))


@dataclass(frozen=True)
class PartitionPlan:
    shards: tuple
    node_count: int
    distribution: Mapping[str, str] = field(default_factory=dict)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.node_count < 1:
            raise InvalidArgument("node_count must be >= 1")
        object.__setattr__(self, "shards", tuple(sorted(self.shards)))
        for s in self.shards:
            if not 0 <= s.node < self.node_count:
                raise InvalidArgument(f"shard of {s.table!r} on node {s.node} outside [0, {self.node_count})")

    @property
    def tables(self):
        return sorted({s.table for s in self.shards})

    def shards_of(self, table):
        return [s for s in self.shards if s.table == table]

    def min_width(self):
        return min((s.width for s in self.shards), default=None)

    def to_dict(self):
        return {
            "node_count": self.node_count,
            "distribution": dict(sorted(self.distribution.items())),
            "shards": [s.to_dict() for s in self.shards],
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    @classmethod
    def from_dict(cls, d):
        return cls(
            shards=[ShardSpec.from_dict(s) for s in d["shards"]],
            node_count=int(d["node_count"]),
            distribution=d.get("distribution", {}),
        )

    @classmethod
    def merge(cls, plans, node_count=None):
        plans = list(plans)
        n = node_count or max(p.node_count for p in plans)
        shards, dist = [], {}
        for p in plans:
            shards.extend(p.shards)
            dist.update(p.distribution)
        return cls(shards, n, dist)


class TrafficStats:
    """Mean deduplicated lookups per step, per (table, row)."""

    def __init__(self, per_table: Mapping[str, np.ndarray]):
        self._rows = {}
        for name, arr in per_table.items():
            a = np.asarray(arr, dtype=np.float64)
            if a.ndim != 1 or not np.all(np.isfinite(a)) or np.any(a < 0):
                raise InvalidArgument(f"traffic for {name!r} must be a finite non-negative vector")
            a = a.copy()
            a.flags.writeable = False
            self._rows[name] = a

    def rows(self, table) -> np.ndarray:
        try:
            return self._rows[table]
        except KeyError:
            raise NotFound(f"no traffic stats for table {table!r}") from None

    def __contains__(self, table):
        return table in self._rows

    def tables(self):
        return list(self._rows)

    def total(self, table):
        return float(self._rows[table].sum())

    def to_dict(self):
        return {k: v.tolist() for k, v in self._rows.items()}

    @classmethod
    def from_dict(cls, d):
        return cls({k: np.asarray(v, dtype=np.float64) for k, v in d.items()})

    @classmethod
    def uniform(cls, specs, lookups=1.0):
        return cls({t.name: np.full(t.vocab_size, float(lookups)) for t in _iter_specs(specs)})

    @classmethod
    def expected_zipf(cls, specs, batch_size, valency=None):
        """Expected deduplicated lookups per row per step for Zipf traffic.

        A row with access probability p is looked up after dedup with
        probability 1 - (1 - p)^m, where m is the number of occurrences per
        batch (batch_size times mean valency). ``valency`` optionally
        overrides the per-table mean valency (e.g. from profiled stats).
        """
        valency = dict(valency or {})
        out = {}
        for t in _iter_specs(specs):
            m = batch_size * valency.get(t.name, t.mean_valency)
            p = zipf_probabilities(t.zipf_s, t.vocab_size)
            out[t.name] = -np.expm1(m * np.log1p(-np.minimum(p, 1.0 - 1e-16)))
        return cls(out)

    @classmethod
    def from_batches(cls, batches, specs):
        """Empirical per-row deduplicated lookup means over a list of batches."""
        specs = {t.name: t for t in _iter_specs(specs)}
        acc = {n: np.zeros(t.vocab_size) for n, t in specs.items()}
        for b in batches:
            for name in specs:
                rows = np.unique(b.lookups[name].values)
                acc[name][rows] += 1.0
        n = max(1, len(batches))
        return cls({k: v / n for k, v in acc.items()})


@dataclass(frozen=True)
class LoadReport:
    bytes_per_node: np.ndarray
    imbalance: float
    N: int
    zero_traffic: bool = False

    @property
    def total(self):
        return float(self.bytes_per_node.sum())

    @property
    def max_bytes(self):
        return float(self.bytes_per_node.max())

    def to_dict(self):
        return {
            "bytes_per_node": self.bytes_per_node.tolist(),
            "imbalance": self.imbalance,
            "node_count": self.N,
            "zero_traffic": self.zero_traffic,
        }


def _iter_specs(specs):
    if isinstance(specs, ModelSpec):
        return list(specs.tables)
    if isinstance(specs, EmbeddingTableSpec):
        return [specs]
    if isinstance(specs, Mapping):
        return list(specs.values())
    return list(specs)


def spec_map(specs) -> dict:
    return {t.name: t for t in _iter_specs(specs)}


def shard_bytes(shard: ShardSpec, spec: EmbeddingTableSpec, stats: TrafficStats) -> float:
    """Mean bytes accessed per step on the shard's node for this shard."""
    return shard.rows.weight_sum(stats.rows(shard.table)) * shard.width * spec.bytes_per_element


def node_loads(plan: PartitionPlan, stats: TrafficStats, specs) -> np.ndarray:
    specs = spec_map(specs)
    B = np.zeros(plan.node_count)
    for s in plan.shards:
        B[s.node] += shard_bytes(s, specs[s.table], stats)
    return B


def imbalance_of(B) -> float:
    total = float(np.sum(B))
    if total <= 0:
        return 1.0
    return len(B) * float(np.max(B)) / total


def load_imbalance(plan: PartitionPlan, stats: TrafficStats, specs) -> LoadReport:
    """Per-node accessed bytes and the max-over-mean load imbalance.

    Zero total traffic is reported as imbalance 1.0 with ``zero_traffic`` set.
    """
    B = node_loads(plan, stats, specs)
    zero = float(B.sum()) <= 0
    if zero:
        warnings.warn("plan has zero total traffic; load imbalance defined as 1.0", RuntimeWarning, stacklevel=2)
    return LoadReport(B, imbalance_of(B), plan.node_count, zero)


def memory_bytes(plan: PartitionPlan, specs) -> np.ndarray:
    """Per-node parameter bytes including optimizer slots."""
    specs = spec_map(specs)
    mem = np.zeros(plan.node_count)
    for s in plan.shards:
        t = specs[s.table]
        mem[s.node] += s.rows.count(t.vocab_size) * s.width * t.bytes_per_element * t.optimizer.params_width_multiplier
    return mem


def check_coverage(plan: PartitionPlan, specs) -> list:
    """Return a list of problems; empty means every table cell is owned exactly once.

    Row sets are compared by class algebra when all shards of a column slice use
    the same kind, and by materialized counting otherwise (small vocabularies).
    """
    specs = spec_map(specs)
    problems = []
    by_table = {}
    for s in plan.shards:
        by_table.setdefault(s.table, []).append(s)
    for name in sorted(set(specs) | set(by_table)):
        if name not in specs:
            problems.append(f"shards reference unknown table {name!r}")
            continue
        t = specs[name]
        shards = by_table.get(name, [])
        if not shards:
            problems.append(f"table {name!r} has no shards")
            continue
        for s in shards:
            lo, hi = s.cols
            if not 0 <= lo < hi <= t.dim:
                problems.append(f"table {name!r}: column range {s.cols} outside [0, {t.dim})")
        if t.optimizer.kind == "row_wise" and len({s.cols for s in shards}) > 1:
            problems.append(f"table {name!r}: row_wise optimizer table is column-split")
        cuts = sorted({0, t.dim} | {c for s in shards for c in s.cols if 0 <= c <= t.dim})
        for a, b in zip(cuts, cuts[1:]):
            owners = [s for s in shards if s.cols[0] <= a and b <= s.cols[1]]
            msg = _rows_partition_problem(owners, t.vocab_size)
            if msg:
                problems.append(f"table {name!r} columns [{a},{b}): {msg}")
    return problems


def _rows_partition_problem(shards, vocab):
    if not shards:
        return "no owner"
    kinds = {s.rows.kind for s in shards}
    if kinds == {"all"}:
        return None if len(shards) == 1 else f"{len(shards)} full-row owners"
    if kinds == {"block"} and vocab > _MATERIALIZE_LIMIT:
        spans = sorted((s.rows.lo, s.rows.hi) for s in shards if s.rows.count(vocab) > 0)
        pos = 0
        for lo, hi in spans:
            if lo != pos:
                return f"block gap/overlap at row {pos}"
            pos = hi
        return None if pos >= vocab else f"rows [{pos}, {vocab}) uncovered"
    if kinds == {"cyclic"} and vocab > _MATERIALIZE_LIMIT:
        strides = {s.rows.stride for s in shards}
        if len(strides) == 1:
            stride = strides.pop()
            offs = sorted(s.rows.offset for s in shards)
            return None if offs == list(range(stride)) else "cyclic classes do not partition"
    if kinds == {"hash"} and vocab > _MATERIALIZE_LIMIT:
        keys = {(s.rows.buckets, s.rows.seed) for s in shards}
        if len(keys) == 1:
            buckets = keys.pop()[0]
            return None if sorted(s.rows.bucket for s in shards) == list(range(buckets)) else "hash buckets do not partition"
    if vocab > _MATERIALIZE_LIMIT:
        return "mixed row-set kinds on a large table cannot be verified"
    counts = np.zeros(vocab, dtype=np.int64)
    for s in shards:
        np.add.at(counts, s.rows.materialize(vocab), 1)
    bad = np.flatnonzero(counts != 1)
    if bad.size:
        return f"{bad.size} rows owned != 1 times (first row {int(bad[0])}, count {int(counts[bad[0]])})"
    return None


def validate_plan(plan: PartitionPlan, specs):
    problems = check_coverage(plan, specs)
    if problems:
        raise InvalidArgument("invalid plan: " + "; ".join(problems))
