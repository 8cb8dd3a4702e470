"""Feedback-directed partitioning statistics.

Batches are profiled with a fixed probability; each profile record updates a
database of per-feature running statistics. Entries are keyed by feature name
only, so models that share a feature share its entry.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import InvalidArgument, NotFound
from .workload import TrainingBatch, dedup

DB_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ProfileRecord:
    feature: str
    values_per_example: float
    unique_values_per_batch: int
    batch_size: int
    step: int
    per_shard_load: Optional[tuple] = None

    def __post_init__(self):
        if self.batch_size < 0 or self.unique_values_per_batch < 0:
            raise InvalidArgument("counts must be non-negative")
        if self.unique_values_per_batch > self.values_per_example * self.batch_size + 1e-9:
            raise InvalidArgument("more unique values than total values")

    @property
    def unique_fraction(self):
        total = self.values_per_example * self.batch_size
        return self.unique_values_per_batch / total if total > 0 else 0.0


@dataclass
class FeatureStats:
    feature: str
    mean_valency: float
    mean_unique_fraction: float
    sample_count: int
    last_updated: int
    mean_shard_load: Optional[list] = None


def maybe_profile(batch: TrainingBatch, feature: str, rate: float, rng, table=None, shard_of=None):
    """Profile ``batch`` with probability ``rate``; return a record or None.

    ``table`` names the lookup table behind ``feature`` (defaults to the
    feature name). ``shard_of`` optionally maps a row-index array to shard
    indices, in which case per-shard unique-row counts are recorded as the load
    information.
    """
    if not 0.0 <= rate <= 1.0:
        raise InvalidArgument("rate must be in [0, 1]")
    if not rng.random() < rate:
        return None
    table = table or feature
    if table not in batch.lookups:
        raise NotFound(f"table {table!r} not in batch")
    rows = batch.lookups[table].values
    d = dedup(batch, table)
    per_shard = None
    if shard_of is not None:
        shards = np.asarray(shard_of(d.unique_rows), dtype=np.int64)
        per_shard = tuple(float(x) for x in np.bincount(shards)) if shards.size else ()
    vpe = len(rows) / batch.batch_size if batch.batch_size else 0.0
    step = int(batch.event_ids[0]) if batch.batch_size else 0
    return ProfileRecord(feature, vpe, len(d.unique_rows), batch.batch_size, step, per_shard)


class ProfileDB:
    """Thread-safe feature statistics store.

    Reads take a snapshot under the lock; writes are serialized and each record
    is applied atomically. With ``decay`` set, means become exponentially
    weighted (``mean += decay * (x - mean)`` after the first sample) instead of
    exact running means. ``keep_samples`` retains raw records for auditing.
    """

    def __init__(self, decay: Optional[float] = None, keep_samples: bool = False):
        if decay is not None and not 0.0 < decay <= 1.0:
            raise InvalidArgument("decay must be in (0, 1]")
        self.decay = decay
        self.keep_samples = keep_samples
        self._stats = {}
        self._samples = {}
        self._lock = threading.Lock()

    def update(self, record: ProfileRecord):
        with self._lock:
            cur = self._stats.get(record.feature)
            frac = record.unique_fraction
            if cur is None:
                cur = FeatureStats(record.feature, record.values_per_example, frac, 1, record.step,
                                   list(record.per_shard_load) if record.per_shard_load is not None else None)
            else:
                n = cur.sample_count + 1
                w = self.decay if self.decay is not None else 1.0 / n
                cur = FeatureStats(
                    record.feature,
                    cur.mean_valency + w * (record.values_per_example - cur.mean_valency),
                    cur.mean_unique_fraction + w * (frac - cur.mean_unique_fraction),
                    n,
                    record.step,
                    _blend(cur.mean_shard_load, record.per_shard_load, w),
                )
            self._stats[record.feature] = cur
            if self.keep_samples:
                self._samples.setdefault(record.feature, []).append(record)

    def query(self, feature: str) -> Optional[FeatureStats]:
        with self._lock:
            cur = self._stats.get(feature)
            return None if cur is None else FeatureStats(**asdict(cur))

    def samples(self, feature):
        with self._lock:
            return list(self._samples.get(feature, []))

    def features(self):
        with self._lock:
            return sorted(self._stats)

    def valency_overrides(self, features_to_tables):
        """Map table -> profiled mean valency for every feature with stats."""
        out = {}
        for feat, table in features_to_tables.items():
            st = self.query(feat)
            if st is not None:
                out[table] = st.mean_valency
        return out

    def to_dict(self):
        with self._lock:
            return {
                "version": DB_FORMAT_VERSION,
                "decay": self.decay,
                "features": {k: asdict(v) for k, v in sorted(self._stats.items())},
            }

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != DB_FORMAT_VERSION:
            raise InvalidArgument(f"unsupported stats database version {d.get('version')!r}")
        db = cls(decay=d.get("decay"))
        for k, v in d.get("features", {}).items():
            db._stats[k] = FeatureStats(**v)
        return db

    def save(self, path):
        data = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        directory = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        with os.fdopen(fd, "w") as f:
            f.write(data)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def update(db: ProfileDB, record: ProfileRecord):
    db.update(record)


def query(db: ProfileDB, feature: str):
    return db.query(feature)


def _blend(old, new, w):
    if new is None:
        return old
    if old is None or len(old) != len(new):
        return list(new)
    return [o + w * (n - o) for o, n in zip(old, new)]
