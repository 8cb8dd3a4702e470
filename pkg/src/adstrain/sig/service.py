"""Memoization service core: matching cache, per-client queues, workers, eviction."""

from __future__ import annotations

import heapq
import itertools
import json
import os
import tempfile
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import InvalidArgument, NotFound
from ..rng import splitmix64
from .graph import (
    ConnectedComponent,
    TransformGraph,
    canonical_key,
    eval_transform,
    extract_components,
    reject_mutable,
)

SCHEDULED = "scheduled"
MATERIALIZING = "materializing"
READY = "ready"
FAILED = "failed"

STRICT = "strict"
WEIGHTED = "weighted"

SNAPSHOT_VERSION = 1


def block_id(key, event_range):
    return f"{key}:{event_range[0]}-{event_range[1]}"


class Warehouse:
    """Key-value block store standing in for the training data warehouse."""

    def __init__(self):
        self._blocks = {}
        self._lock = threading.Lock()

    def put(self, bid, value):
        with self._lock:
            self._blocks[bid] = value

    def get(self, bid):
        with self._lock:
            try:
                return self._blocks[bid]
            except KeyError:
                raise NotFound(f"no block {bid!r}") from None

    def __contains__(self, bid):
        with self._lock:
            return bid in self._blocks

    def delete(self, bid):
        with self._lock:
            self._blocks.pop(bid, None)

    def __len__(self):
        return len(self._blocks)

    def to_dict(self):
        with self._lock:
            return dict(sorted(self._blocks.items()))

    @classmethod
    def from_dict(cls, d):
        w = cls()
        w._blocks.update(d)
        return w


@dataclass
class CacheEntry:
    key: str
    event_range: tuple
    storage_location: str
    component: ConnectedComponent = field(repr=False)
    status: str = SCHEDULED
    last_requested: float = 0.0
    producer_task: Optional[int] = None
    consumers: set = field(default_factory=set)

    @property
    def raw_fields(self):
        return self.component.raw_reads


@dataclass(frozen=True)
class ReadItem:
    output: str
    key: str
    storage_location: str
    status: str


@dataclass(frozen=True)
class MemoTask:
    task_id: int
    key: str
    event_range: tuple
    client: str
    priority: int


class SyntheticRawSource:
    """Deterministic raw records: each field is a few words drawn by hashing (field, event id)."""

    def __init__(self, fields, vocab_size=50, words_per_field=3, seed=0):
        self.fields = list(fields)
        self.vocab_size = vocab_size
        self.words_per_field = words_per_field
        self.seed = seed

    def __call__(self, event_id):
        rec = {}
        for f in self.fields:
            salt = int.from_bytes(f.encode()[:8].ljust(8, b"\0"), "little")
            idx = np.arange(self.words_per_field, dtype=np.uint64) + np.uint64(event_id * 131 + len(f))
            h = splitmix64(idx, self.seed ^ salt) % np.uint64(self.vocab_size)
            rec[f] = " ".join(f"w{int(x)}" for x in h)
        return rec


class SigService:
    """Shared input generation service core.

    All state changes go through one lock. ``worker_poll_execute`` evaluates
    tasks outside the lock and commits results under it, so several worker
    threads may poll concurrently; results are deterministic with one worker.
    """

    def __init__(self, raw_source: Callable = None, scheduling: str = STRICT, warehouse: Warehouse = None):
        if scheduling not in (STRICT, WEIGHTED):
            raise InvalidArgument(f"unknown scheduling discipline {scheduling!r}")
        self.raw_source = raw_source
        self.scheduling = scheduling
        self.warehouse = warehouse or Warehouse()
        self.entries = {}
        self.clients = {}
        self.queues = {}
        self.tasks = {}
        self.cancelled = set()
        self.failed_tasks = {}
        self.hits = 0
        self.misses = 0
        self.evaluations = Counter()
        self.transform_calls = 0
        self.log = []
        self._task_ids = itertools.count()
        self._seq = itertools.count()
        self._wrr = {}
        self._lock = threading.RLock()

    # -- clients ----------------------------------------------------------

    def register_client(self, client, priority=0):
        with self._lock:
            self.clients[client] = int(priority)
            self.queues.setdefault(client, [])

    set_priority = register_client

    # -- matching / scheduling --------------------------------------------

    def submit(self, graph: TransformGraph, client, event_range, now, pipeline=None):
        """Match each component; schedule misses. Returns one ReadItem per graph output."""
        reject_mutable(graph)
        lo, hi = int(event_range[0]), int(event_range[1])
        if hi < lo:
            raise InvalidArgument("event range must satisfy lo <= hi")
        pipeline = pipeline if pipeline is not None else client
        comps = extract_components(graph)
        with self._lock:
            if client not in self.clients:
                self.register_client(client, 0)
            by_output = {}
            for comp in comps:
                key = canonical_key(comp)
                ek = (key, (lo, hi))
                entry = self.entries.get(ek)
                if entry is not None and entry.status != FAILED:
                    self.hits += 1
                    hit = True
                else:
                    self.misses += 1
                    hit = False
                    entry = CacheEntry(key, (lo, hi), block_id(key, (lo, hi)), comp)
                    self.entries[ek] = entry
                    self._enqueue(entry, client)
                entry.last_requested = max(entry.last_requested, now)
                entry.consumers.add(pipeline)
                self.log.append(("submit", now, pipeline, key, (lo, hi), hit))
                by_output[comp.output] = ReadItem(comp.output, key, entry.storage_location, entry.status)
            return [by_output[o] for o in graph.outputs]

    def _enqueue(self, entry, client):
        tid = next(self._task_ids)
        task = MemoTask(tid, entry.key, entry.event_range, client, self.clients[client])
        self.tasks[tid] = task
        entry.producer_task = tid
        entry.status = SCHEDULED
        heapq.heappush(self.queues[client], (-task.priority, next(self._seq), tid))

    def pending(self):
        with self._lock:
            return [self.tasks[t] for q in self.queues.values() for _, _, t in sorted(q) if t not in self.cancelled]

    def _next_task(self):
        while True:
            heads = {c: q[0] for c, q in self.queues.items() if q}
            if not heads:
                return None
            if self.scheduling == STRICT:
                client = min(heads, key=lambda c: heads[c][:2])
            else:
                # smooth weighted round-robin by client priority (weight >= 1)
                total = 0
                for c in heads:
                    w = max(1, self.clients.get(c, 0))
                    self._wrr[c] = self._wrr.get(c, 0) + w
                    total += w
                client = max(sorted(heads), key=lambda c: self._wrr[c])
                self._wrr[client] -= total
            _, _, tid = heapq.heappop(self.queues[client])
            if tid in self.cancelled:
                continue
            return self.tasks[tid]

    # -- workers ------------------------------------------------------------

    def worker_poll_execute(self, budget: int):
        """Run up to ``budget`` tasks in scheduling order; returns executed task ids."""
        done = []
        for _ in range(max(0, budget)):
            with self._lock:
                task = self._next_task()
                if task is None:
                    break
                entry = self.entries.get((task.key, task.event_range))
                if entry is None or entry.producer_task != task.task_id:
                    continue
                entry.status = MATERIALIZING
                comp = entry.component
            try:
                block = [eval_transform(comp, self.raw_source(e)) for e in range(*task.event_range)]
                err = None
            except Exception as exc:  # evaluation errors are reported through entry status
                block, err = None, exc
            with self._lock:
                self.transform_calls += task.event_range[1] - task.event_range[0]
                entry = self.entries.get((task.key, task.event_range))
                if err is not None:
                    self.failed_tasks[task.task_id] = repr(err)
                    if entry is not None and entry.producer_task == task.task_id:
                        entry.status = FAILED
                    continue
                self.evaluations[task.key] += 1
                self.log.append(("execute", task.task_id, task.key, task.event_range, task.client))
                if entry is not None and entry.producer_task == task.task_id:
                    self.warehouse.put(entry.storage_location, block)
                    entry.status = READY
                done.append(task.task_id)
        return done

    def status(self, key, event_range):
        with self._lock:
            e = self.entries.get((key, tuple(event_range)))
            return None if e is None else e.status

    def read(self, item: ReadItem):
        return self.warehouse.get(item.storage_location)

    # -- eviction -------------------------------------------------------------

    def _evict(self, eks):
        evicted = []
        for ek in eks:
            e = self.entries.pop(ek, None)
            if e is None:
                continue
            if e.producer_task is not None and e.status in (SCHEDULED, MATERIALIZING):
                self.cancelled.add(e.producer_task)
            self.warehouse.delete(e.storage_location)
            self.log.append(("evict", e.key, e.event_range))
            evicted.append(ek)
        return evicted

    def evict_stale(self, now, ttl):
        if ttl <= 0:
            raise InvalidArgument("ttl must be > 0")
        with self._lock:
            stale = [ek for ek, e in self.entries.items() if now - e.last_requested > ttl]
            return self._evict(sorted(stale))

    def evict_query(self, raw_field=None, pipeline=None, key=None):
        """Evict every entry matching all given predicates; returns evicted (key, range) pairs."""
        if raw_field is None and pipeline is None and key is None:
            raise InvalidArgument("evict_query needs at least one predicate")
        with self._lock:
            match = []
            for ek, e in self.entries.items():
                if raw_field is not None and raw_field not in e.raw_fields:
                    continue
                if pipeline is not None and pipeline not in e.consumers:
                    continue
                if key is not None and e.key != key:
                    continue
                match.append(ek)
            return self._evict(sorted(match))

    def index(self):
        """Search index: raw field -> keys and pipeline -> keys."""
        with self._lock:
            by_field, by_pipeline = {}, {}
            for e in self.entries.values():
                for f in e.raw_fields:
                    by_field.setdefault(f, set()).add(e.key)
                for p in e.consumers:
                    by_pipeline.setdefault(p, set()).add(e.key)
            return by_field, by_pipeline

    # -- metrics ----------------------------------------------------------------

    def metrics(self):
        with self._lock:
            lookups = self.hits + self.misses
            ready = [len(e.consumers) for e in self.entries.values() if e.status == READY]
            return {
                "hit_rate": self.hits / lookups if lookups else 0.0,
                "hits": self.hits,
                "misses": self.misses,
                "mean_consumers_per_ready_block": float(np.mean(ready)) if ready else 0.0,
                "peak_consumers": max(ready, default=0),
                "entries": len(self.entries),
                "ready_blocks": len(ready),
                "pending_tasks": len(self.pending()),
                "evaluations": int(sum(self.evaluations.values())),
                "failed_tasks": len(self.failed_tasks),
            }

    def reset_counters(self):
        with self._lock:
            self.hits = self.misses = 0

    # -- persistence --------------------------------------------------------------

    def snapshot(self):
        with self._lock:
            return {
                "version": SNAPSHOT_VERSION,
                "scheduling": self.scheduling,
                "clients": dict(sorted(self.clients.items())),
                "entries": [
                    {
                        "key": e.key,
                        "event_range": list(e.event_range),
                        "storage_location": e.storage_location,
                        "status": e.status,
                        "last_requested": e.last_requested,
                        "producer_task": e.producer_task,
                        "consumers": sorted(e.consumers),
                        "component": e.component.graph.to_dict(),
                        "output": e.component.output,
                    }
                    for _, e in sorted(self.entries.items())
                ],
                "pending": [
                    {"task_id": t.task_id, "key": t.key, "event_range": list(t.event_range),
                     "client": t.client, "priority": t.priority}
                    for t in self.pending()
                ],
                "counters": {
                    "hits": self.hits,
                    "misses": self.misses,
                    "evaluations": dict(sorted(self.evaluations.items())),
                    "transform_calls": self.transform_calls,
                    "next_task": max(self.tasks, default=-1) + 1,
                },
                "warehouse": self.warehouse.to_dict(),
            }

    @classmethod
    def restore(cls, snap, raw_source=None):
        if snap.get("version") != SNAPSHOT_VERSION:
            raise InvalidArgument(f"unsupported snapshot version {snap.get('version')!r}")
        svc = cls(raw_source, snap.get("scheduling", STRICT), Warehouse.from_dict(snap.get("warehouse", {})))
        for c, p in snap.get("clients", {}).items():
            svc.register_client(c, p)
        for d in snap.get("entries", []):
            comp = ConnectedComponent(TransformGraph.from_dict(d["component"]), d["output"])
            e = CacheEntry(d["key"], tuple(d["event_range"]), d["storage_location"], comp, d["status"],
                           d["last_requested"], d["producer_task"], set(d["consumers"]))
            svc.entries[(e.key, e.event_range)] = e
        c = snap.get("counters", {})
        svc.hits, svc.misses = c.get("hits", 0), c.get("misses", 0)
        svc.evaluations = Counter(c.get("evaluations", {}))
        svc.transform_calls = c.get("transform_calls", 0)
        svc._task_ids = itertools.count(c.get("next_task", 0))
        for t in snap.get("pending", []):
            task = MemoTask(t["task_id"], t["key"], tuple(t["event_range"]), t["client"], t["priority"])
            svc.tasks[task.task_id] = task
            svc.queues.setdefault(task.client, [])
            heapq.heappush(svc.queues[task.client], (-task.priority, next(svc._seq), task.task_id))
        return svc

    def save(self, path):
        directory = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        with os.fdopen(fd, "w") as f:
            json.dump(self.snapshot(), f, sort_keys=True)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path, raw_source=None):
        with open(path) as f:
            return cls.restore(json.load(f), raw_source)
