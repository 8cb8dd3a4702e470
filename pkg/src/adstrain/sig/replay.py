"""Synthetic multi-model SIG workloads and a replay driver."""

from __future__ import annotations

from dataclasses import dataclass

from ..rng import make_rng
from .graph import Node, TransformGraph

RAW_FIELDS = ("query_text", "ad_title", "landing_page", "user_context")


def pool_component(i: int, prefix: str = ""):
    """Nodes of the i-th pool component; structurally distinct for distinct i."""
    a = RAW_FIELDS[i % len(RAW_FIELDS)]
    b = RAW_FIELDS[(i // len(RAW_FIELDS) + 1 + i) % len(RAW_FIELDS)]
    p = f"{prefix}c{i}_"
    return [
        Node(p + "a", "read", {"field": a}),
        Node(p + "b", "read", {"field": b}),
        Node(p + "ua", "unigrams", {}, (p + "a",)),
        Node(p + "ub", "unigrams", {}, (p + "b",)),
        Node(p + "x", "intersect", {}, (p + "ua", p + "ub")),
        Node(p + "out", "truncate", {"n": 1 + i}, (p + "x",)),
    ], p + "out"


def model_graph(components) -> TransformGraph:
    nodes, outs = [], []
    for i in components:
        ns, out = pool_component(i)
        nodes += ns
        outs.append(out)
    return TransformGraph(nodes, outs)


@dataclass(frozen=True)
class SigWorkload:
    """Model name -> pool component indices, plus priorities and replay rounds."""

    models: dict
    rounds: int = 3
    range_len: int = 8
    priorities: dict = None

    @property
    def components(self):
        return sorted({c for cs in self.models.values() for c in cs})


def shared_pool_workload(n_models=30, pool=50, per_model=5, rounds=3, seed=0, range_len=8) -> SigWorkload:
    rng = make_rng(seed, "sig-workload")
    models = {}
    for m in range(n_models):
        models[f"model{m:03d}"] = sorted(int(c) for c in rng.choice(pool, size=min(per_model, pool), replace=False))
    return SigWorkload(models, rounds, range_len)


def fully_shared_workload(k=22, components=4, rounds=5, range_len=8) -> SigWorkload:
    """Every one of ``k`` models consumes the same components."""
    return SigWorkload({f"model{m:03d}": list(range(components)) for m in range(k)}, rounds, range_len)


def replay(service, workload: SigWorkload, start=0, worker_budget=None):
    """Each round every model submits its graph for the same event range, then workers drain the queue.

    Returns per-round metric snapshots.
    """
    graphs = {m: model_graph(cs) for m, cs in workload.models.items()}
    prios = workload.priorities or {}
    for m in graphs:
        service.register_client(m, prios.get(m, 0))
    rng_ = (start, start + workload.range_len)
    rounds = []
    for r in range(workload.rounds):
        for m, g in graphs.items():
            service.submit(g, m, rng_, now=r)
        budget = worker_budget if worker_budget is not None else len(service.pending())
        service.worker_poll_execute(budget)
        rounds.append(service.metrics())
    return rounds


def recount(log):
    """Recompute hit rate and per-key reuse from a service event log alone."""
    hits = misses = 0
    consumers = {}
    execs = {}
    for rec in log:
        if rec[0] == "submit":
            _, _, pipeline, key, erange, hit = rec
            hits += bool(hit)
            misses += not hit
            consumers.setdefault((key, tuple(erange)), set()).add(pipeline)
        elif rec[0] == "execute":
            execs[rec[2]] = execs.get(rec[2], 0) + 1
        elif rec[0] == "evict":
            consumers.pop((rec[1], tuple(rec[2])), None)
    total = hits + misses
    return {"hit_rate": hits / total if total else 0.0, "consumers": consumers, "executions": execs}
