"""Hybrid plan search and the exhaustive reference search.

Both searches range over the same candidate space. Each table independently
picks a column split count from ``column_splits`` (only 1 for row-wise
optimizers), and each column slice is either placed whole on one node or
row-partitioned over all nodes with cyclic or block distribution.

The objective is modeled SparseCore time in bytes:
``imbalance * mean(B) * granularity_penalty(min column width)``, which is
``max(B) * penalty``. The penalty is a step function of the narrowest column
slice in the plan.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..errors import Infeasible, InvalidArgument, SearchSpaceTooLarge
from .methods import balanced_bounds, row_cyclic_plan, row_sets, table_partition
from .plan import (
    BLOCK,
    CYCLIC,
    PartitionPlan,
    ShardSpec,
    TrafficStats,
    imbalance_of,
    memory_bytes,
    node_loads,
    spec_map,
)

ORACLE_LIMIT = 10_000_000


@dataclass(frozen=True)
class GranularityPenalty:
    """Step function of column width: first step whose ``min_width`` <= width applies.

    Default: 1.0 for widths >= 32 elements, 1.25 below.
    """

    steps: tuple = ((32, 1.0), (0, 1.25))

    def __post_init__(self):
        widths = [w for w, _ in self.steps]
        factors = [f for _, f in self.steps]
        if widths != sorted(widths, reverse=True) or widths[-1] != 0:
            raise InvalidArgument("penalty steps must have decreasing min widths ending at 0")
        if factors != sorted(factors) or factors[0] <= 0:
            raise InvalidArgument("penalty factors must be positive and non-decreasing as width shrinks")

    def bucket(self, width):
        for i, (w, _) in enumerate(self.steps):
            if width >= w:
                return i
        return len(self.steps) - 1

    def factor(self, width):
        return self.steps[self.bucket(width)][1]

    @property
    def factors(self):
        return np.array([f for _, f in self.steps], dtype=np.float64)


@dataclass(frozen=True)
class TableOption:
    shards: tuple
    loads: np.ndarray = field(compare=False)
    mem: np.ndarray = field(compare=False)
    bucket: int = 0
    label: str = ""


def plan_objective(plan: PartitionPlan, stats: TrafficStats, specs, penalty: GranularityPenalty = None) -> float:
    penalty = penalty or GranularityPenalty()
    if not plan.shards:
        return 0.0
    B = node_loads(plan, stats, specs)
    total = float(B.sum())
    if total <= 0:
        return 0.0
    return imbalance_of(B) * (total / plan.node_count) * penalty.factor(plan.min_width())


def _placements(spec, nodes):
    out = [("whole", n) for n in range(nodes)]
    if nodes > 1 and spec.vocab_size > 1:
        out.append((CYCLIC, None))
        if spec.vocab_size > nodes:
            # block equals cyclic when every node gets at most one row
            out.append((BLOCK, None))
    return out


def table_options(spec, nodes, stats, penalty, column_splits=(1, 2)):
    """Candidate placements for one table in canonical (lexicographic) order."""
    weights = stats.rows(spec.name)
    per_elem = spec.bytes_per_element
    mem_per_cell = per_elem * spec.optimizer.params_width_multiplier
    options = []
    for c in sorted(set(column_splits)):
        if c < 1 or c > spec.dim or (c > 1 and not spec.optimizer.allows_column_split):
            continue
        ranges = balanced_bounds(spec.dim, c)
        per_range = []
        for cols in ranges:
            width = cols[1] - cols[0]
            choices = []
            for kind, node in _placements(spec, nodes):
                loads = np.zeros(nodes)
                mem = np.zeros(nodes)
                if kind == "whole":
                    shards = (ShardSpec(spec.name, cols, node),)
                    loads[node] = float(np.sum(weights)) * width * per_elem
                    mem[node] = spec.vocab_size * width * mem_per_cell
                else:
                    shards = []
                    for i, rs in enumerate(row_sets(spec.vocab_size, nodes, kind)):
                        if rs is None:
                            continue
                        shards.append(ShardSpec(spec.name, cols, i, rs))
                        loads[i] = rs.weight_sum(weights) * width * per_elem
                        mem[i] = rs.count(spec.vocab_size) * width * mem_per_cell
                    shards = tuple(shards)
                label = f"{kind}@{node}" if kind == "whole" else kind
                choices.append((shards, loads, mem, label))
            per_range.append(choices)
        bucket = penalty.bucket(min(r[1] - r[0] for r in ranges))
        for combo in itertools.product(*per_range):
            shards = tuple(s for ch in combo for s in ch[0])
            loads = np.zeros(nodes)
            mem = np.zeros(nodes)
            for ch in combo:
                loads = loads + ch[1]
                mem = mem + ch[2]
            label = f"c{c}:" + "|".join(ch[3] for ch in combo)
            options.append(TableOption(shards, loads, mem, bucket, label))
    return options


def _assemble(specs_in_order, options, choice, nodes, meta):
    shards, dist = [], {}
    for spec, opts, k in zip(specs_in_order, options, choice):
        opt = opts[k]
        shards.extend(opt.shards)
        kinds = {s.rows.kind for s in opt.shards}
        if "cyclic" in kinds:
            dist[spec.name] = CYCLIC
        elif "block" in kinds:
            dist[spec.name] = BLOCK
    return PartitionPlan(shards, nodes, dist, meta)


def _check_total_memory(specs, nodes, capacity):
    total = sum(t.vocab_size * t.dim * t.bytes_per_element * t.optimizer.params_width_multiplier for t in specs)
    if total > nodes * capacity:
        share = total / nodes
        raise Infeasible(
            f"total footprint {total:.0f} B exceeds {nodes} x {capacity:.0f} B",
            {i: share - capacity for i in range(nodes)},
        )


def search_space_size(model, nodes, stats, column_splits=(1, 2), penalty=None):
    penalty = penalty or GranularityPenalty()
    specs = list(spec_map(model).values())
    return math.prod(len(table_options(t, nodes, stats, penalty, column_splits)) for t in specs)


def exact_partition_oracle(
    model,
    nodes: int,
    stats: TrafficStats,
    mem_capacity_per_node: float = math.inf,
    penalty: GranularityPenalty = None,
    column_splits=(1, 2),
    limit: int = ORACLE_LIMIT,
) -> PartitionPlan:
    """Exhaustively enumerate every candidate plan and return the objective-minimal one.

    Ties go to the lexicographically first option tuple (tables in model order).
    Refuses with :class:`SearchSpaceTooLarge` when the space exceeds ``limit``.
    """
    penalty = penalty or GranularityPenalty()
    specs = list(spec_map(model).values())
    _check_total_memory(specs, nodes, mem_capacity_per_node)
    options = [table_options(t, nodes, stats, penalty, column_splits) for t in specs]
    size = math.prod(len(o) for o in options)
    if size > limit:
        raise SearchSpaceTooLarge(size, limit)
    best, choice, evaluated = kernels.best_combination(
        [np.array([o.loads for o in opts]) for opts in options],
        [np.array([o.mem for o in opts]) for opts in options],
        [np.array([o.bucket for o in opts], dtype=np.int64) for opts in options],
        penalty.factors,
        float(mem_capacity_per_node),
    )
    if choice is None:
        raise Infeasible("no candidate plan fits in memory", _closest_deficits(specs, nodes, mem_capacity_per_node))
    meta = {"objective": best, "space": size, "evaluated": evaluated, "method": "exhaustive"}
    return _assemble(specs, options, choice, nodes, meta)


def _closest_deficits(specs, nodes, capacity):
    plan = row_cyclic_plan(specs, nodes)
    mem = memory_bytes(plan, specs)
    return {i: float(m - capacity) for i, m in enumerate(mem) if m > capacity}


def _row_key(a):
    a = np.ascontiguousarray(a)
    return a.view(np.dtype((np.void, a.dtype.itemsize * a.shape[1]))).ravel()


def hybrid_partition(
    model,
    nodes: int,
    stats: TrafficStats,
    mem_capacity_per_node: float = math.inf,
    search_budget: int = 500_000,
    penalty: GranularityPenalty = None,
    column_splits=(1, 2),
) -> PartitionPlan:
    """Beam search over per-table placement choices.

    Tables are visited in descending traffic order. Partial plans are pruned by
    memory capacity and by a lower bound (max(current max load, projected mean
    load) times the current penalty) against the best single-method plan, then
    deduplicated by their exact (loads, memory, penalty step) state. The beam
    width is ``search_budget`` divided by the largest per-table option count.
    The result is never worse than the row-cyclic and table-greedy plans.
    """
    penalty = penalty or GranularityPenalty()
    specs = list(spec_map(model).values())
    if not specs:
        return PartitionPlan([], nodes, {}, {"objective": 0.0, "method": "empty"})
    _check_total_memory(specs, nodes, mem_capacity_per_node)
    cap = float(mem_capacity_per_node)
    factors = penalty.factors

    # incumbents: the single-method baselines
    incumbent, inc_obj = None, math.inf
    for name, plan in (
        ("row_cyclic", row_cyclic_plan(specs, nodes)),
        ("table_greedy", table_partition(specs, nodes, stats)),
    ):
        if np.all(memory_bytes(plan, specs) <= cap):
            obj = plan_objective(plan, stats, specs, penalty)
            if obj < inc_obj:
                incumbent, inc_obj = (name, plan), obj

    options = [table_options(t, nodes, stats, penalty, column_splits) for t in specs]
    traffic = [stats.total(t.name) * t.dim * t.bytes_per_element for t in specs]
    order = sorted(range(len(specs)), key=lambda i: (-traffic[i], specs[i].name))
    width = max(1, search_budget // max(len(o) for o in options))
    remaining = float(sum(traffic))
    tol = 1e-12 * max(1.0, inc_obj if math.isfinite(inc_obj) else 1.0)

    S_load = np.zeros((1, nodes))
    S_mem = np.zeros((1, nodes))
    S_bucket = np.zeros(1, dtype=np.int64)
    S_choice = np.zeros((1, 0), dtype=np.int64)
    truncated = False
    for ti in order:
        opts = options[ti]
        O = len(opts)
        o_load = np.array([o.loads for o in opts])
        o_mem = np.array([o.mem for o in opts])
        o_bucket = np.array([o.bucket for o in opts], dtype=np.int64)
        remaining -= traffic[ti]
        load = (S_load[:, None, :] + o_load[None, :, :]).reshape(-1, nodes)
        mem = (S_mem[:, None, :] + o_mem[None, :, :]).reshape(-1, nodes)
        bucket = np.maximum(S_bucket[:, None], o_bucket[None, :]).reshape(-1)
        parent = np.repeat(np.arange(len(S_load)), O)
        pick = np.tile(np.arange(O), len(S_load))
        mx = load.max(axis=1)
        lb = np.maximum(mx, (load.sum(axis=1) + max(remaining, 0.0)) / nodes) * factors[bucket]
        keep = np.all(mem <= cap, axis=1) & (lb <= inc_obj + tol)
        if not keep.any():
            S_load = None
            break
        idx = np.flatnonzero(keep)
        sq = np.einsum("ij,ij->i", load[idx], load[idx])
        idx = idx[np.lexsort((sq, mx[idx], lb[idx]))]
        state = np.concatenate([load[idx], mem[idx], bucket[idx, None].astype(np.float64)], axis=1)
        _, first = np.unique(_row_key(state), return_index=True)
        idx = idx[np.sort(first)]
        if len(idx) > width:
            truncated = True
            idx = idx[:width]
        S_load, S_mem, S_bucket = load[idx], mem[idx], bucket[idx]
        S_choice = np.concatenate([S_choice[parent[idx]], pick[idx, None]], axis=1)

    best_plan, best_obj, method = None, math.inf, "beam"
    if S_load is not None and len(S_load):
        objs = S_load.max(axis=1) * factors[S_bucket]
        # canonical option tuples (model order) for deterministic tie-breaking
        canon = np.empty_like(S_choice)
        canon[:, order] = S_choice
        k = np.lexsort(tuple(canon[:, j] for j in reversed(range(canon.shape[1]))) + (objs,))[0]
        choice = tuple(int(x) for x in canon[k])
        best_plan = _assemble(specs, options, choice, nodes, {})
        best_obj = plan_objective(best_plan, stats, specs, penalty)
    if incumbent is not None and inc_obj < best_obj - tol:
        method, best_plan, best_obj = incumbent[0], incumbent[1], inc_obj
    if best_plan is None:
        raise Infeasible("no plan found within memory capacity", _closest_deficits(specs, nodes, cap))
    meta = {
        "objective": best_obj,
        "method": method,
        "beam_width": width,
        "beam_truncated": truncated,
        "baseline_objective": inc_obj,
    }
    return PartitionPlan(best_plan.shards, nodes, best_plan.distribution, meta)
