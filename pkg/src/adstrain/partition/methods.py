"""Single-method partitioners: row, column and table partitioning."""

from __future__ import annotations

import numpy as np

from ..errors import ConstraintViolation, InvalidArgument
from ..workload import EmbeddingTableSpec
from .plan import (
    BLOCK,
    CYCLIC,
    RANDOM_HASH,
    PartitionPlan,
    RowSet,
    ShardSpec,
    TrafficStats,
    load_imbalance,
    spec_map,
)


def balanced_bounds(total, parts):
    """Split [0, total) into ``parts`` contiguous ranges whose sizes differ by at most 1 (larger first)."""
    base, extra = divmod(total, parts)
    bounds, pos = [], 0
    for i in range(parts):
        size = base + (1 if i < extra else 0)
        bounds.append((pos, pos + size))
        pos += size
    return bounds


def row_sets(vocab, nodes, scheme, seed=0):
    """Row set for each node under ``scheme``; ``None`` where a node gets no rows."""
    if scheme == BLOCK:
        return [RowSet.block(lo, hi) if hi > lo else None for lo, hi in balanced_bounds(vocab, nodes)]
    if scheme == CYCLIC:
        return [RowSet.cyclic(i, nodes) if i < vocab else None for i in range(nodes)]
    if scheme == RANDOM_HASH:
        return [RowSet.hashed(i, nodes, seed) for i in range(nodes)]
    raise InvalidArgument(f"unknown distribution scheme {scheme!r}")


def row_partition(table: EmbeddingTableSpec, nodes: int, scheme: str = CYCLIC, cols=None, seed=0) -> PartitionPlan:
    if nodes < 1:
        raise InvalidArgument("nodes must be >= 1")
    cols = tuple(cols) if cols else (0, table.dim)
    if nodes == 1:
        return PartitionPlan([ShardSpec(table.name, cols, 0)], 1)
    shards = [
        ShardSpec(table.name, cols, i, rs)
        for i, rs in enumerate(row_sets(table.vocab_size, nodes, scheme, seed))
        if rs is not None
    ]
    return PartitionPlan(shards, nodes, {table.name: scheme})


def column_ranges(dim, shard_count):
    return balanced_bounds(dim, shard_count)


def column_partition(table: EmbeddingTableSpec, shard_count: int, nodes=None) -> PartitionPlan:
    """Split a table by width; shard k goes to node k (mod ``nodes`` when given)."""
    if not 1 <= shard_count <= table.dim:
        raise InvalidArgument(f"shard_count must be in [1, {table.dim}]")
    if shard_count > 1 and not table.optimizer.allows_column_split:
        raise ConstraintViolation(
            f"table {table.name!r} uses a row-wise optimizer and cannot be column partitioned"
        )
    n = nodes or shard_count
    shards = [ShardSpec(table.name, r, k % n) for k, r in enumerate(column_ranges(table.dim, shard_count))]
    return PartitionPlan(shards, n)


def table_traffic_bytes(spec: EmbeddingTableSpec, stats: TrafficStats) -> float:
    return stats.total(spec.name) * spec.dim * spec.bytes_per_element


def table_partition(tables, nodes: int, stats: TrafficStats) -> PartitionPlan:
    """Greedy longest-processing-time placement of whole tables.

    Tables are taken in descending traffic (ties: name) and each goes to the
    currently least-loaded node (ties: lowest index).
    """
    if nodes < 1:
        raise InvalidArgument("nodes must be >= 1")
    specs = spec_map(tables)
    order = sorted(specs.values(), key=lambda t: (-table_traffic_bytes(t, stats), t.name))
    load = np.zeros(nodes)
    shards = []
    for t in order:
        n = int(np.argmin(load))
        load[n] += table_traffic_bytes(t, stats)
        shards.append(ShardSpec(t.name, (0, t.dim), n))
    return PartitionPlan(shards, nodes)


def row_cyclic_plan(tables, nodes: int) -> PartitionPlan:
    return PartitionPlan.merge([row_partition(t, nodes, CYCLIC) for t in spec_map(tables).values()], nodes)


def compare_cyclic_block(table: EmbeddingTableSpec, stats: TrafficStats, nodes: int):
    """Load imbalance of cyclic vs block row distribution for one table."""
    rows = stats.rows(table.name)
    if np.any(np.diff(rows) > 0):
        raise InvalidArgument("row statistics must be sorted by non-increasing frequency")
    cyc = load_imbalance(row_partition(table, nodes, CYCLIC), stats, [table]).imbalance
    blk = load_imbalance(row_partition(table, nodes, BLOCK), stats, [table]).imbalance
    return cyc, blk
