"""Parameter-server embedding model: row sharding, table stacking, RPC accounting.

RPC fan-out convention: one TPU core acts as one worker. Without coalescing a
worker sends one fetch RPC per (table, PS) and one update RPC per (table, PS)
each step, so each PS sees ``cores * tables`` RPCs per direction. With
coalescing each (worker, PS) pair exchanges exactly one fetch and one update
RPC per batch carrying every table's values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidArgument
from .partition.methods import balanced_bounds
from .partition.plan import BLOCK, CYCLIC, spec_map
from .workload import TrainingBatch, dedup_rows


def stack_key(t):
    return (t.dim, t.optimizer.kind, t.optimizer.params_width_multiplier)


def stack_tables(tables):
    """Group tables with equal width and optimizer parameters.

    Groups are ordered by their first member's position; members keep input order.
    """
    groups = {}
    for t in spec_map(tables).values():
        groups.setdefault(stack_key(t), []).append(t.name)
    return list(groups.values())


@dataclass(frozen=True)
class PsLayout:
    """Row placement of (possibly stacked) tables over parameter servers.

    Each stacked group forms one variable whose rows are the members' rows
    concatenated in group order; the variable is split over PS by ``scheme``.
    """

    ps_count: int
    scheme: str
    stacked_groups: tuple
    vocab: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ps_count < 1:
            raise InvalidArgument("ps_count must be >= 1")
        if self.scheme not in (BLOCK, CYCLIC):
            raise InvalidArgument(f"unknown scheme {self.scheme!r}")
        if self.scheme != CYCLIC and any(len(g) > 1 for g in self.stacked_groups):
            raise InvalidArgument("stacked groups require cyclic distribution")

    def _group_of(self, table):
        for g in self.stacked_groups:
            if table in g:
                return g
        raise InvalidArgument(f"table {table!r} not in layout")

    def row_offset(self, table):
        g = self._group_of(table)
        return sum(self.vocab[m] for m in g[: g.index(table)])

    def ps_of(self, table, rows):
        """PS index for each row index of ``table``."""
        rows = np.asarray(rows, dtype=np.int64)
        g = self._group_of(table)
        grows = rows + self.row_offset(table)
        if self.scheme == CYCLIC:
            return grows % self.ps_count
        total = sum(self.vocab[m] for m in g)
        edges = np.array([hi for _, hi in balanced_bounds(total, self.ps_count)])
        return np.searchsorted(edges, grows, side="right")

    @property
    def n_tables_effective(self):
        return len(self.stacked_groups)


def shard_rows_over_ps(tables, ps_count: int, scheme: str = CYCLIC, stack: bool = False) -> PsLayout:
    specs = spec_map(tables)
    groups = stack_tables(specs.values()) if stack else [[n] for n in specs]
    return PsLayout(ps_count, scheme, tuple(tuple(g) for g in groups), {n: t.vocab_size for n, t in specs.items()})


@dataclass(frozen=True)
class RpcAccounting:
    per_ps_rpcs_per_step: int
    rpcs_per_worker_ps_per_batch: int
    total_rpcs: int
    coalesced: bool
    total_payload_bytes: int = 0


def rpc_count(n_cores: int, n_tables_effective: int, ps_count: int, coalesced: bool, batches: int = 1,
              payload_bytes: int = 0) -> RpcAccounting:
    """RPC counts for one training step per worker.

    ``per_ps_rpcs_per_step`` counts one direction (fetch), which gives
    ``cores * tables`` uncoalesced. ``rpcs_per_worker_ps_per_batch`` counts both
    directions: 2 coalesced, ``2 * tables`` uncoalesced.
    """
    for name, v in (("n_cores", n_cores), ("n_tables_effective", n_tables_effective),
                    ("ps_count", ps_count), ("batches", batches)):
        if v < 1:
            raise InvalidArgument(f"{name} must be >= 1")
    per_pair_dir = 1 if coalesced else n_tables_effective
    per_ps = n_cores * per_pair_dir
    return RpcAccounting(
        per_ps_rpcs_per_step=per_ps,
        rpcs_per_worker_ps_per_batch=2 * per_pair_dir,
        total_rpcs=2 * per_ps * ps_count * batches,
        coalesced=coalesced,
        total_payload_bytes=payload_bytes,
    )


def ps_payload(layout: PsLayout, batch: TrainingBatch, specs, id_bytes=4):
    """Per-PS (fetch+update payload bytes, unique rows touched) for one batch."""
    specs = spec_map(specs)
    payload = np.zeros(layout.ps_count)
    rows_touched = np.zeros(layout.ps_count)
    for name, rows in batch.lookups.items():
        t = specs[name]
        uniq = dedup_rows(rows.values).unique_rows
        if uniq.size == 0:
            continue
        ps = np.ascontiguousarray(layout.ps_of(name, uniq), dtype=np.int64)
        ones = np.ones(uniq.size)
        rows_touched += kernels.node_bytes(ones, ps, layout.ps_count, 1.0)
        # ids out, values back, gradients out
        payload += kernels.node_bytes(ones, ps, layout.ps_count, float(id_bytes + 2 * t.row_bytes))
    return payload, rows_touched


def ps_step_time(layout: PsLayout, batch: TrainingBatch, acct: RpcAccounting, specs,
                 rpc_overhead_us: float, per_byte_us: float, lookup_us_per_row: float = 0.01,
                 id_bytes: int = 4) -> float:
    """Slowest PS: RPC overhead + payload transfer + row lookup work."""
    payload, rows = ps_payload(layout, batch, specs, id_bytes)
    rpcs = 2 * acct.per_ps_rpcs_per_step
    per_ps = rpc_overhead_us * rpcs + per_byte_us * payload + lookup_us_per_row * rows
    return float(per_ps.max())
