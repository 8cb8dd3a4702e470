"""Analytical TensorCore/SparseCore step-time and network-traffic models."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Divergence, InvalidArgument
from .partition.plan import PartitionPlan, spec_map
from .partition.search import GranularityPenalty, plan_objective
from .rng import make_rng
from .workload import TrainingBatch, dedup_rows

SERIALIZED = "serialized"
PIPELINED = "pipelined"
DEDUP_ALL_TO_ALL = "dedup_all_to_all"
ALL_VALUES_REDUCE_SCATTER = "all_values_reduce_scatter"


@dataclass(frozen=True)
class StepCost:
    tc_us: float
    sc_us: float
    mode: str = SERIALIZED

    def __post_init__(self):
        if self.tc_us < 0 or self.sc_us < 0:
            raise InvalidArgument("step times must be non-negative")


@dataclass(frozen=True)
class ContentionModel:
    tc_slowdown: float = 0.05
    sc_slowdown: float = 0.10

    def __post_init__(self):
        if not (math.isfinite(self.tc_slowdown) and math.isfinite(self.sc_slowdown)):
            raise InvalidArgument("slowdowns must be finite")
        if self.tc_slowdown < 0 or self.sc_slowdown < 0:
            raise InvalidArgument("slowdowns must be non-negative")


NO_CONTENTION = ContentionModel(0.0, 0.0)


@dataclass(frozen=True)
class TrafficModel:
    strategy: str = DEDUP_ALL_TO_ALL
    bytes_per_value: int = 4
    node_count: int = 1

    def __post_init__(self):
        if self.strategy not in (DEDUP_ALL_TO_ALL, ALL_VALUES_REDUCE_SCATTER):
            raise InvalidArgument(f"unknown traffic strategy {self.strategy!r}")
        if self.node_count < 1:
            raise InvalidArgument("node_count must be >= 1")


def serialized_step(cost: StepCost) -> float:
    return cost.tc_us + cost.sc_us


def pipelined_step(cost: StepCost, contention: ContentionModel = NO_CONTENTION) -> float:
    """Overlapped step: the slower of the two units, each slowed by contention."""
    return max(cost.tc_us * (1.0 + contention.tc_slowdown), cost.sc_us * (1.0 + contention.sc_slowdown))


def step_time(cost: StepCost, contention: ContentionModel = NO_CONTENTION) -> float:
    return pipelined_step(cost, contention) if cost.mode == PIPELINED else serialized_step(cost)


def network_traffic(batch: TrainingBatch, plan: PartitionPlan, model: TrafficModel, specs) -> int:
    """Bytes injected into the network for one step's embedding exchange.

    Every value is treated as remote (inputs arrive on the host, not on the
    owning SparseCore). With deduplication each unique value is sent once per
    column slice (its id) and its slice of the embedding comes back. Without
    deduplication every occurrence id is sent, and each node owning rows of a
    slice returns a partial segment sum per example, so row-partitioned slices
    cost ``owners * examples * width`` elements.
    """
    specs = spec_map(specs)
    total = 0
    for name, rows in batch.lookups.items():
        shards = plan.shards_of(name)
        if not shards or batch.batch_size == 0:
            continue
        t = specs[name]
        slices = {}
        for s in shards:
            slices.setdefault(s.cols, set()).add(s.node)
        if model.strategy == DEDUP_ALL_TO_ALL:
            n_unique = len(dedup_rows(rows.values).unique_rows)
            for cols in slices:
                total += n_unique * (model.bytes_per_value + (cols[1] - cols[0]) * t.bytes_per_element)
        else:
            n_occ = len(rows.values)
            for cols, owners in slices.items():
                total += n_occ * model.bytes_per_value
                total += len(owners) * batch.batch_size * (cols[1] - cols[0]) * t.bytes_per_element
    return int(total)


def software_dedup_route(valencies, threshold: int):
    """Fractions of examples handled on the TensorCore (valency <= threshold) and SparseCore paths."""
    if threshold < 1:
        raise InvalidArgument("threshold must be >= 1")
    v = np.asarray(valencies)
    if v.size == 0:
        return 1.0, 0.0
    tc = int(np.count_nonzero(v <= threshold))
    return tc / v.size, (v.size - tc) / v.size


def sc_time_us(plan, stats, specs, bytes_per_us: float, penalty: GranularityPenalty = None) -> float:
    """SparseCore time: the plan objective (max node bytes with granularity penalty) over bandwidth."""
    return plan_objective(plan, stats, specs, penalty) / bytes_per_us


# --- stale-gradient toy experiment -----------------------------------------


@dataclass(frozen=True)
class StaleTrainConfig:
    vocab: int = 64
    dim: int = 8
    steps: int = 2000
    learning_rate: float = 0.05
    staleness: int = 1
    seed: int = 7
    batch_size: int = 32
    noise: float = 0.1
    eval_size: int = 1024

    def __post_init__(self):
        if self.staleness not in (0, 1):
            raise InvalidArgument("staleness must be 0 or 1")
        if self.steps < 10:
            raise InvalidArgument("steps must be >= 10")


@dataclass(frozen=True)
class StaleResult:
    final_loss_stale: float
    final_loss_fresh: float
    curve_stale: np.ndarray = field(repr=False)
    curve_fresh: np.ndarray = field(repr=False)

    @property
    def relative_gap(self):
        return abs(self.final_loss_stale - self.final_loss_fresh) / self.final_loss_fresh


def _train(cfg, staleness, data, arm):
    E_true, w_true, xs, ys, ex, ey = data
    rng = make_rng(cfg.seed, "stale-init")
    E = 0.1 * rng.standard_normal((cfg.vocab, cfg.dim))
    w = 0.1 * rng.standard_normal(cfg.dim)
    pending = None
    curve = np.empty(cfg.steps)
    B = cfg.batch_size
    for step in range(cfg.steps):
        x, y = xs[step], ys[step]
        err = E[x] @ w - y
        gE = np.zeros_like(E)
        np.add.at(gE, x, (2.0 / B) * err[:, None] * w[None, :])
        gw = (2.0 / B) * (E[x].T @ err)
        w = w - cfg.learning_rate * gw
        if staleness == 0:
            E = E - cfg.learning_rate * gE
        else:
            if pending is not None:
                E = E - cfg.learning_rate * pending
            pending = gE
        loss = float(np.mean((E[ex] @ w - ey) ** 2))
        if not math.isfinite(loss):
            raise Divergence(step, arm)
        curve[step] = loss
    return curve


def stale_gradient_experiment(cfg: StaleTrainConfig) -> StaleResult:
    """Train embedding + linear readout with fresh and one-step-stale embedding gradients.

    Both arms see identical data and initialization; only the timing of the
    embedding update differs. Loss is squared error on a fixed held-out set
    with label noise, recorded after every step.
    """
    rng = make_rng(cfg.seed, "stale-data")
    E_true = rng.standard_normal((cfg.vocab, cfg.dim))
    w_true = rng.standard_normal(cfg.dim) / math.sqrt(cfg.dim)
    xs = rng.integers(0, cfg.vocab, (cfg.steps, cfg.batch_size))
    ys = (E_true[xs] @ w_true) + cfg.noise * rng.standard_normal((cfg.steps, cfg.batch_size))
    ex = rng.integers(0, cfg.vocab, cfg.eval_size)
    ey = E_true[ex] @ w_true + cfg.noise * rng.standard_normal(cfg.eval_size)
    data = (E_true, w_true, xs, ys, ex, ey)
    fresh = _train(cfg, 0, data, "fresh")
    stale = _train(cfg, cfg.staleness, data, "stale")
    return StaleResult(float(stale[-1]), float(fresh[-1]), stale, fresh)


# --- optimization ladder -----------------------------------------------------

SWEEP_COLUMNS = ("model", "mode", "tc_us", "sc_us", "step_us", "speedup")


def optimization_ladder(model, nodes, true_stats, declared_stats, bytes_per_us,
                        contention: ContentionModel = None, penalty=None, mem_capacity_per_node=math.inf,
                        search_budget=500_000):
    """Step times for the embedding optimization stack, evaluated under ``true_stats``.

    baseline: serialized, row-cyclic partitioning. pipelining: overlapped with
    contention. hybrid: hybrid partitioning searched on ``declared_stats``
    (declared valencies). fdp: hybrid partitioning searched on the
    profiled ``true_stats``. Returns rows with the ``SWEEP_COLUMNS`` keys;
    speedup is relative to baseline.
    """
    from .partition.methods import row_cyclic_plan
    from .partition.search import hybrid_partition

    contention = contention or ContentionModel()
    specs = spec_map(model)
    tc = float(model.dense_step_time_us)
    row_plan = row_cyclic_plan(list(specs.values()), nodes)
    sc_row = sc_time_us(row_plan, true_stats, specs, bytes_per_us, penalty)
    hyb = hybrid_partition(model, nodes, declared_stats, mem_capacity_per_node, search_budget, penalty)
    fdp = hybrid_partition(model, nodes, true_stats, mem_capacity_per_node, search_budget, penalty)
    rows = []
    configs = [
        ("baseline", StepCost(tc, sc_row, SERIALIZED)),
        ("pipelining", StepCost(tc, sc_row, PIPELINED)),
        ("hybrid", StepCost(tc, sc_time_us(hyb, true_stats, specs, bytes_per_us, penalty), PIPELINED)),
        ("fdp", StepCost(tc, sc_time_us(fdp, true_stats, specs, bytes_per_us, penalty), PIPELINED)),
    ]
    base = None
    for mode, cost in configs:
        t = step_time(cost, contention)
        base = t if base is None else base
        rows.append({
            "model": model.name, "mode": mode, "tc_us": cost.tc_us, "sc_us": cost.sc_us,
            "step_us": t, "speedup": base / t if t > 0 else float("inf"),
        })
    return rows


def write_sweep_csv(rows, path_or_file):
    own = isinstance(path_or_file, str)
    f = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.DictWriter(f, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.6g}" if isinstance(r[k], float) else r[k]) for k in SWEEP_COLUMNS})
    finally:
        if own:
            f.close()
