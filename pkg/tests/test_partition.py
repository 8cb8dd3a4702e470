import itertools
import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adstrain.errors import ConstraintViolation, Infeasible, InvalidArgument, SearchSpaceTooLarge
from adstrain.partition import (
    BLOCK,
    CYCLIC,
    RANDOM_HASH,
    GranularityPenalty,
    PartitionPlan,
    RowSet,
    ShardSpec,
    TrafficStats,
    check_coverage,
    column_partition,
    compare_cyclic_block,
    exact_partition_oracle,
    hybrid_partition,
    load_imbalance,
    memory_bytes,
    plan_objective,
    row_cyclic_plan,
    row_partition,
    search_space_size,
    table_partition,
    validate_plan,
)
from adstrain.partition.search import table_options
from adstrain.rng import make_rng
from adstrain.workload import EmbeddingTableSpec, ModelSpec, OptimizerKind

from conftest import EXAMPLE_ROWS, random_instance, two_table


def cell_owners(plan, specs):
    """Count owners of every (row, col) cell by brute enumeration."""
    specs = {t.name: t for t in specs}
    grid = {n: np.zeros((t.vocab_size, t.dim), dtype=int) for n, t in specs.items()}
    for s in plan.shards:
        rows = s.rows.materialize(specs[s.table].vocab_size)
        grid[s.table][np.ix_(rows, np.arange(*s.cols))] += 1
    return grid


def exact_imbalance(plan, rows, specs):
    """Max-over-mean load imbalance in rational arithmetic, independent of the float path."""
    specs = {t.name: t for t in specs}
    B = [Fraction(0)] * plan.node_count
    for s in plan.shards:
        t = specs[s.table]
        w = rows[s.table]
        for r in s.rows.materialize(t.vocab_size):
            B[s.node] += Fraction(w[int(r)]) * (s.cols[1] - s.cols[0]) * t.bytes_per_element
    total = sum(B)
    return plan.node_count * max(B) / total


EXAMPLE_FRAC = {"T0": [Fraction(x) for x in ("0.6", "0.3", "0.2", "0.1")]}
EXAMPLE_FRAC["T1"] = EXAMPLE_FRAC["T0"]


def table_column_plan():
    return PartitionPlan(
        [
            ShardSpec("T0", (0, 32), 0), ShardSpec("T0", (32, 64), 1),
            ShardSpec("T1", (0, 32), 2), ShardSpec("T1", (32, 64), 3),
        ],
        4,
    )


class TestWorkedExample:
    def test_row_plan_imbalance_two(self):
        model, stats = two_table()
        plan = row_cyclic_plan(model.tables, 4)
        assert exact_imbalance(plan, EXAMPLE_FRAC, model.tables) == 2
        assert load_imbalance(plan, stats, model).imbalance == pytest.approx(2.0, abs=1e-12)

    def test_table_column_plan_imbalance_one(self):
        model, stats = two_table()
        plan = table_column_plan()
        assert exact_imbalance(plan, EXAMPLE_FRAC, model.tables) == 1
        assert load_imbalance(plan, stats, model).imbalance == pytest.approx(1.0, abs=1e-12)

    def test_hybrid_and_oracle_find_balanced_plan(self):
        model, stats = two_table()
        for plan in (hybrid_partition(model, 4, stats), exact_partition_oracle(model, 4, stats)):
            assert exact_imbalance(plan, EXAMPLE_FRAC, model.tables) == 1
            assert plan.min_width() == 32
            validate_plan(plan, model)


def test_single_node_imbalance_one():
    model, stats = two_table()
    plan = row_cyclic_plan(model.tables, 1)
    assert load_imbalance(plan, stats, model).imbalance == 1.0


def test_zero_traffic_flagged():
    model, _ = two_table()
    stats = TrafficStats({"T0": [0] * 4, "T1": [0] * 4})
    with pytest.warns(RuntimeWarning):
        rep = load_imbalance(row_cyclic_plan(model.tables, 2), stats, model)
    assert rep.imbalance == 1.0 and rep.zero_traffic


class TestRowPartition:
    def test_block_one_row_each(self):
        t = EmbeddingTableSpec("t", 4, 8)
        plan = row_partition(t, 4, BLOCK)
        assert [s.rows.materialize(4).tolist() for s in plan.shards] == [[0], [1], [2], [3]]

    def test_cyclic_stride(self):
        t = EmbeddingTableSpec("t", 8, 8)
        plan = row_partition(t, 4, CYCLIC)
        assert {s.node: s.rows.materialize(8).tolist() for s in plan.shards} == {i: [i, i + 4] for i in range(4)}

    def test_block_uneven_counts(self):
        t = EmbeddingTableSpec("t", 7, 8)
        plan = row_partition(t, 4, BLOCK)
        grid = cell_owners(plan, [t])["t"]
        assert np.all(grid == 1)
        counts = [s.rows.count(7) for s in sorted(plan.shards, key=lambda s: s.node)]
        assert counts == [2, 2, 2, 1]

    def test_hash_is_reproducible_and_covers(self):
        t = EmbeddingTableSpec("t", 100, 4)
        a = row_partition(t, 3, RANDOM_HASH, seed=5)
        assert a == row_partition(t, 3, RANDOM_HASH, seed=5)
        assert np.all(cell_owners(a, [t])["t"] == 1)
        assert check_coverage(a, [t]) == []


class TestColumnPartition:
    def test_even_split(self):
        plan = column_partition(EmbeddingTableSpec("t", 4, 64), 2)
        assert [s.cols for s in plan.shards] == [(0, 32), (32, 64)]

    def test_identity(self):
        plan = column_partition(EmbeddingTableSpec("t", 4, 64), 1)
        assert [s.cols for s in plan.shards] == [(0, 64)]

    def test_uneven_widths(self):
        t = EmbeddingTableSpec("t", 3, 10)
        plan = column_partition(t, 3)
        assert sorted(s.width for s in plan.shards) == [3, 3, 4]
        assert np.all(cell_owners(plan, [t])["t"] == 1)

    def test_row_wise_optimizer_refuses_split(self):
        t = EmbeddingTableSpec("t", 4, 64, optimizer=OptimizerKind("row_wise"))
        with pytest.raises(ConstraintViolation):
            column_partition(t, 2)
        assert len(column_partition(t, 1).shards) == 1

    def test_bad_shard_count(self):
        with pytest.raises(InvalidArgument):
            column_partition(EmbeddingTableSpec("t", 4, 4), 5)


def _assignment_oracle(traffic, nodes):
    best = math.inf
    for assign in itertools.product(range(nodes), repeat=len(traffic)):
        loads = [0.0] * nodes
        for w, n in zip(traffic, assign):
            loads[n] += w
        best = min(best, max(loads))
    return best


class TestTablePartition:
    def _tables(self, traffic):
        tables = [EmbeddingTableSpec(f"t{i}", 1, 1) for i in range(len(traffic))]
        return tables, TrafficStats({t.name: [w] for t, w in zip(tables, traffic)})

    def test_equal_tables(self):
        tables, stats = self._tables([1.0, 1.0])
        assert load_imbalance(table_partition(tables, 2, stats), stats, tables).imbalance == 1.0

    def test_greedy_reaches_optimum(self):
        tables, stats = self._tables([4.0, 3.0, 2.0, 1.0])
        rep = load_imbalance(table_partition(tables, 2, stats), stats, tables)
        assert sorted(rep.bytes_per_node.tolist()) == [20.0, 20.0]
        assert rep.max_bytes == _assignment_oracle([16, 12, 8, 4], 2)

    def test_single_table_many_nodes(self):
        tables, stats = self._tables([2.0])
        assert load_imbalance(table_partition(tables, 4, stats), stats, tables).imbalance == 4.0

    def test_ties_go_to_lowest_node(self):
        tables, stats = self._tables([1.0, 1.0, 1.0])
        plan = table_partition(tables, 4, stats)
        assert sorted(s.node for s in plan.shards) == [0, 1, 2]


class TestMemory:
    def test_whole_table(self):
        t = EmbeddingTableSpec("t", 4, 64)
        plan = PartitionPlan([ShardSpec("t", (0, 64), 0)], 2)
        assert memory_bytes(plan, [t]).tolist() == [1024.0, 0.0]

    def test_column_split(self):
        t = EmbeddingTableSpec("t", 4, 64)
        assert memory_bytes(column_partition(t, 2), [t]).tolist() == [512.0, 512.0]

    def test_random_plans_match_cell_count(self):
        rng = make_rng(21)
        for _ in range(40):
            model, nodes, stats, _ = random_instance(rng)
            plan = hybrid_partition(model, nodes, stats)
            want = np.zeros(nodes)
            for s in plan.shards:
                t = model.table(s.table)
                cells = len(s.rows.materialize(t.vocab_size)) * s.width
                want[s.node] += cells * t.bytes_per_element * t.optimizer.params_width_multiplier
            assert np.array_equal(memory_bytes(plan, model), want)


class TestCyclicBlock:
    def test_hand_computed(self):
        t = EmbeddingTableSpec("t", 4, 1)
        stats = TrafficStats({"t": EXAMPLE_ROWS})
        cyc, blk = compare_cyclic_block(t, stats, 2)
        assert blk == pytest.approx(1.5, abs=1e-12)
        assert cyc == pytest.approx(4 / 3, abs=1e-12)

    def test_uniform(self):
        t = EmbeddingTableSpec("t", 64, 4)
        cyc, blk = compare_cyclic_block(t, TrafficStats.uniform([t]), 4)
        assert cyc == blk == 1.0

    def test_zipf_direct_evaluation(self):
        t = EmbeddingTableSpec("t", 1024, 8, zipf_s=1.2)
        stats = TrafficStats.expected_zipf([t], 1)
        w = stats.rows("t")
        cyc_loads = [w[i::8].sum() for i in range(8)]
        blk_loads = [w[i * 128:(i + 1) * 128].sum() for i in range(8)]
        cyc, blk = compare_cyclic_block(t, stats, 8)
        assert cyc == pytest.approx(8 * max(cyc_loads) / w.sum(), rel=1e-12)
        assert blk == pytest.approx(8 * max(blk_loads) / w.sum(), rel=1e-12)
        assert cyc < blk

    @given(st.lists(st.floats(0.01, 100), min_size=2, max_size=64, unique=True), st.integers(2, 8))
    @settings(max_examples=200, deadline=None)
    def test_cyclic_never_worse_when_sorted(self, freqs, n):
        freqs = sorted(freqs, reverse=True)
        t = EmbeddingTableSpec("t", len(freqs), 2)
        cyc, blk = compare_cyclic_block(t, TrafficStats({"t": freqs}), n)
        assert cyc <= blk + 1e-12


def brute_force_objective(model, nodes, stats, cap=math.inf, column_splits=(1, 2)):
    """Enumerate every option tuple, assemble a plan, score it with plan_objective."""
    penalty = GranularityPenalty()
    options = [table_options(t, nodes, stats, penalty, column_splits) for t in model.tables]
    best = math.inf
    for combo in itertools.product(*options):
        plan = PartitionPlan([s for o in combo for s in o.shards], nodes)
        if np.any(memory_bytes(plan, model) > cap):
            continue
        best = min(best, plan_objective(plan, stats, model, penalty))
    return best


class TestSearch:
    def test_oracle_matches_brute_force(self):
        rng = make_rng(31)
        for _ in range(40):
            model, nodes, stats, cap = random_instance(rng, max_tables=3, max_nodes=3, max_vocab=5, tight_memory=True)
            want = brute_force_objective(model, nodes, stats, cap)
            if not math.isfinite(want):
                with pytest.raises(Infeasible):
                    exact_partition_oracle(model, nodes, stats, cap)
                continue
            got = exact_partition_oracle(model, nodes, stats, cap)
            assert plan_objective(got, stats, model) == pytest.approx(want, rel=1e-9)

    def test_hybrid_properties_on_random_instances(self):
        rng = make_rng(32)
        for _ in range(60):
            model, nodes, stats, _ = random_instance(rng)
            plan = hybrid_partition(model, nodes, stats)
            validate_plan(plan, model)
            assert all(np.all(g == 1) for g in cell_owners(plan, model.tables).values())
            obj = plan_objective(plan, stats, model)
            base = min(
                plan_objective(row_cyclic_plan(model.tables, nodes), stats, model),
                plan_objective(table_partition(model.tables, nodes, stats), stats, model),
            )
            assert obj <= base + 1e-9 * base
            rep = load_imbalance(plan, stats, model)
            assert 1 - 1e-12 <= rep.imbalance <= nodes + 1e-12
            for s in plan.shards:
                t = model.table(s.table)
                if not t.optimizer.allows_column_split:
                    assert s.cols == (0, t.dim)
            oracle = plan_objective(exact_partition_oracle(model, nodes, stats), stats, model)
            assert oracle <= obj + 1e-9 * obj

    def test_single_tiny_table_single_node(self):
        t = EmbeddingTableSpec("t", 1, 4)
        model = ModelSpec("m", [t])
        stats = TrafficStats.uniform([t])
        for fn in (hybrid_partition, exact_partition_oracle):
            plan = fn(model, 1, stats)
            assert plan.shards == (ShardSpec("t", (0, 4), 0),)
            assert load_imbalance(plan, stats, model).imbalance == 1.0

    def test_infeasible_lists_deficits(self):
        model, stats = two_table()
        with pytest.raises(Infeasible) as exc:
            hybrid_partition(model, 4, stats, mem_capacity_per_node=100)
        assert exc.value.deficits and all(v > 0 for v in exc.value.deficits.values())

    def test_oracle_refuses_large_space(self):
        tables = [EmbeddingTableSpec(f"t{i}", 64, 64) for i in range(8)]
        model = ModelSpec("big", tables)
        stats = TrafficStats.uniform(tables)
        assert search_space_size(model, 8, stats) > 1e7
        with pytest.raises(SearchSpaceTooLarge) as exc:
            exact_partition_oracle(model, 8, stats)
        assert exc.value.size > exc.value.limit

    def test_deterministic(self):
        rng = make_rng(33)
        model, nodes, stats, _ = random_instance(rng, max_tables=4, max_nodes=4)
        assert hybrid_partition(model, nodes, stats) == hybrid_partition(model, nodes, stats)


def test_plan_json_roundtrip():
    model, stats = two_table()
    plan = hybrid_partition(model, 4, stats)
    again = PartitionPlan.from_dict(json.loads(plan.to_json()))
    assert again == plan
    assert set(json.loads(plan.to_json())) >= {"shards", "node_count", "distribution"}


def test_validate_plan_catches_overlap():
    t = EmbeddingTableSpec("t", 4, 8)
    bad = PartitionPlan([ShardSpec("t", (0, 8), 0), ShardSpec("t", (0, 8), 1, RowSet.block(0, 2))], 2)
    with pytest.raises(InvalidArgument):
        validate_plan(bad, [t])
    gap = PartitionPlan([ShardSpec("t", (0, 4), 0)], 1)
    assert check_coverage(gap, [t])
