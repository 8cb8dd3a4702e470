import itertools

import numpy as np
import pytest

from adstrain.errors import InvalidArgument
from adstrain.execcost import (
    ALL_VALUES_REDUCE_SCATTER,
    DEDUP_ALL_TO_ALL,
    NO_CONTENTION,
    PIPELINED,
    ContentionModel,
    StaleTrainConfig,
    StepCost,
    TrafficModel,
    network_traffic,
    pipelined_step,
    serialized_step,
    software_dedup_route,
    stale_gradient_experiment,
    write_sweep_csv,
)
from adstrain.partition import row_cyclic_plan
from adstrain.rng import make_rng
from adstrain.workload import EmbeddingTableSpec, batch_from_lists


def test_serialized_examples():
    assert serialized_step(StepCost(100, 50)) == 150
    assert serialized_step(StepCost(0, 50)) == 50
    rng = make_rng(0)
    for tc, sc in rng.uniform(0, 1e4, (100, 2)):
        assert serialized_step(StepCost(tc, sc)) == tc + sc


def test_pipelined_examples():
    assert pipelined_step(StepCost(100, 50, PIPELINED), NO_CONTENTION) == 100
    assert pipelined_step(StepCost(100, 100, PIPELINED), ContentionModel(0.1, 0.0)) == pytest.approx(110)


def test_pipelined_zero_contention_is_max_and_never_slower():
    grid = np.linspace(0, 1000, 41)
    for tc, sc in itertools.product(grid, grid):
        c = StepCost(tc, sc)
        assert pipelined_step(c) == max(tc, sc)
        assert pipelined_step(c) <= serialized_step(c)


def test_pipelined_wins_within_slowdown_bound():
    # with both slowdowns at most min/max, max(a(1+x), b(1+y)) <= a + b
    grid = np.linspace(1, 500, 25)
    for tc, sc in itertools.product(grid, grid):
        bound = min(tc, sc) / max(tc, sc)
        for f in (0.0, 0.5, 1.0):
            cm = ContentionModel(f * bound, f * bound)
            assert pipelined_step(StepCost(tc, sc), cm) <= serialized_step(StepCost(tc, sc)) * (1 + 1e-12)


def test_contention_validation():
    with pytest.raises(InvalidArgument):
        ContentionModel(float("inf"), 0)
    with pytest.raises(InvalidArgument):
        StepCost(-1, 0)


TABLE = EmbeddingTableSpec("t", 16, 8)


def _traffic(batch, n, strategy):
    return network_traffic(batch, row_cyclic_plan([TABLE], n), TrafficModel(strategy, 4, n), [TABLE])


def test_dedup_traffic_invariant_in_node_count():
    batch = batch_from_lists({"t": [[5]] * 1000})
    got = [_traffic(batch, n, DEDUP_ALL_TO_ALL) for n in (2, 4, 8)]
    # one id plus one 8x4-byte row
    assert got == [4 + 32] * 3


def test_all_values_traffic_grows_with_nodes():
    batch = batch_from_lists({"t": [[5]] * 1000})
    got = [_traffic(batch, n, ALL_VALUES_REDUCE_SCATTER) for n in (2, 4, 8)]
    assert got == [1000 * 4 + n * 1000 * 32 for n in (2, 4, 8)]
    assert got[0] < got[1] < got[2]


def test_empty_batch_no_traffic():
    batch = batch_from_lists({"t": []})
    for s in (DEDUP_ALL_TO_ALL, ALL_VALUES_REDUCE_SCATTER):
        assert _traffic(batch, 4, s) == 0


def test_software_dedup_route():
    assert software_dedup_route([1] * 50, 8) == (1.0, 0.0)
    assert software_dedup_route([1000] * 50, 8) == (0.0, 1.0)
    v = make_rng(1).integers(0, 40, 999)
    tc, sc = software_dedup_route(v, 8)
    assert tc == sum(1 for x in v if x <= 8) / 999
    assert tc + sc == pytest.approx(1.0)
    with pytest.raises(InvalidArgument):
        software_dedup_route(v, 0)


def test_stale_experiment_zero_staleness_identical():
    r = stale_gradient_experiment(StaleTrainConfig(vocab=16, dim=4, steps=50, staleness=0))
    assert np.array_equal(r.curve_stale, r.curve_fresh)


def test_stale_experiment_zero_lr_constant():
    r = stale_gradient_experiment(StaleTrainConfig(vocab=16, dim=4, steps=30, learning_rate=0.0))
    assert np.all(r.curve_fresh == r.curve_fresh[0])
    assert np.all(r.curve_stale == r.curve_fresh[0])


def test_stale_experiment_deterministic():
    cfg = StaleTrainConfig(vocab=16, dim=4, steps=100)
    a, b = stale_gradient_experiment(cfg), stale_gradient_experiment(cfg)
    assert np.array_equal(a.curve_stale, b.curve_stale)
    assert np.array_equal(a.curve_fresh, b.curve_fresh)


def test_stale_config_validation():
    with pytest.raises(InvalidArgument):
        StaleTrainConfig(staleness=2)
    with pytest.raises(InvalidArgument):
        StaleTrainConfig(steps=5)


def test_sweep_csv_columns(tmp_path):
    p = tmp_path / "s.csv"
    write_sweep_csv([{"model": "m", "mode": "baseline", "tc_us": 1.0, "sc_us": 2.0, "step_us": 3.0, "speedup": 1.0}], str(p))
    assert p.read_text().splitlines()[0] == "model,mode,tc_us,sc_us,step_us,speedup"
