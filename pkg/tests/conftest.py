import numpy as np
import pytest

from adstrain.partition import TrafficStats
from adstrain.workload import EmbeddingTableSpec, ModelSpec, OptimizerKind

EXAMPLE_ROWS = [0.6, 0.3, 0.2, 0.1]

# filled by the acceptance tests, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l[2:4])):
            terminalreporter.write_line(line)


def two_table():
    tables = [EmbeddingTableSpec("T0", 4, 64), EmbeddingTableSpec("T1", 4, 64)]
    model = ModelSpec("two_table", tables)
    stats = TrafficStats({"T0": EXAMPLE_ROWS, "T1": EXAMPLE_ROWS})
    return model, stats


def random_instance(rng, max_tables=4, max_nodes=4, max_vocab=8, tight_memory=False):
    """Small partitioning instance: (model, nodes, stats, capacity)."""
    n_tables = int(rng.integers(1, max_tables + 1))
    nodes = int(rng.integers(1, max_nodes + 1))
    tables, rows = [], {}
    for i in range(n_tables):
        kind = "row_wise" if rng.random() < 0.25 else "element_wise"
        t = EmbeddingTableSpec(
            f"t{i}", int(rng.integers(1, max_vocab + 1)), int(rng.choice([8, 16, 32, 64])),
            optimizer=OptimizerKind(kind, int(rng.integers(1, 3))),
        )
        tables.append(t)
        rows[t.name] = np.round(rng.random(t.vocab_size) * 10, 3)
    model = ModelSpec("rand", tables)
    cap = np.inf
    if tight_memory:
        total = sum(t.vocab_size * t.dim * 4 * t.optimizer.params_width_multiplier for t in tables)
        cap = float(total / nodes * rng.uniform(1.0, 2.0))
    return model, nodes, TrafficStats(rows), cap


@pytest.fixture
def two_table_instance():
    return two_table()
