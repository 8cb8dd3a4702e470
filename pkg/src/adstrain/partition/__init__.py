"""Embedding table partitioning: plans, load imbalance, single-method and hybrid partitioners."""

from .methods import (
    column_partition,
    compare_cyclic_block,
    row_cyclic_plan,
    row_partition,
    table_partition,
)
from .plan import (
    BLOCK,
    CYCLIC,
    RANDOM_HASH,
    LoadReport,
    PartitionPlan,
    RowSet,
    ShardSpec,
    TrafficStats,
    check_coverage,
    load_imbalance,
    memory_bytes,
    node_loads,
    validate_plan,
)
from .search import (
    GranularityPenalty,
    exact_partition_oracle,
    hybrid_partition,
    plan_objective,
    search_space_size,
)

__all__ = [
    "BLOCK", "CYCLIC", "RANDOM_HASH", "GranularityPenalty", "LoadReport", "PartitionPlan",
    "RowSet", "ShardSpec", "TrafficStats", "check_coverage", "column_partition",
    "compare_cyclic_block", "exact_partition_oracle", "hybrid_partition", "load_imbalance",
    "memory_bytes", "node_loads", "plan_objective", "row_cyclic_plan", "row_partition",
    "search_space_size", "table_partition", "validate_plan",
]
