"""Shared input generation: transform graph memoization service."""

from .graph import (
    OPS,
    ConnectedComponent,
    Node,
    TransformGraph,
    canonical_key,
    eval_transform,
    extract_components,
)
from .service import (
    FAILED,
    MATERIALIZING,
    READY,
    SCHEDULED,
    STRICT,
    WEIGHTED,
    CacheEntry,
    MemoTask,
    ReadItem,
    SigService,
    SyntheticRawSource,
    Warehouse,
)
from .replay import SigWorkload, fully_shared_workload, model_graph, pool_component, recount, replay, shared_pool_workload

__all__ = [
    "OPS", "ConnectedComponent", "Node", "TransformGraph", "canonical_key", "eval_transform",
    "extract_components", "FAILED", "MATERIALIZING", "READY", "SCHEDULED", "STRICT", "WEIGHTED",
    "CacheEntry", "MemoTask", "ReadItem", "SigService", "SyntheticRawSource", "Warehouse",
    "SigWorkload", "fully_shared_workload", "model_graph", "pool_component", "recount", "replay",
    "shared_pool_workload",
]
