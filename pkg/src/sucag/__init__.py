"""Curvature-aided incremental gradient methods over simulated agent networks."""

from .graph import Graph, generate_topology, is_connected, random_walk_step
from .objectives import (Dataset, LogisticSuite, QuadraticSuite, SmoothnessConstants, generate_synthetic,
                         random_quadratic)
from .optim import OptimizerState, estimator, recompute_aggregates, step, update_aggregates

__all__ = [
    "Graph", "generate_topology", "is_connected", "random_walk_step",
    "Dataset", "LogisticSuite", "QuadraticSuite", "SmoothnessConstants", "generate_synthetic",
    "random_quadratic",
    "OptimizerState", "estimator", "recompute_aggregates", "step", "update_aggregates",
]
