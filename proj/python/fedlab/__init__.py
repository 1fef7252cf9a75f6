"""Deterministic federated-learning simulation testbed."""

from ._core import (
    __version__,
    dirichlet_partition,
    gate,
    participation_ratio,
    rounds_to_target,
    run_experiment,
    speedup,
    stratified_iid_partition,
)

__all__ = [
    "__version__",
    "dirichlet_partition",
    "gate",
    "participation_ratio",
    "rounds_to_target",
    "run_experiment",
    "speedup",
    "stratified_iid_partition",
]
