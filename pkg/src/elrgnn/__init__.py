"""Robust node classification with a learned low-rank sparse adjacency."""
from .estimator import TrainConfig, TrainedModel, ablation_variant, fit
from .graph import NodeSplit, SparseGraph

__all__ = ["TrainConfig", "TrainedModel", "ablation_variant", "fit", "NodeSplit", "SparseGraph"]
__version__ = "0.1.0"
