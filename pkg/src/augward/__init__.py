"""Augmentation-aware graph classification with fused Gromov-Wasserstein targets."""

__version__ = "0.1.0"

from .augment import AugKind, AugmentedPair, sample
from .distance import DiffKind, FgwResult, SolverConfig, diff_metric, fgwd
from .graph import Dataset, DatasetError, Graph, Split, cycles_vs_stars, load_tu_dataset, stratified_split
from .model import AugWardModel, load_checkpoint, save_checkpoint
from .training import EpochMetrics, NumericError, TrainConfig, evaluate, pcc, train
from .transport import wasserstein_lp

__all__ = [
    "AugKind", "AugmentedPair", "AugWardModel", "Dataset", "DatasetError", "DiffKind", "EpochMetrics",
    "FgwResult", "Graph", "NumericError", "SolverConfig", "Split", "TrainConfig", "cycles_vs_stars",
    "diff_metric", "evaluate", "fgwd", "load_checkpoint", "load_tu_dataset", "pcc", "sample",
    "save_checkpoint", "stratified_split", "train", "wasserstein_lp",
]
