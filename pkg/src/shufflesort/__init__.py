"""Gradient-based permutation learning with N parameters (ShuffleSoftSort) and baselines."""
from .config import TrainConfig
from .objective import GridShape, LossBreakdown, quality, total_loss
from .permutation import apply_hard, harden, is_valid, softsort
from .shuffler import TauSchedule, run_shuffle_softsort, run_single_softsort

__all__ = ["GridShape", "LossBreakdown", "TauSchedule", "TrainConfig", "apply_hard", "harden",
           "is_valid", "quality", "run_shuffle_softsort", "run_single_softsort", "softsort",
           "total_loss"]
