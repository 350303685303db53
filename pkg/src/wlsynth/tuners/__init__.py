"""Tuning engines: gradient descent, a genetic-algorithm baseline, and grid search."""

from .brute import DEFAULT_CAP, GridResult, GridTooLarge, brute_force, grid_size, level_indices, make_grid
from .common import (CONVERGED, ERROR, EXHAUSTED, MAX_EPOCHS, TARGET_MET, Check, EpochError,
                     EpochRecord, Scored, Scorer, TuningReport)
from .ga import GASettings, breed, ga_tune
from .gd import GDSettings, epoch_rng, gd_epoch, gd_tune

__all__ = [
    "CONVERGED", "DEFAULT_CAP", "ERROR", "EXHAUSTED", "MAX_EPOCHS", "TARGET_MET", "Check",
    "EpochError", "EpochRecord", "GASettings", "GDSettings", "GridResult", "GridTooLarge",
    "Scored", "Scorer", "TuningReport", "breed", "brute_force", "epoch_rng", "ga_tune",
    "gd_epoch", "gd_tune", "grid_size", "level_indices", "make_grid",
]
