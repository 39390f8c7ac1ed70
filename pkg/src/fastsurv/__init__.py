"""Fast Cox proportional hazards training with surrogate coordinate descent."""

import os

__version__ = "0.1.0"


def _apply_thread_cap():
    import numba
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the bundled TBB is often too old; skip the noisy probe
        numba.config.THREADING_LAYER = "workqueue"
    val = os.environ.get("FASTSURV_THREADS")
    if not val:
        return
    numba.set_num_threads(max(1, min(int(val), numba.config.NUMBA_NUM_THREADS)))


_apply_thread_cap()

from .data import (DataError, SurvivalDataset, SortedSurvivalDataset, load_csv, save_csv,  # noqa: E402
                   sort_and_index, binarize_features, kfold_split, generate_synthetic)
from .core import loss, coordinate_partials, lipschitz_constants  # noqa: E402
from .optimizers import FitConfig, FitResult, fit, benchmark  # noqa: E402

__all__ = [
    "DataError", "SurvivalDataset", "SortedSurvivalDataset", "load_csv", "save_csv",
    "sort_and_index", "binarize_features", "kfold_split", "generate_synthetic",
    "loss", "coordinate_partials", "lipschitz_constants",
    "FitConfig", "FitResult", "fit", "benchmark",
]
