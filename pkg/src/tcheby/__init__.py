"""Multi-objective offline preference optimization with smooth Tchebysheff scalarization."""

__version__ = "0.1.0"

from ._kernels import BACKEND  # noqa: E402
from .core import (ALGORITHMS, ConfigError, ContextGroup, DatasetError, PreferenceVector,  # noqa: E402
                   RewardDataset, RewardStats, RunConfig, Vocabulary, compute_reward_stats, load_dataset,
                   save_dataset)

__all__ = [
    "ALGORITHMS", "BACKEND", "ConfigError", "ContextGroup", "DatasetError", "PreferenceVector", "RewardDataset",
    "RewardStats", "RunConfig", "Vocabulary", "compute_reward_stats", "load_dataset", "save_dataset",
    "__version__",
]
