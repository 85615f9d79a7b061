"""Latency-constrained neural architecture search at desk scale.

Categorical search spaces, a REINFORCE controller with three reward
shapes, a lookup-table latency model with rejection sampling, a
weight-sharing toy supernetwork (channel masking, op collapsing, op and
filter warmup, rematerialized backward), and a random-search baseline.
"""

from .backend import BACKEND, compiled_available
from .controller import (
    ControllerState,
    Policy,
    RLSchedule,
    argmax_architecture,
    entropy,
    reinforce_step,
    rl_learning_rate,
    sample,
)
from .latency import (
    LatencyTable,
    LatencyTarget,
    RejectionExhausted,
    arch_latency,
    make_synthetic_table,
    rejection_sample,
)
from .loop import SearchConfig, SearchResult, repeat_search, run_search, track_latency_stats
from .oracle import SyntheticBenchmark, make_benchmark, pareto_frontier, quality
from .rewards import RewardConfig, contour_grid, reward
from .space import (
    Architecture,
    Decision,
    SearchSpace,
    build_space,
    cardinality,
    filter_choices,
    sample_uniform,
    validate,
)
from .supernet import (
    SupernetConfig,
    SupernetState,
    WarmupSchedule,
    estimate_quality,
    extract_standalone,
    forward,
    grad,
    init_supernet,
    make_dataset,
    mask_channels,
    train_step,
    warmup_prob,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Architecture",
    "ControllerState",
    "Decision",
    "LatencyTable",
    "LatencyTarget",
    "Policy",
    "RLSchedule",
    "RejectionExhausted",
    "RewardConfig",
    "SearchConfig",
    "SearchResult",
    "SearchSpace",
    "SupernetConfig",
    "SupernetState",
    "SyntheticBenchmark",
    "WarmupSchedule",
    "arch_latency",
    "argmax_architecture",
    "build_space",
    "cardinality",
    "compiled_available",
    "contour_grid",
    "entropy",
    "estimate_quality",
    "extract_standalone",
    "filter_choices",
    "forward",
    "grad",
    "init_supernet",
    "make_benchmark",
    "make_dataset",
    "make_synthetic_table",
    "mask_channels",
    "pareto_frontier",
    "quality",
    "reinforce_step",
    "rejection_sample",
    "repeat_search",
    "reward",
    "rl_learning_rate",
    "run_search",
    "sample",
    "sample_uniform",
    "track_latency_stats",
    "train_step",
    "validate",
    "warmup_prob",
]
