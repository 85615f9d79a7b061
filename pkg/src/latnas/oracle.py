"""Deterministic synthetic quality functions for controller experiments.

Quality rises with latency toward a saturation point (bigger models are
better, with diminishing returns), plus small per-choice bonuses and an
optional frozen noise field, all seeded. Evaluating the same
architecture twice always returns the same value, so these behave like
tabular benchmarks: no training required.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import kernels
from .latency import LatencyModel, LatencyTable
from .space import Architecture, SearchSpace, enumerate_architectures

DEFAULT_BASE_QUALITY = 0.95
DEFAULT_LATENCY_GAIN = 0.5
DEFAULT_BONUS_SCALE = 0.01
PARETO_GUARD = 10**6


@dataclass(frozen=True)
class SyntheticBenchmark:
    seed: int
    latency_gain: float  # a > 0
    saturation: float  # tau > 0, in ms; usually the latency target
    base_quality: float
    bonuses: dict[tuple[int, int], float] = field(hash=False)
    noise_scale: float = 0.0

    def __post_init__(self):
        if self.latency_gain <= 0 or self.saturation <= 0:
            raise ValueError("latency_gain and saturation must be positive")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be nonnegative")


def make_benchmark(
    space: SearchSpace,
    T0: float,
    seed: int = 0,
    latency_gain: float = DEFAULT_LATENCY_GAIN,
    base_quality: float = DEFAULT_BASE_QUALITY,
    bonus_scale: float = DEFAULT_BONUS_SCALE,
    noise_scale: float = 0.0,
) -> SyntheticBenchmark:
    """Benchmark whose quality curve saturates around the target T0."""
    rng = np.random.default_rng(seed)
    bonuses: dict[tuple[int, int], float] = {}
    for d in space.decisions:
        for c in range(d.num_choices):
            bonuses[(d.id, c)] = float(bonus_scale * (2.0 * rng.random() - 1.0))
    return SyntheticBenchmark(
        seed=seed,
        latency_gain=latency_gain,
        saturation=T0,
        base_quality=base_quality,
        bonuses=bonuses,
        noise_scale=noise_scale,
    )


def quality(
    bench: SyntheticBenchmark,
    space: SearchSpace,
    table: LatencyTable,
    arch: Architecture,
    model: LatencyModel | None = None,
) -> float:
    """Q(arch) in [0, 1]; identical on repeated calls."""
    if model is None:
        model = LatencyModel.build(space, table)
    t = model.latency(arch)
    q = bench.base_quality - bench.latency_gain * np.exp(-t / bench.saturation)
    for d in space.decisions:
        q += bench.bonuses[(d.id, arch.choices[d.id])]
    if bench.noise_scale > 0:
        q += bench.noise_scale * kernels.hash_noise(
            bench.seed, np.asarray(arch.choices, dtype=np.int64)
        )
    return float(min(1.0, max(0.0, q)))


def pareto_frontier(
    bench: SyntheticBenchmark,
    space: SearchSpace,
    table: LatencyTable,
    guard: int = PARETO_GUARD,
) -> list[tuple[Architecture, float, float]]:
    """Non-dominated (arch, Q, T) triples, sorted by latency.

    Higher quality at lower-or-equal latency dominates. Spaces above the
    enumeration guard are refused.
    """
    model = LatencyModel.build(space, table)
    scored = [
        (arch, quality(bench, space, table, arch, model=model), model.latency(arch))
        for arch in enumerate_architectures(space, guard=guard)
    ]
    scored.sort(key=lambda item: (item[2], -item[1]))
    frontier: list[tuple[Architecture, float, float]] = []
    best_q = -np.inf
    i = 0
    while i < len(scored):
        j = i
        while j < len(scored) and scored[j][2] == scored[i][2]:
            j += 1
        group = scored[i:j]
        q_max = group[0][1]  # sorted by -Q within equal T
        if q_max > best_q:
            frontier.extend(item for item in group if item[1] == q_max)
            best_q = q_max
        i = j
    return frontier
