"""Lookup-table latency model and latency-window rejection sampling.

An architecture's latency is the sum of its selected ops' table entries.
Table keys follow the canonical schema ``kind:block:choice-label``
(e.g. ``kernel:3:5``), one entry per decision choice. A block whose
skip-capable decision selects ``skip`` contributes only the skip entry.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .backend import kernels
from .space import Architecture, Decision, SearchSpace, sample_uniform

REJECTION_CHUNK = 1024


class LatencyKeyError(KeyError):
    """A selected op descriptor has no table entry."""

    def __init__(self, key: str):
        super().__init__(key)
        self.key = key

    def __str__(self) -> str:
        return f"latency table has no entry for op descriptor {self.key!r}"


class RejectionExhausted(RuntimeError):
    """Rejection sampling ran out of attempts."""

    def __init__(self, attempts: int, accepted: int, target: "LatencyTarget"):
        self.attempts = attempts
        self.accepted = accepted
        self.target = target
        super().__init__(
            f"no architecture within {target.T0} +/- {target.tolerance} ms "
            f"after {attempts} attempts ({accepted} accepted)"
        )


def op_key(decision: Decision, choice: int) -> str:
    """Canonical table key for one decision choice."""
    return f"{decision.kind}:{decision.block_index}:{decision.choices[choice]}"


@dataclass(frozen=True)
class LatencyTable:
    entries: Mapping[str, float]

    def __post_init__(self):
        for k, v in self.entries.items():
            if v < 0:
                raise ValueError(f"negative latency for {k!r}: {v}")

    def __getitem__(self, key: str) -> float:
        try:
            return self.entries[key]
        except KeyError:
            raise LatencyKeyError(key) from None


@dataclass(frozen=True)
class LatencyTarget:
    T0: float
    tolerance: float = 1.0

    def __post_init__(self):
        if self.T0 <= 0:
            raise ValueError("target latency must be positive")
        if self.tolerance < 0:
            raise ValueError("tolerance must be nonnegative")


@dataclass
class LatencyModel:
    """Kernel-ready view of (space, table): flat per-choice latencies plus
    the decision/group/block index arrays the backends consume."""

    space: SearchSpace
    lat_flat: np.ndarray
    dec_offsets: np.ndarray
    dec_group: np.ndarray
    block_of_dec: np.ndarray
    skip_choice_of_dec: np.ndarray
    n_blocks: int
    scratch: np.ndarray = field(init=False)

    def __post_init__(self):
        self.scratch = np.zeros(len(self.space.groups), dtype=np.int64)

    @classmethod
    def build(cls, space: SearchSpace, table: LatencyTable) -> "LatencyModel":
        flat: list[float] = []
        offsets = [0]
        skip = np.empty(space.num_decisions, dtype=np.int64)
        block = np.empty(space.num_decisions, dtype=np.int64)
        for d in space.decisions:
            for c in range(d.num_choices):
                flat.append(table[op_key(d, c)])
            offsets.append(len(flat))
            skip[d.id] = -1 if d.skip_choice is None else d.skip_choice
            block[d.id] = d.block_index
        n_blocks = int(block.max()) + 1 if len(block) else 0
        return cls(
            space=space,
            lat_flat=np.array(flat, dtype=np.float64),
            dec_offsets=np.array(offsets, dtype=np.int64),
            dec_group=space.dec_group,
            block_of_dec=block,
            skip_choice_of_dec=skip,
            n_blocks=n_blocks,
        )

    def latency_of_group_choices(self, group_choices: np.ndarray) -> float:
        return kernels.arch_latency_value(
            np.ascontiguousarray(group_choices, dtype=np.int64),
            self.dec_group,
            self.dec_offsets,
            self.lat_flat,
            self.block_of_dec,
            self.skip_choice_of_dec,
            self.n_blocks,
        )

    def latency(self, arch: Architecture) -> float:
        return self.latency_of_group_choices(self.space.group_choices_of(arch))


def arch_latency(table: LatencyTable, space: SearchSpace, arch: Architecture) -> float:
    """Latency of ``arch`` in milliseconds: the sum over its selected ops."""
    return LatencyModel.build(space, table).latency(arch)


def rejection_sample(
    space: SearchSpace,
    table: LatencyTable,
    target: LatencyTarget,
    seed: int,
    max_attempts: int = 100_000,
) -> Architecture:
    """Uniform sample conditioned on |T - T0| <= tolerance.

    Scans uniform draws in a fixed chunked order, so the result is
    deterministic in ``seed`` and independent of chunk size.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    model = LatencyModel.build(space, table)
    rng = np.random.default_rng(seed)
    n_groups = len(space.groups)
    choices_out = np.zeros(n_groups, dtype=np.int64)
    done = 0
    while done < max_attempts:
        chunk = min(REJECTION_CHUNK, max_attempts - done)
        uniforms = rng.random((chunk, n_groups))
        row = kernels.rejection_scan(
            uniforms,
            space.group_sizes,
            model.dec_group,
            model.dec_offsets,
            model.lat_flat,
            model.block_of_dec,
            model.skip_choice_of_dec,
            model.n_blocks,
            target.T0,
            target.tolerance,
            choices_out,
        )
        if row >= 0:
            return space.architecture_from_group_choices(choices_out)
        done += chunk
    raise RejectionExhausted(max_attempts, 0, target)


# Per-kind base costs for the synthetic table generator, in arbitrary
# units before calibration.
_KIND_UNITS = {
    "kernel": 1.0,
    "expansion": 1.0,
    "output_filters": 1.0,
    "se": 0.3,
    "op_choice": 0.5,
    "other": 0.5,
}

DEFAULT_TARGETS_MS = {
    "proxylessnas": 84.0,
    "proxylessnas_enlarged": 84.0,
    "doubling_stride2": 84.0,
    "doubling_block": 84.0,
    "mobilenetv3_like": 57.0,
    "toy": 30.0,
}


def default_target_ms(space: SearchSpace) -> float:
    return DEFAULT_TARGETS_MS.get(space.name, 30.0)


def _relative_cost(decision: Decision, choice: int) -> float:
    label = decision.choices[choice]
    if decision.kind == "op_choice":
        if label == "skip":
            return 0.0
        if label == "use":
            return 0.0
        return 1.0 + 0.3 * choice  # named ops get increasing costs
    if decision.kind == "se":
        return 0.0 if label == "off" else 1.0
    try:
        value = float(label)
    except ValueError:
        return 1.0 + 0.3 * choice
    values = []
    for lab in decision.choices:
        try:
            values.append(float(lab))
        except ValueError:
            values.append(1.0)
    mean = sum(values) / len(values)
    if decision.kind == "kernel":
        return value * value / (sum(x * x for x in values) / len(values))
    return value / mean if mean else 1.0


def make_synthetic_table(
    space: SearchSpace,
    seed: int = 0,
    target_mean_ms: float | None = None,
    skip_latency_ms: float = 0.0,
    jitter: float = 0.15,
) -> LatencyTable:
    """Seeded synthetic per-op latency table.

    Larger kernels, expansions, and filter counts cost more; entries get
    multiplicative jitter; skip ops cost ``skip_latency_ms`` exactly. When
    ``target_mean_ms`` is given the table is rescaled so the mean latency
    of a uniform architecture is approximately 1.15x the default target
    (the constraint should bind from below), or the given mean.
    """
    rng = np.random.default_rng(seed)
    entries: dict[str, float] = {}
    for d in space.decisions:
        for c in range(d.num_choices):
            key = op_key(d, c)
            if d.skip_choice == c:
                entries[key] = skip_latency_ms
                continue
            rel = _relative_cost(d, c)
            j = 1.0 + jitter * (2.0 * rng.random() - 1.0)
            entries[key] = _KIND_UNITS[d.kind] * rel * j
    if target_mean_ms is None:
        target_mean_ms = 1.15 * default_target_ms(space)
    table = LatencyTable(entries)
    model = LatencyModel.build(space, table)
    probe = [model.latency(sample_uniform(space, int(s))) for s in rng.integers(0, 2**31, 512)]
    mean = float(np.mean(probe))
    if mean <= 0:
        return table
    scale = target_mean_ms / mean
    scaled = {k: v * scale for k, v in entries.items()}
    return LatencyTable(scaled)


def save_table(table: LatencyTable, path) -> None:
    path = str(path)
    if path.endswith(".csv"):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["key", "latency_ms"])
            for k in sorted(table.entries):
                writer.writerow([k, repr(table.entries[k])])
    else:
        with open(path, "w") as f:
            json.dump(dict(sorted(table.entries.items())), f, indent=2)


def load_table(path) -> LatencyTable:
    path = str(path)
    if path.endswith(".csv"):
        entries: dict[str, float] = {}
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                entries[row["key"]] = float(row["latency_ms"])
        return LatencyTable(entries)
    with open(path) as f:
        doc = json.load(f)
    if not isinstance(doc, dict):
        raise ValueError("latency table file must be a flat key -> ms object")
    return LatencyTable({str(k): float(v) for k, v in doc.items()})
