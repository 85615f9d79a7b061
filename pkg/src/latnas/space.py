"""Categorical architecture search spaces.

An architecture is one choice index per categorical decision. A search
space is an ordered list of decisions plus block metadata and optional
tie groups that force several output-filter decisions to move together
(used where residual connections require equal widths).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

DECISION_KINDS = ("kernel", "expansion", "output_filters", "se", "op_choice", "other")

# Output filter multipliers applied to each block's base filter size.
DEFAULT_FILTER_MULTIPLIERS = (
    Fraction(1, 2),
    Fraction(5, 8),
    Fraction(3, 4),
    Fraction(1),
    Fraction(5, 4),
    Fraction(3, 2),
    Fraction(2),
)

SKIP_LABEL = "skip"


class SpaceError(ValueError):
    """Raised when a space or architecture violates a structural invariant."""


@dataclass(frozen=True)
class Decision:
    """One categorical decision: ``choices[i]`` labels choice index ``i``."""

    id: int
    name: str
    kind: str
    block_index: int
    choices: tuple[str, ...]

    def __post_init__(self):
        if self.kind not in DECISION_KINDS:
            raise SpaceError(f"unknown decision kind {self.kind!r}")
        if len(self.choices) < 1:
            raise SpaceError(f"decision {self.name!r} has no choices")

    @property
    def num_choices(self) -> int:
        return len(self.choices)

    @property
    def skip_choice(self) -> int | None:
        """Index of the identity-skip choice, if this decision has one.

        By convention an ``op_choice`` decision with a choice labeled
        ``"skip"`` can disable its whole block.
        """
        if self.kind == "op_choice" and SKIP_LABEL in self.choices:
            return self.choices.index(SKIP_LABEL)
        return None


@dataclass(frozen=True)
class BlockInfo:
    """Static metadata for one searchable layer (choice block)."""

    index: int
    stage: int
    stride: int
    base_filters: int
    skippable: bool


@dataclass(frozen=True)
class Architecture:
    """An assignment of one choice index per decision."""

    choices: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.choices)

    def __getitem__(self, i: int) -> int:
        return self.choices[i]


@dataclass(frozen=True)
class SearchSpace:
    name: str
    decisions: tuple[Decision, ...]
    filter_ties: tuple[tuple[int, ...], ...] = ()
    block_layout: tuple[BlockInfo, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ids = [d.id for d in self.decisions]
        if ids != list(range(len(ids))):
            raise SpaceError("decision ids must be dense 0..D-1 in order")
        seen: set[int] = set()
        for group in self.filter_ties:
            if len(group) < 2:
                raise SpaceError("tie groups need at least two decisions")
            ref = self.decisions[group[0]]
            for did in group:
                if did in seen:
                    raise SpaceError(f"decision {did} appears in two tie groups")
                seen.add(did)
                d = self.decisions[did]
                if d.kind != "output_filters":
                    raise SpaceError(f"tied decision {d.name!r} is not output_filters")
                if d.choices != ref.choices:
                    raise SpaceError(f"tied decisions {ref.name!r}/{d.name!r} differ in choices")

    @property
    def num_decisions(self) -> int:
        return len(self.decisions)

    @cached_property
    def groups(self) -> tuple[tuple[int, ...], ...]:
        """Decision ids grouped so tied decisions share one categorical."""
        tied = {did: group for group in self.filter_ties for did in group}
        out: list[tuple[int, ...]] = []
        emitted: set[int] = set()
        for d in self.decisions:
            if d.id in emitted:
                continue
            group = tied.get(d.id, (d.id,))
            out.append(tuple(group))
            emitted.update(group)
        return tuple(out)

    @cached_property
    def dec_group(self) -> np.ndarray:
        """Group index of each decision (int64, length D)."""
        out = np.empty(self.num_decisions, dtype=np.int64)
        for g, group in enumerate(self.groups):
            for did in group:
                out[did] = g
        return out

    @cached_property
    def group_sizes(self) -> np.ndarray:
        """Choice count per group (int64, length G)."""
        return np.array(
            [self.decisions[g[0]].num_choices for g in self.groups], dtype=np.int64
        )

    @cached_property
    def group_offsets(self) -> np.ndarray:
        """Offsets of each group's segment in a flat per-choice vector."""
        return np.concatenate(([0], np.cumsum(self.group_sizes))).astype(np.int64)

    @cached_property
    def blocks_by_index(self) -> dict[int, BlockInfo]:
        return {b.index: b for b in self.block_layout}

    def decisions_in_block(self, block_index: int) -> list[Decision]:
        return [d for d in self.decisions if d.block_index == block_index]

    def architecture_from_group_choices(self, group_choices: Sequence[int]) -> Architecture:
        choices = [0] * self.num_decisions
        for g, group in enumerate(self.groups):
            for did in group:
                choices[did] = int(group_choices[g])
        return Architecture(tuple(choices))

    def group_choices_of(self, arch: Architecture) -> np.ndarray:
        return np.array(
            [arch.choices[group[0]] for group in self.groups], dtype=np.int64
        )


class Cardinality(NamedTuple):
    count: int
    log10: float


def _to_fraction(m) -> Fraction:
    if isinstance(m, Fraction):
        return m
    if isinstance(m, str):
        if "/" in m:
            num, den = m.split("/")
            return Fraction(int(num), int(den))
        return Fraction(m)
    return Fraction(m)  # int or exactly-representable float


def filter_choices(base_filter_size: int, multipliers: Iterable) -> list[int]:
    """Candidate filter counts: base x multiplier, rounded to a multiple of 8.

    Exact ties between two multiples round up; results are deduplicated,
    sorted, and floored at 8.
    """
    if base_filter_size < 8:
        raise SpaceError("base filter size must be >= 8")
    mults = [_to_fraction(m) for m in multipliers]
    if not mults or any(m <= 0 for m in mults):
        raise SpaceError("multipliers must be nonempty and positive")
    out = set()
    for m in mults:
        q = Fraction(base_filter_size) * m / 8
        k = math.floor(q)
        if q - k >= Fraction(1, 2):
            k += 1
        out.add(max(8, 8 * k))
    return sorted(out)


# Stage layouts for the mobile-style spaces: per-stage searchable layer
# counts, strides, and handcrafted filter progression. Layer counts are
# constructor parameters; these defaults follow the usual 7-stage
# inverted-bottleneck trunk.
DEFAULT_LAYERS_PER_STAGE = (1, 4, 4, 4, 4, 4, 1)
DEFAULT_STAGE_STRIDES = (1, 2, 2, 2, 1, 2, 1)
HANDCRAFTED_BASE_FILTERS = (16, 24, 32, 64, 96, 160, 320)

KERNEL_CHOICES = ("3", "5", "7")


def _stage_base_filters(rule: str, strides: Sequence[int]) -> tuple[int, ...]:
    if rule == "handcrafted":
        return HANDCRAFTED_BASE_FILTERS[: len(strides)]
    out = []
    f = 16
    for i, s in enumerate(strides):
        if i > 0:
            if rule == "double_per_stage":
                f *= 2
            elif rule == "double_per_stride2":
                if s == 2:
                    f *= 2
            else:
                raise SpaceError(f"unknown filter rule {rule!r}")
        out.append(f)
    return tuple(out)


def _mobile_space(
    name: str,
    *,
    expansion_choices: tuple[str, ...],
    search_filters: bool,
    search_se: bool,
    filter_rule: str,
    layers_per_stage: Sequence[int],
    stage_strides: Sequence[int],
    filter_multipliers: Iterable,
    allow_skip: bool,
) -> SearchSpace:
    if len(layers_per_stage) != len(stage_strides):
        raise SpaceError("layers_per_stage and stage_strides must align")
    bases = _stage_base_filters(filter_rule, stage_strides)
    decisions: list[Decision] = []
    blocks: list[BlockInfo] = []
    ties: list[list[int]] = []
    block = 0

    def add(kind: str, choices: tuple[str, ...], blk: int) -> int:
        did = len(decisions)
        decisions.append(
            Decision(id=did, name=f"b{blk}/{kind}", kind=kind, block_index=blk, choices=choices)
        )
        return did

    for stage, (n_layers, stride, base) in enumerate(zip(layers_per_stage, stage_strides, bases)):
        stage_filter_dids: list[int] = []
        for layer in range(n_layers):
            first = layer == 0
            skippable = allow_skip and not first
            blocks.append(
                BlockInfo(
                    index=block,
                    stage=stage,
                    stride=stride if first else 1,
                    base_filters=base,
                    skippable=skippable,
                )
            )
            add("expansion", expansion_choices, block)
            add("kernel", KERNEL_CHOICES, block)
            if search_se:
                add("se", ("off", "on"), block)
            if search_filters:
                labels = tuple(str(f) for f in filter_choices(base, filter_multipliers))
                stage_filter_dids.append(add("output_filters", labels, block))
            if skippable:
                add("op_choice", ("use", SKIP_LABEL), block)
            block += 1
        if len(stage_filter_dids) > 1:
            ties.append(stage_filter_dids)

    return SearchSpace(
        name=name,
        decisions=tuple(decisions),
        filter_ties=tuple(tuple(t) for t in ties),
        block_layout=tuple(blocks),
    )


TOY_OPS = ("tanh", "silu", "softplus")
TOY_WIDTHS = (8, 16, 24, 32)


def toy_space(
    n_blocks: int = 4,
    ops: tuple[str, ...] = TOY_OPS,
    widths: tuple[int, ...] = TOY_WIDTHS,
    se: bool = False,
) -> SearchSpace:
    """Small space realized by the toy supernetwork: per block, one middle-op
    decision and one hidden-width decision (plus an optional SE toggle)."""
    decisions: list[Decision] = []
    blocks: list[BlockInfo] = []
    for b in range(n_blocks):
        blocks.append(BlockInfo(index=b, stage=b, stride=1, base_filters=max(widths), skippable=False))
        decisions.append(
            Decision(id=len(decisions), name=f"b{b}/op", kind="op_choice", block_index=b, choices=ops)
        )
        decisions.append(
            Decision(
                id=len(decisions),
                name=f"b{b}/width",
                kind="expansion",
                block_index=b,
                choices=tuple(str(w) for w in widths),
            )
        )
        if se:
            decisions.append(
                Decision(id=len(decisions), name=f"b{b}/se", kind="se", block_index=b, choices=("off", "on"))
            )
    return SearchSpace(name="toy", decisions=tuple(decisions), block_layout=tuple(blocks))


SPACE_NAMES = (
    "proxylessnas",
    "proxylessnas_enlarged",
    "mobilenetv3_like",
    "doubling_stride2",
    "doubling_block",
    "toy",
)


def build_space(
    spec: str,
    *,
    layers_per_stage: Sequence[int] = DEFAULT_LAYERS_PER_STAGE,
    stage_strides: Sequence[int] = DEFAULT_STAGE_STRIDES,
    filter_multipliers: Iterable = DEFAULT_FILTER_MULTIPLIERS,
    toy_blocks: int = 4,
    toy_ops: tuple[str, ...] = TOY_OPS,
    toy_widths: tuple[int, ...] = TOY_WIDTHS,
    toy_se: bool = False,
) -> SearchSpace:
    """Construct one of the named search spaces."""
    common = dict(
        layers_per_stage=layers_per_stage,
        stage_strides=stage_strides,
        filter_multipliers=filter_multipliers,
        allow_skip=True,
    )
    if spec == "toy":
        return toy_space(toy_blocks, toy_ops, toy_widths, toy_se)
    if spec == "proxylessnas":
        return _mobile_space(
            spec, expansion_choices=("3", "6"), search_filters=False, search_se=False,
            filter_rule="handcrafted", **common,
        )
    if spec == "doubling_stride2":
        return _mobile_space(
            spec, expansion_choices=("3", "6"), search_filters=False, search_se=False,
            filter_rule="double_per_stride2", **common,
        )
    if spec == "doubling_block":
        return _mobile_space(
            spec, expansion_choices=("3", "6"), search_filters=False, search_se=False,
            filter_rule="double_per_stage", **common,
        )
    if spec == "proxylessnas_enlarged":
        return _mobile_space(
            spec, expansion_choices=("3", "6"), search_filters=True, search_se=False,
            filter_rule="double_per_stage", **common,
        )
    if spec == "mobilenetv3_like":
        return _mobile_space(
            spec, expansion_choices=("1", "2", "3", "4", "5", "6"), search_filters=True,
            search_se=True, filter_rule="double_per_stage", **common,
        )
    raise SpaceError(f"unknown space {spec!r}; expected one of {SPACE_NAMES}")


def per_layer_combinations(space: SearchSpace) -> dict[int, int]:
    """Inverted-bottleneck configuration count per block.

    Counts kernel/expansion/filter/SE decisions; the identity-skip toggle
    is a routing decision, not a bottleneck configuration, and is excluded.
    """
    out: dict[int, int] = {}
    for b in space.block_layout:
        n = 1
        for d in space.decisions_in_block(b.index):
            if d.kind in ("kernel", "expansion", "output_filters", "se"):
                n *= d.num_choices
        out[b.index] = n
    return out


def cardinality(space: SearchSpace) -> Cardinality:
    """Number of unique architectures (upper bound): product over decision
    groups of choice counts, with tied decisions counted once."""
    count = 1
    log10 = 0.0
    for group in space.groups:
        n = space.decisions[group[0]].num_choices
        count *= n
        log10 += math.log10(n)
    return Cardinality(count, log10)


def sample_uniform(space: SearchSpace, seed: int) -> Architecture:
    """Uniform architecture sample; tied groups are drawn once."""
    rng = np.random.default_rng(seed)
    sizes = space.group_sizes
    picks = np.minimum((rng.random(len(sizes)) * sizes).astype(np.int64), sizes - 1)
    return space.architecture_from_group_choices(picks)


def validate(space: SearchSpace, arch: Architecture) -> bool:
    """True iff choice indices are in range and tie groups hold equal."""
    if len(arch.choices) != space.num_decisions:
        return False
    for d in space.decisions:
        c = arch.choices[d.id]
        if not 0 <= c < d.num_choices:
            return False
    for group in space.filter_ties:
        ref = arch.choices[group[0]]
        if any(arch.choices[did] != ref for did in group[1:]):
            return False
    return True


ENUMERATION_GUARD = 10**6


def enumerate_architectures(space: SearchSpace, guard: int = ENUMERATION_GUARD) -> Iterator[Architecture]:
    """Yield every architecture (tied groups enumerated once).

    Raises SpaceError when the space exceeds ``guard`` architectures.
    """
    card = cardinality(space).count
    if card > guard:
        raise SpaceError(f"space has {card} architectures, above the guard of {guard}")
    sizes = [int(n) for n in space.group_sizes]
    picks = [0] * len(sizes)
    while True:
        yield space.architecture_from_group_choices(picks)
        for g in reversed(range(len(sizes))):
            picks[g] += 1
            if picks[g] < sizes[g]:
                break
            picks[g] = 0
        else:
            return


SPACE_FORMAT = "latnas-space"
SPACE_VERSION = 1


def space_to_json(space: SearchSpace) -> dict:
    return {
        "format": SPACE_FORMAT,
        "version": SPACE_VERSION,
        "name": space.name,
        "decisions": [
            {
                "id": d.id,
                "name": d.name,
                "kind": d.kind,
                "block": d.block_index,
                "choices": list(d.choices),
            }
            for d in space.decisions
        ],
        "filter_ties": [list(g) for g in space.filter_ties],
        "blocks": [
            {
                "index": b.index,
                "stage": b.stage,
                "stride": b.stride,
                "base_filters": b.base_filters,
                "skippable": b.skippable,
            }
            for b in space.block_layout
        ],
    }


def space_from_json(doc: dict) -> SearchSpace:
    if doc.get("format") != SPACE_FORMAT:
        raise SpaceError("not a search-space document")
    if doc.get("version") != SPACE_VERSION:
        raise SpaceError(f"unsupported space version {doc.get('version')!r}")
    decisions = tuple(
        Decision(
            id=d["id"],
            name=d["name"],
            kind=d["kind"],
            block_index=d["block"],
            choices=tuple(d["choices"]),
        )
        for d in doc["decisions"]
    )
    blocks = tuple(
        BlockInfo(
            index=b["index"],
            stage=b["stage"],
            stride=b["stride"],
            base_filters=b["base_filters"],
            skippable=b["skippable"],
        )
        for b in doc.get("blocks", [])
    )
    return SearchSpace(
        name=doc.get("name", "unnamed"),
        decisions=decisions,
        filter_ties=tuple(tuple(g) for g in doc.get("filter_ties", [])),
        block_layout=blocks,
    )


def save_space(space: SearchSpace, path) -> None:
    with open(path, "w") as f:
        json.dump(space_to_json(space), f, indent=2, sort_keys=True)


def load_space(path) -> SearchSpace:
    with open(path) as f:
        return space_from_json(json.load(f))
