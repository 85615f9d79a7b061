"""REINFORCE controller over categorical architecture decisions.

The policy is one independent multinomial per decision group (tied
filter decisions share a single distribution), parameterized by logits.
Updates are Adam-style ascent steps on the advantage-weighted log
probability of the sampled architecture, with an EMA reward baseline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .backend import kernels
from .space import Architecture, SearchSpace

# Controller optimizer constants; beta1 = 0 makes the first moment the
# raw gradient of the current step.
ADAM_BETA1 = 0.0
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
DEFAULT_BASE_LR = 3e-4
BASELINE_DECAY = 0.9


@dataclass
class Policy:
    space: SearchSpace
    logits: np.ndarray  # flat float64, segments per decision group

    @classmethod
    def uniform(cls, space: SearchSpace) -> "Policy":
        return cls(space=space, logits=np.zeros(int(space.group_offsets[-1])))

    def copy(self) -> "Policy":
        return Policy(space=self.space, logits=self.logits.copy())

    def group_logits(self, g: int) -> np.ndarray:
        off = self.space.group_offsets
        return self.logits[off[g] : off[g + 1]]

    def probabilities(self) -> list[np.ndarray]:
        out = []
        for g in range(len(self.space.groups)):
            lg = self.group_logits(g)
            e = np.exp(lg - lg.max())
            out.append(e / e.sum())
        return out


@dataclass
class ControllerState:
    policy: Policy
    m: np.ndarray
    v: np.ndarray
    baseline: float | None = None
    step: int = 0

    @classmethod
    def fresh(cls, space: SearchSpace) -> "ControllerState":
        policy = Policy.uniform(space)
        return cls(policy=policy, m=np.zeros_like(policy.logits), v=np.zeros_like(policy.logits))


@dataclass(frozen=True)
class RLSchedule:
    base_lr: float = DEFAULT_BASE_LR
    total_steps: int = 1000
    mode: str = "exponential"  # or "constant"
    frozen_fraction: float = 0.25

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if not 0 <= self.frozen_fraction < 1:
            raise ValueError("frozen_fraction must be in [0, 1)")
        if self.mode not in ("constant", "exponential"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")


def rl_learning_rate(schedule: RLSchedule, step: int) -> float:
    """Controller learning rate at ``step``.

    Zero through the frozen fraction of training; afterwards constant at
    the base rate, or rising geometrically to 10x the base rate at the
    final step in exponential mode.
    """
    if not 0 <= step <= schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps}]")
    frozen = schedule.frozen_fraction * schedule.total_steps
    if step < frozen:
        return 0.0
    if schedule.mode == "constant":
        return schedule.base_lr
    progress = (step - frozen) / (schedule.total_steps - frozen)
    return schedule.base_lr * 10.0**progress


def sample(policy: Policy, seed) -> tuple[Architecture, float]:
    """Draw an architecture from the policy.

    ``seed`` is an int or a numpy Generator; tied groups are drawn once.
    Returns the architecture and its log probability under the policy.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_groups = len(policy.space.groups)
    uniforms = rng.random(n_groups)
    choices = np.zeros(n_groups, dtype=np.int64)
    log_prob = kernels.sample_categorical(
        policy.logits, policy.space.group_offsets, uniforms, choices
    )
    return policy.space.architecture_from_group_choices(choices), float(log_prob)


def argmax_architecture(policy: Policy) -> Architecture:
    """Most probable choice per decision; ties break to the lowest index."""
    choices = np.zeros(len(policy.space.groups), dtype=np.int64)
    kernels.argmax_categorical(policy.logits, policy.space.group_offsets, choices)
    return policy.space.architecture_from_group_choices(choices)


def entropy(policy: Policy) -> float:
    """Policy entropy in nats: sum of the independent categoricals'
    entropies, tied groups counted once."""
    return float(kernels.entropy_categorical(policy.logits, policy.space.group_offsets))


def log_prob(policy: Policy, arch: Architecture) -> float:
    """log pi(arch): sum of per-group log choice probabilities."""
    total = 0.0
    gc = policy.space.group_choices_of(arch)
    for g, c in enumerate(gc):
        lg = policy.group_logits(g)
        mx = lg.max()
        total += float(lg[c] - mx - np.log(np.sum(np.exp(lg - mx))))
    return total


def grad_log_prob(policy: Policy, arch: Architecture) -> np.ndarray:
    """Gradient of log pi(arch) w.r.t. the flat logits: onehot - softmax
    per group."""
    out = np.zeros_like(policy.logits)
    off = policy.space.group_offsets
    gc = policy.space.group_choices_of(arch)
    for g, c in enumerate(gc):
        lg = policy.group_logits(g)
        e = np.exp(lg - lg.max())
        p = e / e.sum()
        out[off[g] : off[g + 1]] = -p
        out[off[g] + c] += 1.0
    return out


def reinforce_step(state: ControllerState, arch: Architecture, r: float, lr: float) -> ControllerState:
    """One REINFORCE update with reward ``r`` for the sampled ``arch``.

    Advantage is r minus an EMA baseline (decay 0.9, initialized to the
    first reward). Moments and the baseline advance even when lr = 0, so
    a frozen phase leaves the logits bitwise unchanged while the
    statistics warm up. Mutates ``state`` in place and returns it.
    """
    if state.baseline is None:
        state.baseline = float(r)
    advantage = float(r) - state.baseline
    state.baseline = BASELINE_DECAY * state.baseline + (1.0 - BASELINE_DECAY) * float(r)
    state.step += 1
    choices = state.policy.space.group_choices_of(arch)
    kernels.adam_logit_update(
        state.policy.logits,
        state.m,
        state.v,
        state.policy.space.group_offsets,
        choices,
        advantage,
        float(lr),
        ADAM_BETA1,
        ADAM_BETA2,
        ADAM_EPS,
        state.step,
    )
    return state


POLICY_FORMAT = "latnas-policy"
POLICY_VERSION = 1


def policy_to_json(policy: Policy) -> dict:
    """Decision id -> logit vector; tied decisions repeat the shared
    vector."""
    logits = {}
    for d in policy.space.decisions:
        g = int(policy.space.dec_group[d.id])
        logits[str(d.id)] = [float(x) for x in policy.group_logits(g)]
    return {
        "format": POLICY_FORMAT,
        "version": POLICY_VERSION,
        "space_name": policy.space.name,
        "logits": logits,
    }


def policy_from_json(doc: dict, space: SearchSpace) -> Policy:
    if doc.get("format") != POLICY_FORMAT or doc.get("version") != POLICY_VERSION:
        raise ValueError("not a recognized policy document")
    policy = Policy.uniform(space)
    for group in space.groups:
        vecs = [doc["logits"][str(did)] for did in group]
        for vec in vecs[1:]:
            if vec != vecs[0]:
                raise ValueError(f"tied decisions {group} carry different logits")
        g = int(space.dec_group[group[0]])
        seg = np.asarray(vecs[0], dtype=np.float64)
        if len(seg) != space.decisions[group[0]].num_choices:
            raise ValueError(f"logit vector length mismatch for decisions {group}")
        off = space.group_offsets
        policy.logits[off[g] : off[g + 1]] = seg
    return policy


def save_policy(policy: Policy, path) -> None:
    with open(path, "w") as f:
        json.dump(policy_to_json(policy), f, indent=2, sort_keys=True)


def load_policy(path, space: SearchSpace) -> Policy:
    with open(path) as f:
        return policy_from_json(json.load(f), space)
