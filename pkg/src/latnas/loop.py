"""The alternating search loop.

Each step samples an architecture from the policy, scores it (synthetic
oracle or one-shot supernet estimate), converts quality and latency into
a scalar reward, updates the controller, and, in supernet mode, takes
one shared-weight training step with the warmup probabilities of that
step. The controller's learning rate is zero for the frozen fraction of
the run; the final architecture is the per-decision argmax.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import controller as ctrl
from . import oracle as oracle_mod
from . import supernet as sn
from .latency import (
    LatencyModel,
    LatencyTable,
    LatencyTarget,
    default_target_ms,
    load_table,
    make_synthetic_table,
)
from .rewards import RewardConfig, reward
from .space import SearchSpace, build_space

EMA_DECAY = 0.9
WARMUP_MODES = ("none", "ops", "filters", "both")
QUALITY_SOURCES = ("oracle", "supernet")


@dataclass(frozen=True)
class SearchConfig:
    space: str = "toy"
    quality: str = "oracle"
    reward: str = "absolute"
    beta: float | None = None
    target_ms: float | None = None
    tolerance_ms: float = 1.0
    steps: int = 3000
    rl_base_lr: float = 0.02
    rl_lr_mode: str = "exponential"
    frozen_fraction: float = 0.25
    warmup: str = "both"
    warmup_fraction: float = 0.25
    sharing: str = "collapsed"
    seed: int = 0
    repeats: int = 5
    telemetry_every: int = 100
    # space / latency
    toy_blocks: int = 4
    toy_se: bool = False
    latency_table: str | None = None
    table_seed: int = 0
    skip_latency_ms: float = 0.0
    # synthetic oracle
    oracle_seed: int = 17
    base_quality: float = 0.95
    latency_gain: float = 0.5
    bonus_scale: float = 0.01
    noise_scale: float = 0.0
    # dataset / supernet
    dataset_seed: int = 1000
    n_classes: int = 4
    n_features: int = 16
    n_train: int = 8192
    n_valid: int = 2048
    batch_size: int = 64
    trunk_width: int = 16
    supernet_peak_lr: float = 0.12
    supernet_l2: float = sn.DEFAULT_L2
    remat: bool = False
    standalone_epochs: int = 1

    def __post_init__(self):
        if self.steps <= 0:
            raise ValueError("steps must be positive")
        if self.quality not in QUALITY_SOURCES:
            raise ValueError(f"quality must be one of {QUALITY_SOURCES}")
        if self.warmup not in WARMUP_MODES:
            raise ValueError(f"warmup must be one of {WARMUP_MODES}")


@dataclass(frozen=True)
class Env:
    """Resolved pieces shared by searches and baselines."""

    space: SearchSpace
    table: LatencyTable
    model: LatencyModel
    target: LatencyTarget
    reward_config: RewardConfig
    bench: oracle_mod.SyntheticBenchmark | None
    dataset: sn.Dataset | None
    supernet_config: sn.SupernetConfig | None


def build_env(config: SearchConfig) -> Env:
    space = build_space(config.space, toy_blocks=config.toy_blocks, toy_se=config.toy_se)
    if config.latency_table:
        table = load_table(config.latency_table)
    else:
        table = make_synthetic_table(
            space, seed=config.table_seed, skip_latency_ms=config.skip_latency_ms
        )
    t0 = config.target_ms if config.target_ms is not None else default_target_ms(space)
    target = LatencyTarget(T0=t0, tolerance=config.tolerance_ms)
    reward_config = RewardConfig.make(_reward_kind(config.reward), t0, config.beta)
    bench = dataset = sn_config = None
    if config.quality == "oracle":
        bench = oracle_mod.make_benchmark(
            space,
            T0=t0,
            seed=config.oracle_seed,
            latency_gain=config.latency_gain,
            base_quality=config.base_quality,
            bonus_scale=config.bonus_scale,
            noise_scale=config.noise_scale,
        )
    else:
        dataset = sn.make_dataset(
            seed=config.dataset_seed,
            n_classes=config.n_classes,
            n_features=config.n_features,
            n_train=config.n_train,
            n_valid=config.n_valid,
        )
        sn_config = sn.SupernetConfig(
            n_features=config.n_features,
            n_classes=config.n_classes,
            trunk_width=config.trunk_width,
            sharing_mode=config.sharing,
        )
    return Env(
        space=space,
        table=table,
        model=LatencyModel.build(space, table),
        target=target,
        reward_config=reward_config,
        bench=bench,
        dataset=dataset,
        supernet_config=sn_config,
    )


def _reward_kind(name: str) -> str:
    aliases = {
        "soft": "soft_exponential",
        "hard": "hard_exponential",
        "abs": "absolute",
    }
    return aliases.get(name, name)


def steps_per_epoch(config: SearchConfig) -> int:
    return math.ceil(config.n_train / config.batch_size)


def candidate_cost_batches(config: SearchConfig) -> int:
    """Batches to train and validate one standalone candidate."""
    return config.standalone_epochs * steps_per_epoch(config) + 1


def search_cost_batches(config: SearchConfig) -> int:
    """One search step costs one training batch plus one validation batch
    (simulated identically in oracle mode)."""
    return 2 * config.steps


@dataclass
class TelemetryRow:
    step: int
    reward: float
    quality: float
    sampled_T: float
    argmax_T: float
    entropy: float
    rl_lr: float


@dataclass
class SearchResult:
    config: SearchConfig
    final_arch: tuple[int, ...]
    final_T: float
    final_Q: float
    final_entropy: float
    telemetry: list[TelemetryRow]
    wall_time_s: float
    cost_batches: int
    cost_model_equivalents: float
    policy: ctrl.Policy = field(repr=False)
    supernet_state: sn.SupernetState | None = field(default=None, repr=False)


def run_search(config: SearchConfig, env: Env | None = None) -> SearchResult:
    """Run one full search; fully deterministic given the config seeds."""
    t_start = time.perf_counter()
    if env is None:
        env = build_env(config)
    space = env.space
    schedule = ctrl.RLSchedule(
        base_lr=config.rl_base_lr,
        total_steps=config.steps,
        mode=config.rl_lr_mode,
        frozen_fraction=config.frozen_fraction,
    )
    wsched = sn.WarmupSchedule(
        fraction=config.warmup_fraction,
        ops=config.warmup in ("ops", "both"),
        filters=config.warmup in ("filters", "both"),
    )
    cstate = ctrl.ControllerState.fresh(space)

    root = np.random.SeedSequence(entropy=config.seed)
    sample_seq, warmup_seq, data_seq, eval_seq, init_seq = root.spawn(5)
    rng_sample = np.random.default_rng(sample_seq)
    rng_warmup = np.random.default_rng(warmup_seq)
    rng_data = np.random.default_rng(data_seq)
    rng_eval = np.random.default_rng(eval_seq)

    sstate = None
    hyper = None
    if config.quality == "supernet":
        sstate = sn.init_supernet(space, env.supernet_config, init_seq)
        hyper = sn.TrainHyper(
            peak_lr=config.supernet_peak_lr,
            l2=config.supernet_l2,
            total_steps=config.steps,
            remat=config.remat,
        )

    telemetry: list[TelemetryRow] = []
    for step in range(config.steps):
        lr = ctrl.rl_learning_rate(schedule, step)
        arch, _ = ctrl.sample(cstate.policy, rng_sample)
        if config.quality == "oracle":
            q = oracle_mod.quality(env.bench, space, env.table, arch, model=env.model)
        else:
            q = sn.estimate_quality(
                sstate, arch, env.dataset.valid_batch(rng_eval, config.batch_size)
            )
        t_ms = env.model.latency(arch)
        r = reward(env.reward_config, q, t_ms)
        ctrl.reinforce_step(cstate, arch, r, lr)
        if not np.isfinite(cstate.policy.logits).all():
            raise FloatingPointError(f"policy logits became non-finite at step {step}")
        if config.quality == "supernet":
            p = sn.warmup_prob(wsched, step, config.steps)
            sn.train_step(
                sstate,
                arch,
                env.dataset.train_batch(rng_data, config.batch_size),
                hyper,
                p_op=p if wsched.ops else 0.0,
                p_filter=p if wsched.filters else 0.0,
                seed=rng_warmup,
            )
        if step % config.telemetry_every == 0 or step == config.steps - 1:
            argmax_arch = ctrl.argmax_architecture(cstate.policy)
            telemetry.append(
                TelemetryRow(
                    step=step,
                    reward=float(r),
                    quality=float(q),
                    sampled_T=float(t_ms),
                    argmax_T=float(env.model.latency(argmax_arch)),
                    entropy=ctrl.entropy(cstate.policy),
                    rl_lr=float(lr),
                )
            )

    final_arch = ctrl.argmax_architecture(cstate.policy)
    final_t = env.model.latency(final_arch)
    if config.quality == "oracle":
        final_q = oracle_mod.quality(env.bench, space, env.table, final_arch, model=env.model)
    else:
        final_q = sn.estimate_quality(sstate, final_arch, (env.dataset.X_valid, env.dataset.y_valid))
    cost = search_cost_batches(config)
    return SearchResult(
        config=config,
        final_arch=final_arch.choices,
        final_T=final_t,
        final_Q=final_q,
        final_entropy=ctrl.entropy(cstate.policy),
        telemetry=telemetry,
        wall_time_s=time.perf_counter() - t_start,
        cost_batches=cost,
        cost_model_equivalents=cost / candidate_cost_batches(config),
        policy=cstate.policy,
        supernet_state=sstate,
    )


@dataclass
class LatencyStats:
    ema_T: list[float]
    argmax_T: list[float]

    @property
    def final_ema(self) -> float:
        return self.ema_T[-1]

    @property
    def final_argmax(self) -> float:
        return self.argmax_T[-1]

    @property
    def final_gap(self) -> float:
        return abs(self.ema_T[-1] - self.argmax_T[-1])


def track_latency_stats(telemetry: list[TelemetryRow]) -> LatencyStats:
    """EMA of sampled latencies (decay 0.9, one update per recording
    point, initialized to the first measurement) plus the argmax series."""
    if not telemetry:
        raise ValueError("telemetry is empty")
    ema: float | None = None
    ema_series = []
    for row in telemetry:
        ema = row.sampled_T if ema is None else EMA_DECAY * ema + (1.0 - EMA_DECAY) * row.sampled_T
        ema_series.append(ema)
    return LatencyStats(ema_T=ema_series, argmax_T=[row.argmax_T for row in telemetry])


@dataclass
class RepeatRun:
    seed: int
    result: SearchResult
    final_Q: float  # oracle value, or standalone-retrained accuracy

    @property
    def final_T(self) -> float:
        return self.result.final_T

    @property
    def final_arch(self) -> tuple[int, ...]:
        return self.result.final_arch


@dataclass
class RepeatStats:
    runs: list[RepeatRun]
    mean_Q: float
    std_Q: float
    mean_T: float
    std_T: float


def repeat_search(
    config: SearchConfig, repeats: int | None = None, seeds: list[int] | None = None
) -> RepeatStats:
    """Run independent seeded searches and aggregate final quality/latency.

    Final quality is the oracle value of the final architecture in oracle
    mode, or the validation accuracy of the final architecture retrained
    standalone (same recipe as the random-search baseline) in supernet
    mode.
    """
    if seeds is None:
        n = config.repeats if repeats is None else repeats
        if n < 1:
            raise ValueError("repeats must be >= 1")
        seeds = [config.seed + i for i in range(n)]
    env = build_env(config)
    runs = []
    for s in seeds:
        cfg = _with_seed(config, s)
        result = run_search(cfg, env=env)
        if config.quality == "supernet":
            hyper = sn.TrainHyper(
                peak_lr=config.supernet_peak_lr,
                l2=config.supernet_l2,
                total_steps=config.standalone_epochs * steps_per_epoch(config),
            )
            from .space import Architecture

            _, q = sn.train_standalone(
                env.space,
                Architecture(result.final_arch),
                env.dataset,
                env.supernet_config,
                hyper,
                seed=s + 900_000,
                batch_size=config.batch_size,
            )
        else:
            q = result.final_Q
        runs.append(RepeatRun(seed=s, result=result, final_Q=q))
    qs = np.array([r.final_Q for r in runs])
    ts = np.array([r.final_T for r in runs])
    return RepeatStats(
        runs=runs,
        mean_Q=float(qs.mean()),
        std_Q=float(qs.std()),
        mean_T=float(ts.mean()),
        std_T=float(ts.std()),
    )


def _with_seed(config: SearchConfig, seed: int) -> SearchConfig:
    from dataclasses import replace

    return replace(config, seed=seed)


# --------------------------------------------------------------------------
# run logs (JSON lines)

RUN_LOG_SCHEMA = 1


def config_hash(config: SearchConfig) -> str:
    blob = json.dumps(asdict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def search_record(result: SearchResult, telemetry_path: str | None = None) -> dict:
    """Deterministic JSONL record for one search (timings live in the
    sidecar, keeping logs byte-reproducible)."""
    return {
        "schema": RUN_LOG_SCHEMA,
        "kind": "search",
        "config": asdict(result.config),
        "config_hash": config_hash(result.config),
        "seeds": {"search": result.config.seed},
        "final": {
            "arch": list(result.final_arch),
            "T_ms": result.final_T,
            "Q": result.final_Q,
            "entropy": result.final_entropy,
        },
        "cost": {
            "batches": result.cost_batches,
            "model_equivalents": result.cost_model_equivalents,
        },
        "telemetry_path": telemetry_path,
    }


def append_run_log(path, record: dict) -> None:
    with open(path, "a") as f:
        f.write(json.dumps(record, sort_keys=True) + "\n")


def read_run_log(path) -> list[dict]:
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
