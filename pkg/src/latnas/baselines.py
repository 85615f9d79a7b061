"""Random search with latency-window rejection sampling, plus cost
accounting for comparing search budgets.

Each candidate is drawn uniformly subject to |T - T0| <= tolerance,
then scored: by the synthetic oracle, or by training it standalone for
the configured epoch budget and measuring validation accuracy. The best
candidate wins. Costs are counted in batch equivalents; one standalone
candidate costs ``epochs * steps_per_epoch + 1`` batches, one search
step costs two (train + single-batch eval).
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import supernet as sn
from .latency import rejection_sample
from .loop import Env, SearchConfig, build_env, candidate_cost_batches, steps_per_epoch
from .oracle import quality
from .space import Architecture


@dataclass
class Candidate:
    seed: int
    arch: tuple[int, ...]
    T: float
    Q: float


@dataclass
class RandomSearchResult:
    candidates: list[Candidate]
    best: Candidate
    wall_time_s: float
    cost_batches: int
    cost_model_equivalents: float


def _standalone_hyper(config: SearchConfig) -> sn.TrainHyper:
    return sn.TrainHyper(
        peak_lr=config.supernet_peak_lr,
        l2=config.supernet_l2,
        total_steps=config.standalone_epochs * steps_per_epoch(config),
    )


def _evaluate_candidate(config: SearchConfig, env: Env, seed: int) -> Candidate:
    arch = rejection_sample(env.space, env.table, env.target, seed=seed)
    t_ms = env.model.latency(arch)
    if config.quality == "oracle":
        q = quality(env.bench, env.space, env.table, arch, model=env.model)
    else:
        _, q = sn.train_standalone(
            env.space,
            arch,
            env.dataset,
            env.supernet_config,
            _standalone_hyper(config),
            seed=seed + 900_000,
            batch_size=config.batch_size,
        )
    return Candidate(seed=seed, arch=arch.choices, T=t_ms, Q=q)


def random_search(
    config: SearchConfig,
    n_candidates: int = 20,
    env: Env | None = None,
    seeds: list[int] | None = None,
    parallel: int = 1,
) -> RandomSearchResult:
    """Best of ``n_candidates`` latency-window random architectures.

    Deterministic given the candidate seeds; candidates are independent,
    so ``parallel`` > 1 evaluates them across processes without changing
    the result.
    """
    if n_candidates < 1:
        raise ValueError("need at least one candidate")
    t_start = time.perf_counter()
    if env is None:
        env = build_env(config)
    if seeds is None:
        seeds = [config.seed + i for i in range(n_candidates)]
    if len(seeds) != n_candidates:
        raise ValueError("seeds must match n_candidates")
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            candidates = list(pool.map(_evaluate_candidate, *zip(*[(config, env, s) for s in seeds])))
    else:
        candidates = [_evaluate_candidate(config, env, s) for s in seeds]
    best = max(candidates, key=lambda c: c.Q)
    cost = n_candidates * candidate_cost_batches(config)
    return RandomSearchResult(
        candidates=candidates,
        best=best,
        wall_time_s=time.perf_counter() - t_start,
        cost_batches=cost,
        cost_model_equivalents=float(n_candidates),
    )


def random_search_record(
    config: SearchConfig, result: RandomSearchResult, telemetry_path: str | None = None
) -> dict:
    from .loop import RUN_LOG_SCHEMA, config_hash
    from dataclasses import asdict

    return {
        "schema": RUN_LOG_SCHEMA,
        "kind": "random_search",
        "config": asdict(config),
        "config_hash": config_hash(config),
        "seeds": {"candidates": [c.seed for c in result.candidates]},
        "final": {
            "arch": list(result.best.arch),
            "T_ms": result.best.T,
            "Q": result.best.Q,
        },
        "candidates": [
            {"seed": c.seed, "arch": list(c.arch), "T_ms": c.T, "Q": c.Q}
            for c in result.candidates
        ],
        "cost": {
            "batches": result.cost_batches,
            "model_equivalents": result.cost_model_equivalents,
        },
        "telemetry_path": telemetry_path,
    }


@dataclass
class CostRow:
    kind: str
    config_hash: str
    runs: int
    evaluations: int
    batches: int
    model_equivalents: float
    wall_time_s: float | None


def cost_report(records: list[dict], timings: dict[str, float] | None = None) -> list[CostRow]:
    """Aggregate run-log records into per-config budget rows.

    ``timings`` optionally maps config hashes to measured wall times
    (stored outside the deterministic logs); when both a search and a
    random-search row have timings, their ratio can be compared.
    """
    if not records:
        raise ValueError("no run records given")
    grouped: dict[tuple[str, str], list[dict]] = {}
    for rec in records:
        grouped.setdefault((rec["kind"], rec["config_hash"]), []).append(rec)
    rows = []
    for (kind, chash), recs in sorted(grouped.items()):
        batches = sum(r["cost"]["batches"] for r in recs)
        equivalents = sum(r["cost"]["model_equivalents"] for r in recs)
        evaluations = sum(
            len(r.get("candidates", [])) if r["kind"] == "random_search" else r["config"]["steps"]
            for r in recs
        )
        rows.append(
            CostRow(
                kind=kind,
                config_hash=chash,
                runs=len(recs),
                evaluations=evaluations,
                batches=batches,
                model_equivalents=equivalents,
                wall_time_s=(timings or {}).get(chash),
            )
        )
    return rows


def cost_ratio(rows: list[CostRow]) -> float | None:
    """Wall-time ratio (random search / policy search) to 2 decimals, when
    both timings are known."""
    rs = [r for r in rows if r.kind == "random_search" and r.wall_time_s]
    se = [r for r in rows if r.kind == "search" and r.wall_time_s]
    if not rs or not se:
        return None
    return round(sum(r.wall_time_s for r in rs) / sum(r.wall_time_s for r in se), 2)
