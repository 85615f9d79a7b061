"""Command-line interface.

Subcommands: search, random-search, cardinality, reward-contour,
frontier, replay, report. Every run appends a deterministic JSON-lines
record to the run log; wall-clock timings go to a separate ``.times``
sidecar so identical runs produce byte-identical logs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from . import baselines, controller, loop
from .backend import BACKEND
from .config import ConfigError, load_config_file, resolve_config
from .latency import LatencyModel, load_table, make_synthetic_table
from .oracle import make_benchmark, pareto_frontier
from .rewards import RewardConfig, contour_grid
from .space import build_space, cardinality, load_space, per_layer_combinations

# CLI flag -> config key for the shared search-environment options.
_CONFIG_FLAGS = {
    "space": "space",
    "latency_table": "latency_table",
    "target_ms": "target_ms",
    "tolerance_ms": "tolerance_ms",
    "reward": "reward",
    "beta": "beta",
    "steps": "steps",
    "rl_lr_mode": "rl_lr_mode",
    "rl_base_lr": "rl_base_lr",
    "warmup": "warmup",
    "sharing": "sharing",
    "quality": "quality",
    "seed": "seed",
    "repeats": "repeats",
    "toy_blocks": "toy_blocks",
    "table_seed": "table_seed",
    "oracle_seed": "oracle_seed",
    "noise_scale": "noise_scale",
    "bonus_scale": "bonus_scale",
    "batch_size": "batch_size",
}


def _add_env_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--space", choices=("proxylessnas", "proxylessnas_enlarged",
                                       "mobilenetv3_like", "doubling_stride2",
                                       "doubling_block", "toy"))
    p.add_argument("--latency-table", dest="latency_table", help="JSON or CSV latency table")
    p.add_argument("--target-ms", dest="target_ms", type=float)
    p.add_argument("--tolerance-ms", dest="tolerance_ms", type=float)
    p.add_argument("--reward", choices=("soft", "hard", "abs"))
    p.add_argument("--beta", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--rl-lr-mode", dest="rl_lr_mode", choices=("constant", "exponential"))
    p.add_argument("--rl-base-lr", dest="rl_base_lr", type=float)
    p.add_argument("--warmup", choices=("none", "ops", "filters", "both"))
    p.add_argument("--sharing", choices=("collapsed", "per_path"))
    p.add_argument("--quality", choices=("supernet", "oracle"))
    p.add_argument("--seed", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--toy-blocks", dest="toy_blocks", type=int)
    p.add_argument("--table-seed", dest="table_seed", type=int)
    p.add_argument("--oracle-seed", dest="oracle_seed", type=int)
    p.add_argument("--noise-scale", dest="noise_scale", type=float)
    p.add_argument("--bonus-scale", dest="bonus_scale", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)


def _config_from_args(args) -> loop.SearchConfig:
    file_values = load_config_file(args.config) if args.config else None
    overrides = {}
    for attr, key in _CONFIG_FLAGS.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    return resolve_config(file_values=file_values, overrides=overrides)


def _telemetry_path(out: str, chash: str, seed: int) -> str:
    base = out[: -len(".jsonl")] if out.endswith(".jsonl") else out
    return f"{base}-telemetry-{chash}-seed{seed}.csv"


def _write_telemetry(path: str, rows: list[loop.TelemetryRow]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "reward", "quality", "sampled_T", "argmax_T", "entropy", "rl_lr"])
        for r in rows:
            writer.writerow(
                [r.step, repr(r.reward), repr(r.quality), repr(r.sampled_T),
                 repr(r.argmax_T), repr(r.entropy), repr(r.rl_lr)]
            )


def _append_timing(out: str, record: dict) -> None:
    with open(out + ".times", "a") as f:
        f.write(json.dumps(record, sort_keys=True) + "\n")


def _cmd_search(args) -> int:
    config = _config_from_args(args)
    stats = loop.repeat_search(config)
    chash = loop.config_hash(config)
    for run in stats.runs:
        result = run.result
        tpath = _telemetry_path(args.out, chash, run.seed)
        _write_telemetry(tpath, result.telemetry)
        record = loop.search_record(result, telemetry_path=tpath)
        if config.quality == "supernet":
            record["final"]["standalone_Q"] = run.final_Q
        loop.append_run_log(args.out, record)
        _append_timing(
            args.out,
            {"kind": "search", "config_hash": chash, "seed": run.seed,
             "wall_time_s": result.wall_time_s},
        )
        if args.save_policy:
            controller.save_policy(result.policy, args.save_policy)
    print(f"search space={config.space} quality={config.quality} reward={config.reward} "
          f"backend={BACKEND}")
    print(f"  repeats={len(stats.runs)}  T = {stats.mean_T:.2f} +/- {stats.std_T:.2f} ms  "
          f"Q = {stats.mean_Q:.4f} +/- {stats.std_Q:.4f}")
    print(f"  log: {args.out}  config_hash={chash}")
    return 0


def _cmd_random_search(args) -> int:
    config = _config_from_args(args)
    result = baselines.random_search(config, n_candidates=args.candidates, parallel=args.parallel)
    record = baselines.random_search_record(config, result)
    loop.append_run_log(args.out, record)
    _append_timing(
        args.out,
        {"kind": "random_search", "config_hash": record["config_hash"],
         "seed": config.seed, "wall_time_s": result.wall_time_s},
    )
    print(f"random-search N={args.candidates} space={config.space} quality={config.quality}")
    print(f"  best: Q = {result.best.Q:.4f}  T = {result.best.T:.2f} ms  "
          f"(budget {result.cost_model_equivalents:.1f} model-equivalents)")
    print(f"  log: {args.out}")
    return 0


def _cmd_cardinality(args) -> int:
    space = build_space(args.space, toy_blocks=args.toy_blocks or 4)
    card = cardinality(space)
    combos = per_layer_combinations(space)
    print(f"space: {space.name}")
    print(f"decisions: {space.num_decisions}  groups: {len(space.groups)}")
    print(f"cardinality: {card.count}")
    print(f"log10: {card.log10:.3f}")
    if combos:
        print(f"max per-layer combinations: {max(combos.values())}")
    return 0


def _parse_range(text: str) -> tuple[float, float]:
    lo, _, hi = text.partition(":")
    return float(lo), float(hi)


def _cmd_reward_contour(args) -> int:
    kind = loop._reward_kind(args.reward or "abs")
    config = RewardConfig.make(kind, args.target_ms, args.beta)
    qs, ts, grid = contour_grid(
        config, _parse_range(args.q_range), _parse_range(args.t_range), args.resolution
    )
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["Q", "T", "r"])
        for i, q in enumerate(qs):
            for j, t in enumerate(ts):
                writer.writerow([repr(float(q)), repr(float(t)), repr(float(grid[i, j]))])
    print(f"wrote {len(qs) * len(ts)} grid points to {args.out}")
    return 0


def _cmd_frontier(args) -> int:
    config = _config_from_args(args)
    env = loop.build_env(config)
    if env.bench is None:
        raise ConfigError("frontier requires --quality oracle")
    frontier = pareto_frontier(env.bench, env.space, env.table)
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["arch", "Q", "T_ms"])
        for arch, q, t in frontier:
            writer.writerow([" ".join(map(str, arch.choices)), repr(q), repr(t)])
    print(f"frontier size {len(frontier)} over {cardinality(env.space).count} architectures "
          f"-> {args.out}")
    return 0


def _cmd_replay(args) -> int:
    if not args.space and not args.space_file:
        raise ConfigError("replay needs --space or --space-file")
    if args.space_file:
        space = load_space(args.space_file)
    else:
        space = build_space(args.space, toy_blocks=args.toy_blocks or 4)
    policy = controller.load_policy(args.policy, space)
    arch = controller.argmax_architecture(policy)
    out = {"arch": list(arch.choices), "entropy": controller.entropy(policy)}
    if args.latency_table or args.table_seed is not None:
        table = (
            load_table(args.latency_table)
            if args.latency_table
            else make_synthetic_table(space, seed=args.table_seed)
        )
        out["T_ms"] = LatencyModel.build(space, table).latency(arch)
    print(json.dumps(out, sort_keys=True))
    return 0


def _cmd_report(args) -> int:
    records = []
    for path in args.logs:
        records.extend(loop.read_run_log(path))
    if not records:
        print("no records found", file=sys.stderr)
        return 1
    timings: dict[str, float] = {}
    for path in args.logs:
        try:
            for line in open(path + ".times"):
                rec = json.loads(line)
                timings[rec["config_hash"]] = timings.get(rec["config_hash"], 0.0) + rec["wall_time_s"]
        except FileNotFoundError:
            pass
    groups: dict[tuple[str, str], list[dict]] = {}
    for rec in records:
        groups.setdefault((rec["kind"], rec["config_hash"]), []).append(rec)
    print(f"{'kind':<14} {'config':<18} {'n':>3} {'Q mean+/-std':>20} {'T mean+/-std (ms)':>22}")
    rows_out = []
    for (kind, chash), recs in sorted(groups.items()):
        qs = [r["final"].get("standalone_Q", r["final"]["Q"]) for r in recs]
        ts = [r["final"]["T_ms"] for r in recs]
        n = len(recs)
        q_mean = sum(qs) / n
        t_mean = sum(ts) / n
        q_std = (sum((q - q_mean) ** 2 for q in qs) / n) ** 0.5
        t_std = (sum((t - t_mean) ** 2 for t in ts) / n) ** 0.5
        print(f"{kind:<14} {chash:<18} {n:>3} {q_mean:>12.4f} +/- {q_std:.4f} "
              f"{t_mean:>12.2f} +/- {t_std:.2f}")
        rows_out.append(
            {"kind": kind, "config_hash": chash, "runs": n, "Q_mean": q_mean,
             "Q_std": q_std, "T_mean": t_mean, "T_std": t_std}
        )
    cost_rows = baselines.cost_report(records, timings=timings)
    print("\nbudgets:")
    for row in cost_rows:
        wt = f"{row.wall_time_s:.2f}s" if row.wall_time_s else "-"
        print(f"  {row.kind:<14} {row.config_hash:<18} runs={row.runs} "
              f"evals={row.evaluations} batches={row.batches} "
              f"model-equivalents={row.model_equivalents:.1f} wall={wt}")
    ratio = baselines.cost_ratio(cost_rows)
    if ratio is not None:
        print(f"  wall-time ratio random-search / search = {ratio:.2f}")
    if args.out:
        with open(args.out, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(rows_out[0]))
            writer.writeheader()
            writer.writerows(rows_out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latnas",
                                     description="latency-constrained architecture search")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run the policy search")
    _add_env_flags(p)
    p.add_argument("--out", default="runs.jsonl", help="JSON-lines run log")
    p.add_argument("--save-policy", help="write the final policy as JSON")
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("random-search", help="latency-window random search baseline")
    _add_env_flags(p)
    p.add_argument("--candidates", type=int, default=20)
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--out", default="runs.jsonl")
    p.set_defaults(func=_cmd_random_search)

    p = sub.add_parser("cardinality", help="count architectures in a space")
    p.add_argument("--space", required=True)
    p.add_argument("--toy-blocks", dest="toy_blocks", type=int)
    p.set_defaults(func=_cmd_cardinality)

    p = sub.add_parser("reward-contour", help="emit a reward grid as CSV")
    p.add_argument("--reward", choices=("soft", "hard", "abs"), default="abs")
    p.add_argument("--beta", type=float)
    p.add_argument("--target-ms", dest="target_ms", type=float, required=True)
    p.add_argument("--q-range", dest="q_range", default="0.0:1.0")
    p.add_argument("--t-range", dest="t_range", required=True)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_reward_contour)

    p = sub.add_parser("frontier", help="enumerate the quality/latency Pareto frontier")
    _add_env_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_frontier)

    p = sub.add_parser("replay", help="re-derive the argmax architecture from a policy file")
    p.add_argument("--policy", required=True)
    p.add_argument("--space")
    p.add_argument("--space-file", dest="space_file")
    p.add_argument("--toy-blocks", dest="toy_blocks", type=int)
    p.add_argument("--latency-table", dest="latency_table")
    p.add_argument("--table-seed", dest="table_seed", type=int)
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("report", help="aggregate run logs into mean +/- std tables")
    p.add_argument("logs", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
