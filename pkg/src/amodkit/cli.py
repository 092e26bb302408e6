"""Experiment runner: train / meta-train / eval / disturb / sensitivity.

Exit codes: 0 on success, 2 on configuration problems (missing files,
bad schemas, mismatched checkpoints), 3 when a simulation invariant
breaks. Output files (report.json/report.csv/alignment.csv,
training_log.csv, sensitivity.csv) are byte-identical across re-runs
with the same configuration and seeds.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .agent import (A2CConfig, ActorCritic, MpcPolicy, NeuralPolicy,
                    TrainingMode, baseline_policy, meta_train, train_standard)
from .env import derive_seed
from .errors import InvariantViolation, ScenarioError
from .flowopt import DEFAULT_MPC_HORIZON
from .neural.checkpoint import CheckpointError
from .report import (evaluate_policy, write_alignment_csv, write_report_csv,
                     write_report_json, write_training_log)
from .scenario import (City, SynthCityParams, apply_disturbance,
                       generate_synthetic_city, load_disturbances, load_scenario)

_POOL_SHUFFLE_TAG = 0x9001


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip() != ""]
    except ValueError as exc:
        raise ScenarioError(f"bad --seeds value {text!r}") from exc
    if not seeds:
        raise ScenarioError("--seeds must name at least one seed")
    return seeds


def load_pool(path: str | Path) -> list[City]:
    """A pool file either lists scenario paths or describes synthetic tasks.

    {"scenarios": ["a.json", ...]}                    paths relative to the file
    {"synthetic": {"count": 8, "seed": 0, "params": {...SynthCityParams overrides}}}
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON: {exc}") from exc
    if "scenarios" in raw:
        return [load_scenario(path.parent / p) for p in raw["scenarios"]]
    if "synthetic" in raw:
        spec = raw["synthetic"]
        params = SynthCityParams(**spec.get("params", {}))
        base = int(spec.get("seed", 0))
        return [generate_synthetic_city(params, seed=base + i)
                for i in range(int(spec["count"]))]
    raise ScenarioError(f"{path}: pool file needs a 'scenarios' or 'synthetic' key")


def _load_city(args) -> City:
    if not args.scenario:
        raise ScenarioError("--scenario is required")
    city = load_scenario(args.scenario)
    if getattr(args, "disturbance", None):
        for d in load_disturbances(args.disturbance):
            city = apply_disturbance(city, d)
    return city


def build_policy(name: str, checkpoint: str | None, horizon: int, mpc_horizon: int):
    """Returns (policy, resolved horizon). Neural policies adopt the
    projection horizon recorded in their checkpoint unless overridden."""
    if name in ("random", "ed"):
        return baseline_policy(name), horizon
    if name in ("mpc-oracle", "mpc-forecast"):
        return MpcPolicy(name.split("-")[1], horizon=mpc_horizon), horizon
    if name == "neural":
        if not checkpoint:
            raise ScenarioError("policy 'neural' needs --checkpoint")
        model, meta = ActorCritic.load(checkpoint)
        return NeuralPolicy(model, stochastic=True), int(meta.get("horizon", horizon))
    raise ScenarioError(f"unknown policy {name!r}")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands


def cmd_validate_scenario(args) -> int:
    city = load_scenario(args.scenario)
    print(f"{args.scenario}: ok ({city.num_stations} stations, fleet {city.fleet_size}, "
          f"T={city.episode_length})")
    return 0


def cmd_train(args) -> int:
    out = _outdir(args)
    config = A2CConfig(horizon=args.horizon)
    if args.scenario:
        mode, tasks = TrainingMode.SINGLE_CITY, [_load_city(args)]
    elif args.pool:
        mode, tasks = TrainingMode.MULTI_CITY_ZERO_SHOT, load_pool(args.pool)
    else:
        raise ScenarioError("train needs --scenario (single-city) or --pool (zero-shot)")
    all_rows = []
    for seed in _parse_seeds(args.seeds):
        model, rows = train_standard(mode, tasks, args.episodes, seed, config=config)
        model.save(out / f"checkpoint-s{seed}.bin",
                   extra_meta={"horizon": args.horizon, "mode": mode.value, "seed": seed})
        for r in rows:
            all_rows.append({"seed": seed, **r})
    write_training_log(out / "training_log.csv", all_rows)
    print(f"trained {mode.value} on {len(tasks)} task(s); wrote {out}/training_log.csv")
    return 0


def cmd_meta_train(args) -> int:
    out = _outdir(args)
    config = A2CConfig(horizon=args.horizon)
    tasks = load_pool(args.pool)
    all_rows = []
    for seed in _parse_seeds(args.seeds):
        model, rows = meta_train(tasks, args.trials, args.episodes_per_trial,
                                 seed, config=config)
        model.save(out / f"checkpoint-s{seed}.bin",
                   extra_meta={"horizon": args.horizon, "mode": "meta_rl", "seed": seed})
        for r in rows:
            all_rows.append({"seed": seed, **r})
    write_training_log(out / "training_log.csv", all_rows)
    print(f"meta-trained on {len(tasks)} tasks; wrote {out}/training_log.csv")
    return 0


def cmd_eval(args) -> int:
    out = _outdir(args)
    city = _load_city(args)
    policy, horizon = build_policy(args.policy, args.checkpoint, args.horizon,
                                   args.mpc_horizon)
    seeds = _parse_seeds(args.seeds)
    n = args.episodes_per_trial
    report = evaluate_policy(policy, city, seeds, policy_name=args.policy,
                             episodes_per_trial=n, trial_protocol=n > 1,
                             horizon=horizon)
    config = {"scenario": str(args.scenario), "policy": args.policy,
              "seeds": seeds, "episodes_per_trial": n,
              "disturbance": str(args.disturbance) if args.disturbance else None}
    write_report_json(out / "report.json", [report], config)
    write_report_csv(out / "report.csv", [report])
    write_alignment_csv(out / "alignment.csv", [report])
    print(f"{args.policy} on {city.id}: reward {report.reward_mean!r} "
          f"(+/- {report.reward_std!r}) over {len(seeds)} seed(s)")
    return 0


def cmd_disturb(args) -> int:
    out = _outdir(args)
    base = load_scenario(args.scenario)
    city = base
    for d in load_disturbances(args.disturbance):
        city = apply_disturbance(city, d)
    seeds = _parse_seeds(args.seeds)
    n = args.episodes_per_trial
    reports = []
    for spec in args.policy:
        name, _, ckpt = spec.partition("=")
        policy, horizon = build_policy(name, ckpt or None, args.horizon, args.mpc_horizon)
        reports.append(evaluate_policy(policy, city, seeds, policy_name=name,
                                       episodes_per_trial=n, trial_protocol=n > 1,
                                       horizon=horizon))
    config = {"scenario": str(args.scenario), "disturbance": str(args.disturbance),
              "policies": list(args.policy), "seeds": seeds, "episodes_per_trial": n}
    write_report_json(out / "report.json", reports, config)
    write_report_csv(out / "report.csv", reports)
    write_alignment_csv(out / "alignment.csv", reports)
    for rep in reports:
        print(f"{rep.policy}: reward {rep.reward_mean!r} (+/- {rep.reward_std!r})")
    return 0


def cmd_sensitivity(args) -> int:
    out = _outdir(args)
    pool = load_pool(args.pool)
    eval_tasks = load_pool(args.eval_pool)
    sizes = [int(s) for s in args.pool_sizes.split(",")]
    if sizes != sorted(sizes):
        raise ScenarioError("--pool-sizes must be ascending")
    if sizes[-1] > len(pool):
        raise ScenarioError(f"pool size {sizes[-1]} exceeds available tasks ({len(pool)})")
    seeds = _parse_seeds(args.seeds)
    config = A2CConfig(horizon=args.horizon)
    rows = []
    for seed in seeds:
        # Nested pools: one shuffled order per master seed; sizes take prefixes.
        order = np.random.default_rng(derive_seed(seed, _POOL_SHUFFLE_TAG)).permutation(len(pool))
        for size in sizes:
            subset = [pool[i] for i in order[:size]]
            model, _log = meta_train(subset, args.trials, args.episodes_per_trial,
                                     seed, config=config)
            policy = NeuralPolicy(model, stochastic=True)
            rewards = []
            for task in eval_tasks:
                rep = evaluate_policy(policy, task, seeds=[seed],
                                      policy_name="meta",
                                      episodes_per_trial=args.episodes_per_trial,
                                      trial_protocol=True, horizon=args.horizon)
                rewards.append(rep.reward_mean)
            rows.append({"pool_size": size, "seed": seed,
                         "heldout_reward": float(np.mean(rewards))})
    write_training_log(out / "sensitivity.csv", rows)
    print(f"wrote {out}/sensitivity.csv ({len(rows)} rows)")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="amodkit",
                                description="Fleet rebalancing experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, seeds=True):
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--horizon", type=int, default=6,
                        help="availability projection horizon (observation width)")
        sp.add_argument("--mpc-horizon", type=int, default=DEFAULT_MPC_HORIZON)
        if seeds:
            sp.add_argument("--seeds", default="0", help="comma-separated seeds")

    sp = sub.add_parser("validate-scenario", help="check a scenario file")
    sp.add_argument("--scenario", required=True)
    sp.set_defaults(func=cmd_validate_scenario)

    sp = sub.add_parser("train", help="single-city or multi-city episode training")
    sp.add_argument("--scenario")
    sp.add_argument("--pool")
    sp.add_argument("--episodes", type=int, default=10000)
    sp.add_argument("--disturbance")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("meta-train", help="trial-based meta-training over a pool")
    sp.add_argument("--pool", required=True)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--episodes-per-trial", type=int, default=10)
    common(sp)
    sp.set_defaults(func=cmd_meta_train)

    sp = sub.add_parser("eval", help="evaluate one policy on a scenario")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--policy", required=True,
                    help="random | ed | mpc-oracle | mpc-forecast | neural")
    sp.add_argument("--checkpoint")
    sp.add_argument("--episodes-per-trial", type=int, default=1)
    sp.add_argument("--disturbance")
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("disturb", help="compare policies under a disturbance")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--disturbance", required=True)
    sp.add_argument("--policy", action="append", required=True,
                    help="repeatable; 'name' or 'neural=checkpoint.bin'")
    sp.add_argument("--episodes-per-trial", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_disturb)

    sp = sub.add_parser("sensitivity", help="reward vs number of meta-training tasks")
    sp.add_argument("--pool", required=True)
    sp.add_argument("--eval-pool", required=True)
    sp.add_argument("--pool-sizes", required=True, help="ascending, e.g. 1,2,4,8")
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--episodes-per-trial", type=int, default=10)
    common(sp)
    sp.set_defaults(func=cmd_sensitivity)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, CheckpointError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
