"""Evaluation protocol, action/demand alignment, and report writers.

Every policy is evaluated with the same per-(seed, episode-index) seeds,
so comparisons across policies see identical demand realizations. For
recurrent policies the trial protocol (episodes_per_trial > 1 with
carried hidden state) mirrors deployment: the reported reward is the
final episode of the trial, with the full per-episode series kept.

All files are written with repr-formatted floats and fixed row order, so
identical configs reproduce byte-identical outputs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import derive_seed, run_episode
from .scenario import City

__all__ = ["EvalRow", "EvalReport", "cosine_alignment", "evaluate_policy",
           "write_alignment_csv", "write_report_csv", "write_report_json",
           "write_training_log"]


def cosine_alignment(a: np.ndarray, d_out: np.ndarray) -> float:
    """Cosine similarity between an action and per-station outbound demand.

    Defined as 0 when either vector is all zeros; scale-invariant in each
    argument otherwise.
    """
    a = np.asarray(a, dtype=np.float64)
    d_out = np.asarray(d_out, dtype=np.float64)
    if a.shape != d_out.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {d_out.shape}")
    na, nd = float(np.linalg.norm(a)), float(np.linalg.norm(d_out))
    if na == 0.0 or nd == 0.0:
        return 0.0
    return float(np.dot(a, d_out) / (na * nd))


@dataclass
class EvalRow:
    seed: int
    reward: float                     # final episode of the trial
    served: int
    reb_cost: float
    episode_rewards: list[float]
    alignments: list[list[float]]     # per episode, per step


@dataclass
class EvalReport:
    policy: str
    city_id: str
    episodes_per_trial: int
    rows: list[EvalRow] = field(default_factory=list)

    @property
    def reward_mean(self) -> float:
        return float(np.mean([r.reward for r in self.rows]))

    @property
    def reward_std(self) -> float:
        vals = [r.reward for r in self.rows]
        return float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0

    @property
    def served_mean(self) -> float:
        return float(np.mean([r.served for r in self.rows]))

    @property
    def reb_cost_mean(self) -> float:
        return float(np.mean([r.reb_cost for r in self.rows]))

    def per_episode_reward_means(self) -> list[float]:
        return [float(np.mean([r.episode_rewards[k] for r in self.rows]))
                for k in range(self.episodes_per_trial)]

    def mean_alignment(self, episode: int) -> float:
        vals = [a for r in self.rows for a in r.alignments[episode]]
        return float(np.mean(vals)) if vals else 0.0


def evaluate_policy(policy, city: City, seeds, *, policy_name: str,
                    episodes_per_trial: int = 1, trial_protocol: bool = False,
                    placement: str = "uniform", horizon: int = 6) -> EvalReport:
    """Run the policy over the seed list and collect per-seed statistics.

    With trial_protocol=True the policy's hidden state (when it has one)
    is zeroed once per seed and carried across the trial's episodes along
    with the (action, reward, done) inputs.
    """
    report = EvalReport(policy=policy_name, city_id=city.id,
                        episodes_per_trial=episodes_per_trial)
    for seed in seeds:
        if trial_protocol and hasattr(policy, "reset_hidden"):
            policy.reset_hidden(city.num_stations)
        carry = None
        ep_rewards, aligns = [], []
        last = None
        for ep in range(episodes_per_trial):
            ep_seed = derive_seed(seed, ep)
            traj = run_episode(policy, city, ep_seed,
                               carry=carry if trial_protocol else None,
                               placement=placement, horizon=horizon)
            if trial_protocol:
                carry = (traj.actions[-1], traj.rewards[-1], 1.0)
                if hasattr(policy, "detach_hidden"):
                    policy.detach_hidden()
            ep_rewards.append(traj.total_reward)
            aligns.append(traj.demand_alignment())
            last = traj
        report.rows.append(EvalRow(
            seed=int(seed),
            reward=last.total_reward,
            served=last.served,
            reb_cost=last.rebalancing_cost,
            episode_rewards=ep_rewards,
            alignments=aligns,
        ))
    return report


# ---------------------------------------------------------------------------
# Writers (deterministic bytes)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_report_csv(path: str | Path, reports: list[EvalReport]) -> None:
    """Per-seed rows plus one aggregate row per policy."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "city", "seed", "reward", "served", "reb_cost", "reward_std"])
        for rep in reports:
            for row in rep.rows:
                w.writerow([rep.policy, rep.city_id, row.seed, _fmt(row.reward),
                            row.served, _fmt(row.reb_cost), ""])
            w.writerow([rep.policy, rep.city_id, "aggregate", _fmt(rep.reward_mean),
                        _fmt(rep.served_mean), _fmt(rep.reb_cost_mean),
                        _fmt(rep.reward_std)])


def write_alignment_csv(path: str | Path, reports: list[EvalReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "seed", "episode", "step", "alignment"])
        for rep in reports:
            for row in rep.rows:
                for ep, series in enumerate(row.alignments):
                    for t, v in enumerate(series):
                        w.writerow([rep.policy, row.seed, ep, t, _fmt(v)])


def write_report_json(path: str | Path, reports: list[EvalReport],
                      config: dict | None = None) -> None:
    doc = {"config": config or {}, "policies": []}
    for rep in reports:
        doc["policies"].append({
            "policy": rep.policy,
            "city": rep.city_id,
            "episodes_per_trial": rep.episodes_per_trial,
            "rows": [{
                "seed": r.seed,
                "reward": r.reward,
                "served": r.served,
                "reb_cost": r.reb_cost,
                "episode_rewards": r.episode_rewards,
            } for r in rep.rows],
            "aggregate": {
                "reward_mean": rep.reward_mean,
                "reward_std": rep.reward_std,
                "served_mean": rep.served_mean,
                "reb_cost_mean": rep.reb_cost_mean,
                "per_episode_reward_means": rep.per_episode_reward_means(),
            },
        })
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def write_training_log(path: str | Path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in keys])
