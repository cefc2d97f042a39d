"""Evaluation harness: deterministic rollouts, cost accounting, comparisons.

Metrics are accumulated from the per-step cost breakdowns the
environment reports, which are ground truth even when the observation
stream is delayed. Comparisons run every controller on identically
seeded environments and verify, by hashing, that they saw bit-identical
exogenous streams.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .pid import ActionLog, replay_action
from .sac import SACAgent

TRACE_FIELDS = ("step", "c_p", "q_jsf", "q_pax", "reward", "kappa", "omega",
                "c_jsf", "c_pax", "tax", "cost_total")


@dataclass
class EvalMetrics:
    """One episode's scoreboard: reward, mean target, itemized costs."""

    n_steps: int
    total_reward: float
    avg_reward: float
    avg_target: float
    tot_c_jsf: float
    tot_c_pax: float
    tot_tax: float
    tot_costs: float
    target_dev_pct: float

    FIELDS = ("n_steps", "total_reward", "avg_reward", "avg_target",
              "tot_c_jsf", "tot_c_pax", "tot_tax", "tot_costs",
              "target_dev_pct")

    def validate(self) -> None:
        if self.tot_costs != self.tot_c_jsf + self.tot_c_pax + self.tot_tax:
            raise ValueError("cost totals must add up exactly")
        if not 0.0 <= self.target_dev_pct <= 100.0:
            raise ValueError(
                f"target_dev_pct must be in [0, 100], got {self.target_dev_pct}")

    @classmethod
    def from_rows(cls, rows: list, x_ideal: float) -> "EvalMetrics":
        """Accumulate per-step trace rows into one episode scoreboard."""
        if not rows:
            raise ValueError("cannot build metrics from zero steps")
        n = len(rows)
        c_p = np.array([r["c_p"] for r in rows])
        tot_c_jsf = float(sum(r["c_jsf"] for r in rows))
        tot_c_pax = float(sum(r["c_pax"] for r in rows))
        tot_tax = float(sum(r["tax"] for r in rows))
        total_reward = float(sum(r["reward"] for r in rows))
        metrics = cls(
            n_steps=n,
            total_reward=total_reward,
            avg_reward=total_reward / n,
            avg_target=float(c_p.mean()),
            tot_c_jsf=tot_c_jsf,
            tot_c_pax=tot_c_pax,
            tot_tax=tot_tax,
            tot_costs=tot_c_jsf + tot_c_pax + tot_tax,
            target_dev_pct=100.0 * float(np.mean(c_p > x_ideal)),
        )
        metrics.validate()
        return metrics

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.FIELDS}


def base_env(env):
    """Unwrap delay layers down to the plant-facing environment."""
    while hasattr(env, "env"):
        env = env.env
    return env


def exo_stream_hash(env) -> str:
    """Digest of the exogenous window backing the current episode."""
    window = base_env(env).exo_window
    return hashlib.sha256(np.ascontiguousarray(window).tobytes()).hexdigest()


# -- controller adapters ------------------------------------------------------


class SACPolicy:
    """Deterministic (tanh of the mean) policy from a trained agent."""

    def __init__(self, agent: SACAgent, env, deterministic: bool = True):
        if agent.obs_dim != env.observation_dim:
            env_mode = getattr(getattr(env, "cfg", None), "mode", "none")
            raise ValueError(
                f"agent trained for delay mode {agent.delay_mode!r} expects "
                f"observations of dim {agent.obs_dim}, but the environment "
                f"(delay mode {env_mode!r}) emits dim {env.observation_dim}"
            )
        self.agent = agent
        self.deterministic = deterministic

    def reset(self) -> None:
        pass

    def __call__(self, observation: np.ndarray) -> np.ndarray:
        return self.agent.act(observation, deterministic=self.deterministic)


class ReplayPolicy:
    """Reissues a logged action sequence, indexed by global step count."""

    def __init__(self, log: ActionLog):
        log.validate()
        self.log = log
        self._t = 0

    def reset(self) -> None:
        pass

    def __call__(self, observation: np.ndarray) -> np.ndarray:
        action = replay_action(self.log, self._t)
        self._t += 1
        return action


# -- rollouts and aggregation -------------------------------------------------


def rollout_episode(policy, env, x_ideal: float):
    """One full episode; returns (metrics, trace rows, exogenous hash)."""
    obs = env.reset()
    policy.reset()
    stream_hash = exo_stream_hash(env)
    rows = []
    done = False
    while not done:
        res = env.step(policy(obs))
        cost = res.info["cost"]
        rows.append({
            "step": res.info["t"],
            "c_p": res.info["c_p"],
            "q_jsf": float(res.info["action"][0]),
            "q_pax": float(res.info["action"][1]),
            "reward": cost.reward,
            "kappa": res.info.get("kappa_t", 0),
            "omega": res.info.get("omega_t", 0),
            "c_jsf": cost.c_jsf,
            "c_pax": cost.c_pax,
            "tax": cost.tax,
            "cost_total": cost.total,
        })
        obs = res.observation
        done = res.done
    return EvalMetrics.from_rows(rows, x_ideal), rows, stream_hash


def aggregate_metrics(per_episode: list):
    """Field-wise mean and standard deviation over episode metrics.

    The mean re-derives tot_costs from the mean cost parts so the
    additivity invariant keeps holding; the std is a plain dict because
    standard deviations do not add.
    """
    if not per_episode:
        return None, None
    stack = {f: np.array([getattr(m, f) for m in per_episode], dtype=float)
             for f in EvalMetrics.FIELDS}
    mean_kwargs = {f: float(stack[f].mean()) for f in EvalMetrics.FIELDS}
    mean_kwargs["n_steps"] = int(round(mean_kwargs["n_steps"]))
    mean_kwargs["tot_costs"] = (mean_kwargs["tot_c_jsf"]
                                + mean_kwargs["tot_c_pax"]
                                + mean_kwargs["tot_tax"])
    mean = EvalMetrics(**mean_kwargs)
    std = {f: float(stack[f].std()) for f in EvalMetrics.FIELDS}
    return mean, std


@dataclass
class EvalReport:
    per_episode: list
    mean: EvalMetrics | None
    std: dict | None
    traces: list = field(default_factory=list)
    stream_hashes: list = field(default_factory=list)


def evaluate_policy(policy, env, n_episodes: int, x_ideal: float) -> EvalReport:
    """n_episodes deterministic episodes on one environment instance."""
    per_episode, traces, hashes = [], [], []
    for _ in range(n_episodes):
        metrics, rows, stream = rollout_episode(policy, env, x_ideal)
        per_episode.append(metrics)
        traces.append(rows)
        hashes.append(stream)
    mean, std = aggregate_metrics(per_episode)
    return EvalReport(per_episode=per_episode, mean=mean, std=std,
                      traces=traces, stream_hashes=hashes)


# -- controller comparison ----------------------------------------------------


@dataclass
class ComparisonResult:
    names: list
    seeds: list
    rows: list                  # dicts: controller, seed + metric fields
    aggregates: dict            # name -> (mean EvalMetrics, std dict)
    traces: dict                # (name, seed) -> trace rows
    stream_hashes: dict         # name -> {seed: tuple of episode hashes}


def compare_controllers(controllers: list, env_factory: Callable,
                        seeds: list, n_episodes: int,
                        x_ideal: float) -> ComparisonResult:
    """Run every controller over the same seeded environments.

    controllers: list of (name, policy_factory) where policy_factory(env)
    builds the controller for a freshly seeded environment. Each
    controller consumes identical exogenous streams per seed; a hash
    mismatch aborts the comparison.
    """
    if len(controllers) < 2:
        raise ValueError("need at least two controllers to compare")
    names = [name for name, _ in controllers]
    if len(set(names)) != len(names):
        raise ValueError("controller names must be distinct")

    rows, traces, hashes = [], {}, {name: {} for name in names}
    per_seed_metrics = {name: [] for name in names}
    for name, factory in controllers:
        for seed in seeds:
            env = env_factory(seed)
            policy = factory(env)
            report = evaluate_policy(policy, env, n_episodes, x_ideal)
            if report.mean is None:
                raise ValueError("comparison requires n_episodes >= 1")
            per_seed_metrics[name].append(report.mean)
            rows.append({"controller": name, "seed": seed,
                         **report.mean.as_dict()})
            traces[(name, seed)] = [r for rs in report.traces for r in rs]
            hashes[name][seed] = tuple(report.stream_hashes)

    reference = names[0]
    for name in names[1:]:
        for seed in seeds:
            if hashes[name][seed] != hashes[reference][seed]:
                raise RuntimeError(
                    f"exogenous streams diverged between {reference!r} and "
                    f"{name!r} at seed {seed}; comparison is not like-for-like"
                )

    aggregates = {name: aggregate_metrics(per_seed_metrics[name])
                  for name in names}
    return ComparisonResult(names=names, seeds=list(seeds), rows=rows,
                            aggregates=aggregates, traces=traces,
                            stream_hashes=hashes)


# -- CSV persistence ----------------------------------------------------------


def write_trace_csv(path, rows: list) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRACE_FIELDS)
        for row in rows:
            writer.writerow([repr(float(row[f])) if f not in ("step", "kappa", "omega")
                             else int(row[f]) for f in TRACE_FIELDS])


def read_trace_csv(path) -> list:
    rows = []
    with open(path, newline="") as handle:
        for raw in csv.DictReader(handle):
            row = {f: (int(raw[f]) if f in ("step", "kappa", "omega")
                       else float(raw[f])) for f in TRACE_FIELDS}
            rows.append(row)
    return rows


def write_metrics_csv(path, rows: list) -> None:
    """Rows: dicts with controller/seed/episode labels plus metric fields."""
    label_keys = [k for k in ("controller", "seed", "episode", "statistic")
                  if rows and k in rows[0]]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(label_keys + list(EvalMetrics.FIELDS))
        for row in rows:
            writer.writerow([row[k] for k in label_keys]
                            + [repr(float(row[f])) for f in EvalMetrics.FIELDS])


def comparison_rows(result: ComparisonResult) -> list:
    """Per-seed rows plus one aggregate mean/std pair per controller."""
    rows = [dict(r, statistic="seed") for r in result.rows]
    for name in result.names:
        mean, std = result.aggregates[name]
        rows.append({"controller": name, "seed": "all", "statistic": "mean",
                     **mean.as_dict()})
        rows.append({"controller": name, "seed": "all", "statistic": "std",
                     **std})
    return rows
