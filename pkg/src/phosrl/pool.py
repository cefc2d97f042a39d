"""Batched environment pool: sixteen delayed dosing envs stepped in lockstep.

Four envs run under each episode scheduler (E1 through E4 by default) so a
single trainer sees a mix of consecutive and randomly placed episodes.
Each env gets its own seed and its own delay stream; the delay bounds and
economics are shared. Stepping is sequential by default; a thread-per-env
mode exists and produces bit-identical results because envs share nothing.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .delay import DelayConfig, DelayWrapper
from .env import DosingEnv, EnvConfig, EpisodeScheduler, StepResult
from .plant import ExogenousConfig, PlantConfig
from .reward import RewardConfig


@dataclass
class PoolConfig:
    """Pool layout: how many envs, which schedulers, which seeds."""

    n_envs: int = 16
    setups: dict = field(default_factory=lambda: {"E1": 4, "E2": 4, "E3": 4, "E4": 4})
    base_seed: int = 0
    seeds: list | None = None        # explicit per-env seeds, else derived
    parallel: bool = False           # thread-per-env stepping

    def validate(self) -> None:
        if self.n_envs <= 0:
            raise ValueError("n_envs must be > 0")
        if sum(self.setups.values()) != self.n_envs:
            raise ValueError(
                f"setup counts {dict(self.setups)} must sum to n_envs={self.n_envs}"
            )
        for mode, count in self.setups.items():
            if mode not in EpisodeScheduler.MODES:
                raise ValueError(f"unknown scheduler setup {mode!r}")
            if count <= 0:
                raise ValueError(f"setup {mode} needs a positive env count")
        if self.seeds is not None:
            if len(self.seeds) != self.n_envs:
                raise ValueError("need one seed per env")
            if len(set(self.seeds)) != self.n_envs:
                raise ValueError("per-env seeds must be distinct")

    def resolved_seeds(self) -> list:
        if self.seeds is not None:
            return list(self.seeds)
        return [self.base_seed + i for i in range(self.n_envs)]


class EnvPool:
    """Owns n envs and exposes batched reset/step in fixed env order."""

    def __init__(self, pool_cfg: PoolConfig | None = None,
                 env_cfg: EnvConfig | None = None,
                 plant_cfg: PlantConfig | None = None,
                 reward_cfg: RewardConfig | None = None,
                 exo_cfg: ExogenousConfig | None = None,
                 delay_cfg: DelayConfig | None = None):
        self.cfg = pool_cfg or PoolConfig()
        self.cfg.validate()
        env_cfg = env_cfg or EnvConfig()
        delay_cfg = delay_cfg or DelayConfig()
        delay_cfg.validate()
        self.delay_cfg = delay_cfg

        self.setups: list[str] = []
        for mode, count in self.cfg.setups.items():
            self.setups.extend([mode] * count)
        seeds = self.cfg.resolved_seeds()
        # decorrelate per-env delay streams while sharing the delay bounds
        delay_children = np.random.SeedSequence(delay_cfg.seed).spawn(self.cfg.n_envs)

        self.envs: list[DelayWrapper] = []
        for i in range(self.cfg.n_envs):
            try:
                inner = DosingEnv(
                    env_cfg=replace(env_cfg, episode_mode=self.setups[i]),
                    plant_cfg=plant_cfg, reward_cfg=reward_cfg,
                    exo_cfg=exo_cfg, seed=seeds[i],
                )
                per_env_delay = replace(
                    delay_cfg, seed=int(delay_children[i].generate_state(1)[0]))
                self.envs.append(DelayWrapper(inner, per_env_delay))
            except Exception as exc:
                raise RuntimeError(f"env {i} construction failed: {exc}") from exc

    @property
    def n_envs(self) -> int:
        return self.cfg.n_envs

    @property
    def observation_dim(self) -> int:
        return self.envs[0].observation_dim

    @property
    def action_low(self) -> np.ndarray:
        return self.envs[0].action_low

    @property
    def action_high(self) -> np.ndarray:
        return self.envs[0].action_high

    def reset_all(self) -> np.ndarray:
        return np.stack([env.reset() for env in self.envs])

    def _step_one(self, pair) -> StepResult:
        env, action = pair
        res = env.step(action)
        if res.done:
            info = dict(res.info)
            info["terminal_observation"] = res.observation
            fresh = env.reset()
            res = StepResult(observation=fresh, reward=res.reward,
                             done=True, info=info)
        return res

    def step_all(self, actions) -> list[StepResult]:
        actions = np.asarray(actions, dtype=float)
        if len(actions) != self.cfg.n_envs:
            raise ValueError(
                f"got {len(actions)} actions for {self.cfg.n_envs} envs")
        pairs = list(zip(self.envs, actions))
        if self.cfg.parallel:
            with ThreadPoolExecutor(max_workers=self.cfg.n_envs) as pool:
                return list(pool.map(self._step_one, pairs))
        return [self._step_one(p) for p in pairs]
