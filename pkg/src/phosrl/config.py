"""Run configuration: one YAML file, strict keys, typed blocks.

Every block maps onto the dataclass config of the module it drives.
Unknown keys anywhere are hard errors listing the offending dotted
paths, because a silently ignored typo ("gama: 0.95") is the cheapest
way to invalidate a reproduction run.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import yaml

from .delay import DelayConfig
from .env import EnvConfig
from .pid import PIDConfig
from .plant import ExogenousConfig, PlantConfig
from .pool import PoolConfig
from .reward import RewardConfig
from .sac import SACConfig


@dataclass
class EvalConfig:
    """Evaluation protocol: fixed-length episodes, deterministic policy."""

    n_episodes: int = 5
    horizon: int = 720           # steps per evaluation episode
    deterministic: bool = True

    def validate(self) -> None:
        if self.n_episodes < 0:
            raise ValueError("n_episodes must be >= 0")
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")


@dataclass
class RunConfig:
    """Everything one CLI invocation needs, fully validated."""

    run_id: str = "run"
    seeds: list = field(default_factory=lambda: [0])
    out_dir: str = "runs"
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    delay: DelayConfig = field(default_factory=DelayConfig)
    pool: PoolConfig = field(default_factory=PoolConfig)
    sac: SACConfig = field(default_factory=SACConfig)
    pid: PIDConfig = field(default_factory=PIDConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> None:
        if not self.run_id:
            raise ValueError("run id must be non-empty")
        if not self.seeds or not all(isinstance(s, int) for s in self.seeds):
            raise ValueError("seeds must be a non-empty list of integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        self.env.validate()
        self.reward.validate()
        self.delay.validate()
        self.pool.validate()
        self.sac.validate()
        self.pid.validate()
        self.eval.validate()

    def exogenous_cfg(self) -> ExogenousConfig:
        return ExogenousConfig(steps_per_day=24 * self.env.steps_per_hour)

    def plant_cfg(self) -> PlantConfig:
        return PlantConfig()


_BLOCKS = {
    "env": EnvConfig,
    "reward": RewardConfig,
    "delay": DelayConfig,
    "pool": PoolConfig,
    "sac": SACConfig,
    "pid": PIDConfig,
    "eval": EvalConfig,
}
_RUN_KEYS = ("id", "seeds", "out_dir")


def _coerce(value, default):
    """YAML lists become tuples where the dataclass default is a tuple."""
    if isinstance(default, tuple) and isinstance(value, list):
        return tuple(value)
    return value


def _build_block(cls, raw: dict, prefix: str, unknown: list):
    known = {f.name: f.default for f in dc_fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            unknown.append(f"{prefix}.{key}")
        else:
            kwargs[key] = _coerce(value, known[key])
    return cls(**kwargs)


def parse_config(raw: dict) -> RunConfig:
    """Validate a parsed YAML mapping into a RunConfig."""
    if not isinstance(raw, dict):
        raise ValueError("config root must be a mapping")
    unknown = []
    cfg = RunConfig()
    for key, value in raw.items():
        if key == "run":
            for rk, rv in (value or {}).items():
                if rk not in _RUN_KEYS:
                    unknown.append(f"run.{rk}")
                elif rk == "id":
                    cfg.run_id = str(rv)
                elif rk == "seeds":
                    cfg.seeds = list(rv)
                else:
                    cfg.out_dir = str(rv)
        elif key in _BLOCKS:
            setattr(cfg, key, _build_block(_BLOCKS[key], value or {}, key, unknown))
        else:
            unknown.append(key)
    if unknown:
        raise ValueError("unknown config keys: " + ", ".join(sorted(unknown)))
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    return parse_config(yaml.safe_load(text) or {})
