"""Gym-style dosing environment over the surrogate plant.

Observations are flat float vectors: the three exogenous channels and the
phosphate concentration min-max normalized to [0, 1], followed by the six
cyclical time features in [-1, 1]. Actions are the two dose flows in L/h,
clipped to the pump limits. Episodes are cut out of an endless timeline by
one of four schedulers that vary start placement and length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .plant import (
    ExogenousConfig,
    ExogenousGenerator,
    MassBalancePlant,
    PlantConfig,
    PlantModel,
    encode_time,
)
from .reward import RewardConfig, reward as compute_step_reward

OBS_NAMES = ("load", "flow", "temp", "c_p",
             "sin_h", "cos_h", "sin_d", "cos_d", "sin_m", "cos_m")
CP_INDEX = 3
N_EXOGENOUS = 3


def minmax_normalize(values: np.ndarray, lows: np.ndarray, highs: np.ndarray) -> np.ndarray:
    """Scale features to [0, 1] by per-feature bounds; out-of-range clips."""
    lows = np.asarray(lows, dtype=float)
    highs = np.asarray(highs, dtype=float)
    if not (np.all(np.isfinite(lows)) and np.all(np.isfinite(highs))):
        raise ValueError("normalization bounds must be finite")
    if np.any(lows >= highs):
        raise ValueError("normalization bounds must satisfy min < max")
    return np.clip((np.asarray(values, dtype=float) - lows) / (highs - lows), 0.0, 1.0)


@dataclass
class EnvConfig:
    """Timing, episode scheduling and observation scaling."""

    steps_per_hour: int = 30          # one step = 2 minutes
    episode_mode: str = "E1"
    fixed_length: int = 288
    length_min: int = 72
    length_max: int = 576
    horizon: int = 259200             # one idealized 360-day year
    # min-max bounds for (load, flow, temp, c_p); picked from surrogate sweeps
    obs_lows: tuple = (0.0, 0.0, -1.5, 0.0)
    obs_highs: tuple = (2.2, 2.0, 1.5, 6.0)

    def validate(self) -> None:
        if self.steps_per_hour <= 0:
            raise ValueError("steps_per_hour must be > 0")
        if self.episode_mode not in EpisodeScheduler.MODES:
            raise ValueError(f"unknown episode mode {self.episode_mode!r}")
        if self.fixed_length <= 0:
            raise ValueError("fixed_length must be > 0")
        if not (0 < self.length_min <= self.length_max):
            raise ValueError(
                f"need 0 < length_min <= length_max, got "
                f"[{self.length_min}, {self.length_max}]"
            )
        if self.horizon <= self.length_max:
            raise ValueError("horizon must exceed the longest episode")
        if len(self.obs_lows) != 4 or len(self.obs_highs) != 4:
            raise ValueError("obs bounds cover (load, flow, temp, c_p)")


class EpisodeScheduler:
    """Draws (start, length) pairs for successive episodes.

    E1  constant length, consecutive starts
    E2  random length, consecutive starts
    E3  constant length, random starts
    E4  random length, random starts

    Consecutive modes begin at a seeded point on the timeline and each
    episode starts exactly where the previous one ended (wrapping at the
    horizon); random modes draw starts uniformly over the horizon.
    """

    MODES = ("E1", "E2", "E3", "E4")

    def __init__(self, mode: str, fixed_length: int, length_range: tuple[int, int],
                 horizon: int, seed: int):
        if mode not in self.MODES:
            raise ValueError(f"unknown episode mode {mode!r}")
        lo, hi = length_range
        if not (0 < lo <= hi):
            raise ValueError(f"need 0 < min <= max in length_range, got {length_range}")
        self.mode = mode
        self.fixed_length = int(fixed_length)
        self.length_range = (int(lo), int(hi))
        self.horizon = int(horizon)
        self.rng = np.random.default_rng(seed)
        self.cursor = int(self.rng.integers(0, self.horizon))

    @property
    def consecutive(self) -> bool:
        return self.mode in ("E1", "E2")

    @property
    def random_length(self) -> bool:
        return self.mode in ("E2", "E4")

    def next_episode(self) -> tuple[int, int]:
        if self.random_length:
            lo, hi = self.length_range
            length = int(self.rng.integers(lo, hi + 1))
        else:
            length = self.fixed_length
        if self.consecutive:
            start = self.cursor
            self.cursor = (self.cursor + length) % self.horizon
        else:
            start = int(self.rng.integers(0, self.horizon))
        return start, length


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


@dataclass
class ObservationLayout:
    """Names and scaling of the flat observation vector."""

    names: tuple = OBS_NAMES
    lows: np.ndarray = field(default_factory=lambda: np.zeros(4))
    highs: np.ndarray = field(default_factory=lambda: np.ones(4))

    @property
    def dim(self) -> int:
        return len(self.names)

    def observed_cp(self, observation: np.ndarray) -> float:
        """Concentration in mg/L as encoded in an observation vector."""
        lo, hi = self.lows[CP_INDEX], self.highs[CP_INDEX]
        return float(observation[CP_INDEX]) * (hi - lo) + lo


class DosingEnv:
    """Single-instance environment: observe, dose, get billed."""

    def __init__(self, env_cfg: EnvConfig | None = None,
                 plant_cfg: PlantConfig | None = None,
                 reward_cfg: RewardConfig | None = None,
                 exo_cfg: ExogenousConfig | None = None,
                 seed: int = 0,
                 plant: PlantModel | None = None):
        self.env_cfg = env_cfg or EnvConfig()
        self.plant_cfg = plant_cfg or PlantConfig()
        self.reward_cfg = reward_cfg or RewardConfig()
        self.exo_cfg = exo_cfg or ExogenousConfig()
        self.env_cfg.validate()
        self.reward_cfg.validate()
        if self.exo_cfg.steps_per_day != 24 * self.env_cfg.steps_per_hour:
            raise ValueError(
                "exogenous steps_per_day must equal 24 * steps_per_hour: "
                f"{self.exo_cfg.steps_per_day} vs {24 * self.env_cfg.steps_per_hour}"
            )
        expected_t_dose = 60.0 / self.env_cfg.steps_per_hour
        if abs(self.reward_cfg.t_dose - expected_t_dose) > 1e-9:
            raise ValueError(
                f"reward t_dose {self.reward_cfg.t_dose} min does not match "
                f"step duration {expected_t_dose} min"
            )

        self.seed = int(seed)
        self.plant = plant or MassBalancePlant(self.plant_cfg)
        self.exogenous = ExogenousGenerator(self.exo_cfg, self.seed)
        self._rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0xE5]))
        self.scheduler = EpisodeScheduler(
            self.env_cfg.episode_mode, self.env_cfg.fixed_length,
            (self.env_cfg.length_min, self.env_cfg.length_max),
            self.env_cfg.horizon,
            seed=np.random.SeedSequence([self.seed, 0x5C]),
        )
        self.layout = ObservationLayout(
            lows=np.array(self.env_cfg.obs_lows, dtype=float),
            highs=np.array(self.env_cfg.obs_highs, dtype=float),
        )
        self.action_low = np.zeros(2)
        self.action_high = self.plant_cfg.q_max
        self.neutral_action = np.zeros(2)

        self._state = None
        self._exo_window: np.ndarray | None = None
        self._episode_start = 0
        self._remaining = 0
        self._done = True
        self.episode_count = 0
        self.clip_events = 0

    # -- observation assembly ------------------------------------------------

    @property
    def observation_dim(self) -> int:
        return self.layout.dim

    def _observe(self, state) -> np.ndarray:
        raw = np.array([state.x_e[0], state.x_e[1], state.x_e[2], state.c_p])
        scaled = minmax_normalize(raw, self.layout.lows, self.layout.highs)
        time_feats = encode_time(state.t, self.env_cfg.steps_per_hour).as_array()
        return np.concatenate([scaled, time_feats])

    # -- episode control -----------------------------------------------------

    def reset(self) -> np.ndarray:
        start, length = self.scheduler.next_episode()
        plant_seed = int(self._rng.integers(0, 2 ** 63))
        self._exo_window = self.exogenous.window(start, length + 1)
        state = self.plant.reset(plant_seed, start, self._exo_window[0])
        self._state = state
        self._episode_start = start
        self._remaining = length
        self._done = False
        self.episode_count += 1
        return self._observe(state)

    def step(self, action: np.ndarray) -> StepResult:
        if self._state is None:
            raise RuntimeError("step() before reset()")
        if self._done:
            raise RuntimeError("step() after episode end; call reset()")
        action = np.asarray(action, dtype=float)
        if action.shape != (2,) or not np.all(np.isfinite(action)):
            raise ValueError(f"action must be two finite dose flows, got {action}")
        clipped = np.clip(action, self.action_low, self.action_high)
        was_clipped = not np.array_equal(clipped, action)
        if was_clipped:
            self.clip_events += 1

        idx = self._state.t - self._episode_start
        x_e_next = self._exo_window[idx + 1]
        self._state = self.plant.step(self._state, clipped, x_e_next)
        breakdown = compute_step_reward(self._state, clipped, self.reward_cfg)

        self._remaining -= 1
        self._done = self._remaining == 0
        obs = self._observe(self._state)
        info = {
            "cost": breakdown,
            "c_p": self._state.c_p,
            "q_w": self._state.q_w,
            "action": clipped,
            "clipped": was_clipped,
            "t": self._state.t,
        }
        return StepResult(observation=obs, reward=breakdown.reward,
                          done=self._done, info=info)

    @property
    def done(self) -> bool:
        return self._done

    @property
    def exo_window(self) -> np.ndarray:
        """The exogenous stream backing the current episode, read-only."""
        if self._exo_window is None:
            raise RuntimeError("no episode active; call reset()")
        view = self._exo_window.view()
        view.flags.writeable = False
        return view
