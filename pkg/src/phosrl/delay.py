"""Action and observation delay wrappers.

The wrapper intercepts the agent-environment loop: issued actions are held
back kappa_t steps before the plant receives them, and the agent sees the
plant state from omega_t steps ago. Delays are zero, constant at their
maxima, or drawn fresh each step from inclusive discrete-uniform ranges.
In the delayed modes the observation is augmented with the two scaled
delay indicators and a ring buffer of recent actions so the policy can
disambiguate what is actually in flight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import StepResult

DELAY_MODES = ("none", "constant", "random")


@dataclass
class DelayConfig:
    """Delay scenario: mode plus inclusive step ranges for both lags."""

    mode: str = "none"
    kappa_min: int = 0
    kappa_max: int = 0
    omega_min: int = 0
    omega_max: int = 0
    per_channel: bool = False     # independent action delay per dose channel
    seed: int = 0
    # clamp kappa_t so a later action never lands before an earlier one
    enforce_ordering: bool = False
    # emit the plain base observation while still delaying the dynamics;
    # used to evaluate agents trained without augmentation under delays
    augment_obs: bool = True

    def validate(self) -> None:
        if self.mode not in DELAY_MODES:
            raise ValueError(f"unknown delay mode {self.mode!r}")
        for name in ("kappa_min", "kappa_max", "omega_min", "omega_max"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 0:
                raise ValueError(f"{name} must be a non-negative integer")
        if self.kappa_min > self.kappa_max:
            raise ValueError("kappa_min must not exceed kappa_max")
        if self.omega_min > self.omega_max:
            raise ValueError("omega_min must not exceed omega_max")
        if self.mode == "none" and (self.kappa_max or self.omega_max
                                    or self.kappa_min or self.omega_min):
            raise ValueError("mode 'none' requires all delay bounds to be 0")
        if self.enforce_ordering and self.per_channel:
            raise ValueError("enforce_ordering supports shared action delay only")

    @property
    def capacity(self) -> int:
        return int(self.kappa_max) + int(self.omega_max)


class ActionBuffer:
    """Ring of the most recent actions, oldest first when flattened.

    Slots not yet filled this episode hold the neutral action.
    """

    def __init__(self, capacity: int, action_dim: int,
                 neutral: np.ndarray | None = None):
        if capacity < 0 or action_dim <= 0:
            raise ValueError("capacity must be >= 0 and action_dim > 0")
        self.capacity = int(capacity)
        self.action_dim = int(action_dim)
        self.neutral = (np.zeros(action_dim) if neutral is None
                        else np.asarray(neutral, dtype=float).copy())
        self.reset()

    def reset(self) -> None:
        self._slots = np.tile(self.neutral, (self.capacity, 1))
        self.n_pushed = 0

    def push(self, action: np.ndarray) -> None:
        action = np.asarray(action, dtype=float)
        if action.shape != (self.action_dim,):
            raise ValueError(f"expected action of dim {self.action_dim}")
        if self.capacity > 0:
            self._slots = np.roll(self._slots, -1, axis=0)
            self._slots[-1] = action
        self.n_pushed += 1

    @property
    def padding_slots(self) -> int:
        return max(0, self.capacity - self.n_pushed)

    def flat(self) -> np.ndarray:
        return self._slots.reshape(-1).copy()

    def assert_invariants(self) -> None:
        assert self._slots.shape == (self.capacity, self.action_dim)
        pad = self.padding_slots
        for i in range(pad):
            assert np.array_equal(self._slots[i], self.neutral)


def sample_delays(cfg: DelayConfig, rng: np.random.Generator,
                  action_dim: int = 2):
    """Draw this step's (kappa_t, omega_t) according to the configured mode.

    kappa_t is a scalar int, or an int vector of per-channel delays when
    cfg.per_channel is set.
    """
    if cfg.mode == "none":
        kappa = np.zeros(action_dim, dtype=int) if cfg.per_channel else 0
        return kappa, 0
    if cfg.mode == "constant":
        kappa = (np.full(action_dim, cfg.kappa_max, dtype=int)
                 if cfg.per_channel else int(cfg.kappa_max))
        return kappa, int(cfg.omega_max)
    if cfg.per_channel:
        kappa = rng.integers(cfg.kappa_min, cfg.kappa_max + 1, size=action_dim)
        kappa = kappa.astype(int)
    else:
        kappa = int(rng.integers(cfg.kappa_min, cfg.kappa_max + 1))
    omega = int(rng.integers(cfg.omega_min, cfg.omega_max + 1))
    return kappa, omega


@dataclass
class DelayedObservation:
    """Base observation plus delay indicators and the action buffer."""

    base: np.ndarray
    kappa_t: object            # int, or int vector in per-channel mode
    omega_t: int
    buffer: np.ndarray         # flattened, oldest to newest

    def as_array(self, kappa_max: int, omega_max: int) -> np.ndarray:
        kappa = np.atleast_1d(np.asarray(self.kappa_t, dtype=float))
        kappa_scaled = kappa / kappa_max if kappa_max > 0 else np.zeros_like(kappa)
        omega_scaled = self.omega_t / omega_max if omega_max > 0 else 0.0
        return np.concatenate([
            np.asarray(self.base, dtype=float),
            kappa_scaled,
            [omega_scaled],
            np.asarray(self.buffer, dtype=float),
        ])


def augment(obs: np.ndarray, kappa_t, omega_t: int,
            buffer: ActionBuffer) -> DelayedObservation:
    flat = buffer.flat()
    if flat.size != buffer.capacity * buffer.action_dim:
        raise ValueError("buffer not at capacity")
    return DelayedObservation(base=np.asarray(obs, dtype=float),
                              kappa_t=kappa_t, omega_t=int(omega_t),
                              buffer=flat)


def deaugment(flat: np.ndarray, base_dim: int, cfg: DelayConfig,
              action_dim: int = 2) -> DelayedObservation:
    """Slice a flat augmented vector back into its parts.

    Delay indicators are recovered as exact integers by unscaling.
    """
    flat = np.asarray(flat, dtype=float)
    n_kappa = action_dim if cfg.per_channel else 1
    expected = base_dim + n_kappa + 1 + cfg.capacity * action_dim
    if flat.size != expected:
        raise ValueError(f"expected augmented dim {expected}, got {flat.size}")
    base = flat[:base_dim]
    kappa_scaled = flat[base_dim:base_dim + n_kappa]
    omega_scaled = flat[base_dim + n_kappa]
    kappa = np.rint(kappa_scaled * cfg.kappa_max).astype(int)
    if not cfg.per_channel:
        kappa = int(kappa[0])
    omega = int(round(omega_scaled * cfg.omega_max))
    return DelayedObservation(base=base, kappa_t=kappa, omega_t=omega,
                              buffer=flat[base_dim + n_kappa + 1:])


class DelayWrapper:
    """Env wrapper enforcing action and observation delays per episode."""

    def __init__(self, env, cfg: DelayConfig):
        cfg.validate()
        self.env = env
        self.cfg = cfg
        self.action_dim = int(np.asarray(env.action_high).size)
        self.capacity = cfg.capacity
        self.buffer = ActionBuffer(self.capacity, self.action_dim)
        self.rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xDE]))
        self._n_kappa = self.action_dim if cfg.per_channel else 1
        # issued actions this episode in env units; index t-1 holds a_t
        self._issued: list[np.ndarray] = []
        self._obs_hist: list[np.ndarray] = []
        self._rew_hist: list[float] = []
        self._t = 0
        self._last_applied_idx = 0
        self._reset_delays = (0, 0)

    @property
    def augmented(self) -> bool:
        # degenerate all-zero bounds behave exactly like mode none
        degenerate = self.cfg.kappa_max == 0 and self.cfg.omega_max == 0
        return self.cfg.mode != "none" and self.cfg.augment_obs and not degenerate

    @property
    def observation_dim(self) -> int:
        base = self.env.observation_dim
        if not self.augmented:
            return base
        return base + self._n_kappa + 1 + self.capacity * self.action_dim

    @property
    def action_low(self) -> np.ndarray:
        return self.env.action_low

    @property
    def action_high(self) -> np.ndarray:
        return self.env.action_high

    def _emit(self, base_obs: np.ndarray, kappa, omega: int) -> np.ndarray:
        if not self.augmented:
            return base_obs
        delayed = augment(base_obs, kappa, omega, self.buffer)
        return delayed.as_array(self.cfg.kappa_max, self.cfg.omega_max)

    def _normalize_action(self, action: np.ndarray) -> np.ndarray:
        span = self.action_high - self.action_low
        return np.clip((action - self.action_low) / span, 0.0, 1.0)

    def reset(self) -> np.ndarray:
        obs0 = self.env.reset()
        self.buffer.reset()
        self._issued = []
        self._obs_hist = [obs0]
        self._rew_hist = [0.0]
        self._t = 0
        self._last_applied_idx = 0
        kappa, omega = sample_delays(self.cfg, self.rng, self.action_dim)
        self._reset_delays = (kappa, omega)
        return self._emit(obs0, kappa, omega)

    def _applied_action(self, kappa) -> np.ndarray:
        """Action the plant receives now: issued kappa steps ago, per channel."""
        kappas = (np.asarray(kappa) if self.cfg.per_channel
                  else np.full(self.action_dim, kappa, dtype=int))
        out = np.empty(self.action_dim)
        for ch in range(self.action_dim):
            idx = self._t - int(kappas[ch])      # 1-based issue step
            out[ch] = (self._issued[idx - 1][ch] if idx >= 1
                       else self.env.neutral_action[ch])
        return out

    def step(self, action: np.ndarray) -> StepResult:
        if not self._obs_hist:
            raise RuntimeError("step() before reset()")
        action = np.asarray(action, dtype=float)
        self._t += 1
        kappa, omega = sample_delays(self.cfg, self.rng, self.action_dim)
        if self.cfg.enforce_ordering and not self.cfg.per_channel:
            idx = max(self._t - int(kappa), self._last_applied_idx)
            kappa = self._t - idx
            self._last_applied_idx = idx
        self._issued.append(action.copy())
        self.buffer.push(self._normalize_action(action))
        self.buffer.assert_invariants()

        applied = self._applied_action(kappa)
        res = self.env.step(applied)
        self._obs_hist.append(res.observation)
        self._rew_hist.append(res.reward)

        lag_idx = max(0, self._t - omega)
        base_obs = self._obs_hist[lag_idx]
        reward = self._rew_hist[lag_idx]
        info = dict(res.info)
        info["kappa_t"] = kappa
        info["omega_t"] = omega
        info["applied_action"] = applied
        return StepResult(observation=self._emit(base_obs, kappa, omega),
                          reward=reward, done=res.done, info=info)

    @property
    def done(self) -> bool:
        return self.env.done

    @property
    def neutral_action(self) -> np.ndarray:
        return self.env.neutral_action
