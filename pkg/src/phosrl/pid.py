"""PID dosing baseline and the replay-from-log comparison protocol.

The live controller drives both dose channels from one measured
concentration error with independent gains per channel, an anti-windup
clamp on the shared integral, and output clipping to the dose box. The
replay path reproduces a logged action sequence exactly, with no
interpolation.

Default gains come from step-response runs on the surrogate plant: the
PAX channel carries most of the correction (it acts within the step),
the cheaper but lagged JSF channel runs at a constant baseline plus a
mild proportional term, and the integral gain is sized so a 1 mg/L
offset is worked off in roughly 100 steps without windup overshoot.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import ObservationLayout


@dataclass
class PIDConfig:
    """Gains per channel (JSF, PAX), shared setpoint and integral clamp."""

    kp: tuple = (20.0, 60.0)
    ki: tuple = (0.5, 2.0)
    kd: tuple = (0.0, 40.0)
    setpoint: float = 1.0            # mg/L
    baseline: tuple = (60.0, 10.0)   # resting dose, L/h
    out_low: tuple = (0.0, 0.0)
    out_high: tuple = (300.0, 400.0)
    integral_clamp: float = 40.0

    def validate(self, action_low=None, action_high=None) -> None:
        if self.setpoint <= 0:
            raise ValueError("setpoint must be > 0")
        if self.integral_clamp <= 0:
            raise ValueError("integral_clamp must be > 0")
        lo = np.zeros(2) if action_low is None else np.asarray(action_low)
        hi = (np.array([300.0, 400.0]) if action_high is None
              else np.asarray(action_high))
        for ch in range(2):
            if not lo[ch] <= self.out_low[ch] < self.out_high[ch] <= hi[ch]:
                raise ValueError(
                    f"channel {ch} output bounds "
                    f"[{self.out_low[ch]}, {self.out_high[ch]}] fall outside "
                    f"the action box [{lo[ch]}, {hi[ch]}]"
                )
            if not lo[ch] <= self.baseline[ch] <= hi[ch]:
                raise ValueError(f"channel {ch} baseline outside the action box")


@dataclass
class PIDState:
    integral: float = 0.0
    prev_error: float | None = None


def pid_step(cfg: PIDConfig, state: PIDState, measured_c_p: float) -> np.ndarray:
    """One controller step; mutates state, returns the dose pair in L/h."""
    if measured_c_p < 0.0 or not np.isfinite(measured_c_p):
        raise ValueError(f"measured concentration must be >= 0, got {measured_c_p}")
    error = measured_c_p - cfg.setpoint
    state.integral = float(np.clip(state.integral + error,
                                   -cfg.integral_clamp, cfg.integral_clamp))
    derivative = 0.0 if state.prev_error is None else error - state.prev_error
    state.prev_error = error
    dose = np.empty(2)
    for ch in range(2):
        raw = (cfg.baseline[ch] + cfg.kp[ch] * error
               + cfg.ki[ch] * state.integral + cfg.kd[ch] * derivative)
        dose[ch] = np.clip(raw, cfg.out_low[ch], cfg.out_high[ch])
    return dose


class PIDPolicy:
    """Adapter: reads the measured concentration out of an observation."""

    def __init__(self, cfg: PIDConfig, layout: ObservationLayout):
        cfg.validate()
        self.cfg = cfg
        self.layout = layout
        self.state = PIDState()

    def reset(self) -> None:
        self.state = PIDState()

    def __call__(self, observation: np.ndarray) -> np.ndarray:
        return pid_step(self.cfg, self.state,
                        self.layout.observed_cp(observation))


@dataclass
class ActionLog:
    """Time-indexed dose sequence with strictly increasing step indices."""

    steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    actions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def validate(self) -> None:
        if len(self.steps) != len(self.actions):
            raise ValueError("steps and actions must align")
        if len(self.steps) > 1 and not np.all(np.diff(self.steps) > 0):
            raise ValueError("step indices must be strictly increasing")

    def append(self, step: int, action: np.ndarray) -> None:
        if len(self.steps) and step <= self.steps[-1]:
            raise ValueError(
                f"step {step} does not extend the log (last {self.steps[-1]})")
        self.steps = np.append(self.steps, int(step))
        self.actions = np.vstack([self.actions, np.asarray(action, dtype=float)])

    def to_csv(self, path) -> None:
        self.validate()
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["step", "q_jsf", "q_pax"])
            for step, (q_jsf, q_pax) in zip(self.steps, self.actions):
                writer.writerow([int(step), repr(float(q_jsf)), repr(float(q_pax))])

    @classmethod
    def from_csv(cls, path) -> "ActionLog":
        steps, actions = [], []
        with open(path, newline="") as handle:
            for row in csv.DictReader(handle):
                steps.append(int(row["step"]))
                actions.append([float(row["q_jsf"]), float(row["q_pax"])])
        log = cls(steps=np.array(steps, dtype=int),
                  actions=np.array(actions, dtype=float).reshape(-1, 2))
        log.validate()
        return log


def replay_action(log: ActionLog, t: int) -> np.ndarray:
    """The logged action at step t, exactly as recorded."""
    idx = np.searchsorted(log.steps, t)
    if idx >= len(log.steps) or log.steps[idx] != t:
        lo = log.steps[0] if len(log.steps) else None
        hi = log.steps[-1] if len(log.steps) else None
        raise ValueError(f"step {t} not in log range [{lo}, {hi}]")
    return log.actions[idx].copy()


def record_pid_run(env, cfg: PIDConfig, n_steps: int) -> tuple:
    """Drive env with the live PID for n_steps; returns (log, c_p trace).

    Episode ends reset the controller state; logged indices are global
    step counts so replays line up one to one.
    """
    policy = PIDPolicy(cfg, env.layout if hasattr(env, "layout")
                       else env.env.layout)
    log = ActionLog()
    trace = []
    obs = env.reset()
    for t in range(n_steps):
        action = policy(obs)
        log.append(t, action)
        res = env.step(action)
        trace.append(res.info["c_p"])
        obs = res.observation
        if res.done:
            obs = env.reset()
            policy.reset()
    return log, np.array(trace)
