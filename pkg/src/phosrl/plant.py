"""Surrogate plant dynamics for chemical phosphorus dosing control.

The plant is a first-order mass balance: an influent load raises the effluent
phosphate concentration, a flush term washes it out, and the two precipitant
doses (JSF upstream, PAX downstream) each remove a saturating fraction per
step. JSF acts with an extra pipeline lag; PAX acts within the step. The
model sits behind a small interface so a data-driven dynamics model can be
dropped in later without touching the rest of the toolkit.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri


# ---------------------------------------------------------------------------
# cyclical time features
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeFeatures:
    """Sine/cosine encodings of hour-of-day, day-of-week and month-of-year."""

    sin_h: float
    cos_h: float
    sin_d: float
    cos_d: float
    sin_m: float
    cos_m: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.sin_h, self.cos_h, self.sin_d, self.cos_d, self.sin_m, self.cos_m]
        )


def encode_time(t: int, steps_per_hour: int, days_per_month: int = 30) -> TimeFeatures:
    """Encode a step index as cyclical hour/day/month features.

    The calendar is idealized: 24 h days, 7 day weeks, ``days_per_month`` day
    months. Fractions of an hour/day/month are kept so the encoding moves
    smoothly between steps.
    """
    if t < 0:
        raise ValueError(f"step index must be >= 0, got {t}")
    if steps_per_hour <= 0:
        raise ValueError(f"steps_per_hour must be > 0, got {steps_per_hour}")
    hours = t / steps_per_hour
    h = hours % 24.0
    d = (hours / 24.0) % 7.0
    m = (hours / (24.0 * days_per_month)) % 12.0
    ah = 2.0 * math.pi * h / 24.0
    ad = 2.0 * math.pi * d / 7.0
    am = 2.0 * math.pi * m / 12.0
    return TimeFeatures(
        sin_h=math.sin(ah), cos_h=math.cos(ah),
        sin_d=math.sin(ad), cos_d=math.cos(ad),
        sin_m=math.sin(am), cos_m=math.cos(am),
    )


# ---------------------------------------------------------------------------
# exogenous disturbances
# ---------------------------------------------------------------------------

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)
_IDX_STRIDE = np.uint64(0xD6E8FEB86659FD93)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer over uint64 arrays (wrapping arithmetic)."""
    z = x + _SM_GAMMA
    z = (z ^ (z >> np.uint64(30))) * _SM_M1
    z = (z ^ (z >> np.uint64(27))) * _SM_M2
    return z ^ (z >> np.uint64(31))


def _counter_normals(key: np.uint64, idx: np.ndarray) -> np.ndarray:
    """Standard normals addressed by integer counter; pure in (key, idx)."""
    with np.errstate(over="ignore"):
        h = _splitmix64(key ^ (idx.astype(np.uint64) * _IDX_STRIDE))
    u = (h >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
    u = np.clip(u, 2.0 ** -54, 1.0 - 2.0 ** -54)
    return ndtri(u)


@dataclass
class ExogenousConfig:
    """Shape of the synthetic influent-load / flow / temperature streams."""

    base_load: float = 1.0          # dimensionless load at the daily mean
    diurnal_amp: float = 0.35       # relative amplitude of the daily cycle
    weekly_amp: float = 0.15        # relative amplitude of the weekly cycle
    load_noise_std: float = 0.10    # stationary std of AR(1) load noise
    load_phase_hours: float = 10.0  # hour of day where the load peaks
    flow_diurnal_amp: float = 0.25
    flow_noise_std: float = 0.05
    flow_phase_hours: float = 12.0
    temp_amp: float = 1.0
    temp_peak_month: float = 6.0
    temp_noise_std: float = 0.02
    noise_rho: float = 0.9          # AR(1) coefficient, shared by all channels
    noise_taps: int = 150           # moving-average truncation of the AR(1)
    steps_per_day: int = 720
    days_per_month: int = 30


class ExogenousGenerator:
    """Deterministic disturbance stream: diurnal + weekly cycles + AR(1) noise.

    Every value is a pure function of (step index, seed): querying the same
    index twice, or the same index from two generators with equal seeds,
    returns bit-identical numbers. The AR(1) noise is realized as a truncated
    moving average over counter-addressed innovations, which is what makes
    random access possible.
    """

    _CHANNELS = 3  # load proxy, flow factor, temperature proxy

    def __init__(self, cfg: ExogenousConfig, seed: int):
        self.cfg = cfg
        self.seed = int(seed)
        with np.errstate(over="ignore"):
            base = _splitmix64(np.uint64([self.seed & 0xFFFFFFFFFFFFFFFF]))
            self._keys = [
                _splitmix64(base + np.uint64(c + 1) * _SM_GAMMA)[0]
                for c in range(self._CHANNELS)
            ]
        rho = cfg.noise_rho
        taps = np.arange(cfg.noise_taps, dtype=np.float64)
        # innovation std chosen so the truncated process has the target
        # stationary standard deviation
        self._kernel = math.sqrt(max(1.0 - rho * rho, 0.0)) * rho ** taps

    def _noise(self, channel: int, std: float, t0: int, n: int) -> np.ndarray:
        if std == 0.0:
            return np.zeros(n)
        k = self.cfg.noise_taps
        idx = np.arange(t0 - k + 1, t0 + n)
        eps = _counter_normals(self._keys[channel], np.maximum(idx, 0))
        eps[idx < 0] = 0.0  # stream starts at t = 0
        return std * np.convolve(eps, self._kernel)[k - 1:k - 1 + n]

    def window(self, t0: int, n: int) -> np.ndarray:
        """Exogenous vectors for steps t0 .. t0+n-1, shape (n, 3)."""
        if t0 < 0 or n < 0:
            raise ValueError(f"invalid window ({t0}, {n})")
        cfg = self.cfg
        t = np.arange(t0, t0 + n, dtype=np.float64)
        hours = t * 24.0 / cfg.steps_per_day
        days = hours / 24.0
        months = days / cfg.days_per_month
        load = cfg.base_load * (
            1.0
            + cfg.diurnal_amp * np.cos(2.0 * np.pi * (hours - cfg.load_phase_hours) / 24.0)
            + cfg.weekly_amp * np.cos(2.0 * np.pi * (days - 2.0) / 7.0)
            + self._noise(0, cfg.load_noise_std, t0, n)
        )
        flow = (
            1.0
            + cfg.flow_diurnal_amp * np.cos(2.0 * np.pi * (hours - cfg.flow_phase_hours) / 24.0)
            + self._noise(1, cfg.flow_noise_std, t0, n)
        )
        temp = (
            cfg.temp_amp * np.cos(2.0 * np.pi * (months - cfg.temp_peak_month) / 12.0)
            + self._noise(2, cfg.temp_noise_std, t0, n)
        )
        return np.stack([load, flow, temp], axis=1)

    def at(self, t: int) -> np.ndarray:
        """Exogenous vector for a single step, shape (3,)."""
        return self.window(t, 1)[0]


def generate_exogenous(t: int, seed: int, cfg: ExogenousConfig | None = None) -> np.ndarray:
    """Convenience wrapper: one exogenous vector for (t, seed)."""
    return ExogenousGenerator(cfg or ExogenousConfig(), seed).at(t)


# ---------------------------------------------------------------------------
# plant model
# ---------------------------------------------------------------------------

@dataclass
class PlantState:
    """Ground-truth plant condition at one step.

    c_p     effluent phosphate concentration, mg/L
    q_w     wastewater flow, m^3/h
    x_e     exogenous vector (load proxy, flow factor, temperature proxy)
    latent  pipeline of JSF doses commanded but not yet acting, L/h
    t       step index (one step = one dosing interval)
    """

    c_p: float
    q_w: float
    x_e: np.ndarray
    latent: np.ndarray
    t: int

    def validate(self) -> None:
        if not np.isfinite(self.c_p) or self.c_p < 0:
            raise ValueError(f"c_p must be finite and >= 0, got {self.c_p}")
        if not np.isfinite(self.q_w) or self.q_w <= 0:
            raise ValueError(f"q_w must be finite and > 0, got {self.q_w}")
        if not np.all(np.isfinite(self.x_e)):
            raise ValueError(f"x_e must be finite, got {self.x_e}")
        if not np.all(np.isfinite(self.latent)):
            raise ValueError(f"latent must be finite, got {self.latent}")


@dataclass
class PlantConfig:
    """Constants of the mass-balance surrogate."""

    q_w_base: float = 600.0        # m^3/h at unit flow factor
    flush_rate: float = 0.10       # fraction of c_p washed out per step
    inflow_rate: float = 0.30      # mg/L added per step at unit load
    jsf_removal_max: float = 0.50  # asymptotic removal fraction, JSF
    jsf_half_flow: float = 150.0   # L/h at half of the asymptote
    pax_removal_max: float = 0.60
    pax_half_flow: float = 100.0
    jsf_lag_steps: int = 3         # extra steps before a JSF dose acts
    temp_efficacy_gain: float = 0.10
    q_max_jsf: float = 300.0       # pump limit, L/h
    q_max_pax: float = 400.0
    min_flow_factor: float = 0.2   # floor on the flow disturbance factor
    init_cp_low: float = 0.3       # mg/L, reset draws c_p uniformly here
    init_cp_high: float = 2.0

    @property
    def q_max(self) -> np.ndarray:
        return np.array([self.q_max_jsf, self.q_max_pax])


class PlantModel(ABC):
    """Step/reset interface every plant implementation provides.

    Implementations must be deterministic: identical (state, action,
    exogenous input) produce an identical next state.
    """

    @abstractmethod
    def reset(self, seed: int, t0: int, x_e0: np.ndarray) -> PlantState:
        """Initial state at step t0 under exogenous input x_e0."""

    @abstractmethod
    def step(self, state: PlantState, action: np.ndarray, x_e_next: np.ndarray) -> PlantState:
        """Next state after applying dose flows (q_jsf, q_pax) in L/h."""


class MassBalancePlant(PlantModel):
    """First-order mass balance with saturating dose removal."""

    def __init__(self, cfg: PlantConfig | None = None):
        self.cfg = cfg or PlantConfig()

    def reset(self, seed: int, t0: int, x_e0: np.ndarray) -> PlantState:
        cfg = self.cfg
        rng = np.random.default_rng(seed)
        c_p0 = rng.uniform(cfg.init_cp_low, cfg.init_cp_high)
        q_w = cfg.q_w_base * max(float(x_e0[1]), cfg.min_flow_factor)
        latent = np.zeros(cfg.jsf_lag_steps)
        state = PlantState(c_p=c_p0, q_w=q_w, x_e=np.asarray(x_e0, dtype=float),
                           latent=latent, t=t0)
        state.validate()
        return state

    def _removal(self, q: float, e_max: float, q_half: float, eff_scale: float) -> float:
        # saturating removal fraction, capped so concentrations stay positive
        e = min(e_max * eff_scale, 0.95)
        return e * q / (q + q_half) if q > 0 else 0.0

    def step(self, state: PlantState, action: np.ndarray, x_e_next: np.ndarray) -> PlantState:
        cfg = self.cfg
        action = np.asarray(action, dtype=float)
        if action.shape != (2,) or not np.all(np.isfinite(action)):
            raise ValueError(f"action must be two finite dose flows, got {action}")
        if np.any(action < 0) or action[0] > cfg.q_max_jsf or action[1] > cfg.q_max_pax:
            raise ValueError(f"dose flows outside [0, q_max]: {action}")
        state.validate()
        x_e_next = np.asarray(x_e_next, dtype=float)
        if not np.all(np.isfinite(x_e_next)):
            raise ValueError(f"exogenous input must be finite, got {x_e_next}")

        # JSF doses travel through an upstream pipeline before acting
        if cfg.jsf_lag_steps > 0:
            q_jsf_eff = float(state.latent[0])
            latent = np.append(state.latent[1:], action[0])
        else:
            q_jsf_eff = float(action[0])
            latent = state.latent

        load = max(float(x_e_next[0]), 0.0) * cfg.inflow_rate
        c_mid = (1.0 - cfg.flush_rate) * state.c_p + load

        eff_scale = float(np.clip(1.0 + cfg.temp_efficacy_gain * x_e_next[2], 0.5, 1.5))
        e_jsf = self._removal(q_jsf_eff, cfg.jsf_removal_max, cfg.jsf_half_flow, eff_scale)
        e_pax = self._removal(float(action[1]), cfg.pax_removal_max, cfg.pax_half_flow, eff_scale)
        c_next = max(c_mid * (1.0 - e_jsf) * (1.0 - e_pax), 0.0)

        q_w = cfg.q_w_base * max(float(x_e_next[1]), cfg.min_flow_factor)
        return PlantState(c_p=c_next, q_w=q_w, x_e=x_e_next, latent=latent, t=state.t + 1)
