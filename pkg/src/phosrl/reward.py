"""Reward economics of a dosing step: chemical costs, phosphorus tax, penalty.

Each step is billed for the two precipitant flows and for the phosphorus mass
leaving the plant, then the whole bill is inflated by a penalty coefficient
that grows with the distance of the effluent concentration from the target.
The reward is the negated, penalty-inflated bill, so cheaper and cleaner
operation scores higher.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass
class RewardConfig:
    """Prices, tax rate and penalty shape used to score one dosing step."""

    pr_jsf: float = 0.20       # currency per liter of JSF
    pr_pax: float = 3.54       # currency per liter of PAX
    t_rate: float = 183.64     # currency per kilogram of phosphorus
    t_dose: float = 2.0        # dosing interval, minutes
    x_ideal: float = 1.5       # target concentration, mg/L
    penalty_mode: str = "nonlinear"
    # nonlinear penalty a * exp(z * x + c) + d; defaults give zero penalty at
    # x = 0 and roughly 4x bill inflation at the target concentration
    a: float = 0.01
    z: float = 4.0
    c: float = 0.0
    d: float = -0.01
    exp_cap: float = 60.0      # saturate the penalty exponent here

    def validate(self) -> None:
        for name in ("pr_jsf", "pr_pax", "t_rate", "t_dose", "x_ideal"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.penalty_mode not in ("linear", "nonlinear"):
            raise ValueError(f"unknown penalty_mode {self.penalty_mode!r}")
        if self.penalty_mode == "nonlinear":
            residual = self.a * math.exp(self.c) + self.d
            if abs(residual) > 1e-12:
                raise ValueError(
                    "nonlinear penalty must vanish at x = 0: "
                    f"a*exp(c) + d = {residual:g}"
                )


@dataclass
class CostBreakdown:
    """Every intermediate quantity behind one step's reward."""

    c_jsf: float      # JSF chemical cost, currency
    c_pax: float      # PAX chemical cost, currency
    tax: float        # phosphorus tax, currency
    total: float      # c_jsf + c_pax + tax
    m_p: float        # phosphorus mass, kg
    p_coef: float     # penalty coefficient
    reward: float
    penalty_saturated: bool = False

    CSV_FIELDS = ("c_jsf", "c_pax", "tax", "total", "m_p", "p_coef", "reward")

    def as_row(self) -> list[float]:
        return [getattr(self, f) for f in self.CSV_FIELDS]


def chemical_cost(q: float, price: float, t_dose: float) -> float:
    """Cost of pumping a dose flow q (L/h) for t_dose minutes."""
    if q < 0:
        raise ValueError(f"dose flow must be >= 0, got {q}")
    if price <= 0 or t_dose <= 0:
        raise ValueError("price and t_dose must be > 0")
    return price * q * t_dose / 60.0


def phosphorus_mass(c_p: float, q_w: float, t_dose: float) -> float:
    """Kilograms of phosphorus leaving with the effluent during one step."""
    if c_p < 0:
        raise ValueError(f"concentration must be >= 0, got {c_p}")
    if q_w <= 0:
        raise ValueError(f"wastewater flow must be > 0, got {q_w}")
    # mg/L * m^3/h * min: dividing by 60000 yields kilograms
    return c_p * q_w * t_dose / 60000.0


def tax(m_p: float, t_rate: float) -> float:
    """Green tax on the emitted phosphorus mass."""
    if m_p < 0:
        raise ValueError(f"mass must be >= 0, got {m_p}")
    return t_rate * m_p


def penalty_linear(x: float, x_ideal: float, tax_value: float) -> float:
    """Two-branch penalty: free inside (0, x_ideal], -100 * tax outside.

    Implemented exactly as printed, including the strict lower bound at 0 and
    the negative coefficient on violation (which can flip the reward sign for
    large tax values); kept behind the non-default mode switch.
    """
    if x < 0:
        raise ValueError(f"concentration must be >= 0, got {x}")
    if 0.0 < x <= x_ideal:
        return 0.0
    return -100.0 * tax_value


def penalty_nonlinear(x: float, cfg: RewardConfig) -> tuple[float, bool]:
    """Exponential penalty a * exp(z * x + c) + d.

    Returns (coefficient, saturated). The exponent is capped at
    ``cfg.exp_cap`` so exploratory states never overflow; the flag reports
    when the cap was hit.
    """
    if x < 0:
        raise ValueError(f"concentration must be >= 0, got {x}")
    exponent = cfg.z * x + cfg.c
    saturated = exponent > cfg.exp_cap
    if saturated:
        exponent = cfg.exp_cap
    return cfg.a * math.exp(exponent) + cfg.d, saturated


def compute_reward(c_p: float, q_w: float, q_jsf: float, q_pax: float,
                   cfg: RewardConfig) -> CostBreakdown:
    """Score one dosing step from scalar plant quantities."""
    c_jsf = chemical_cost(q_jsf, cfg.pr_jsf, cfg.t_dose)
    c_pax = chemical_cost(q_pax, cfg.pr_pax, cfg.t_dose)
    m_p = phosphorus_mass(c_p, q_w, cfg.t_dose)
    t = tax(m_p, cfg.t_rate)
    total = c_jsf + c_pax + t
    saturated = False
    if cfg.penalty_mode == "linear":
        p_coef = penalty_linear(c_p, cfg.x_ideal, t)
    else:
        p_coef, saturated = penalty_nonlinear(c_p, cfg)
    return CostBreakdown(
        c_jsf=c_jsf, c_pax=c_pax, tax=t, total=total, m_p=m_p, p_coef=p_coef,
        reward=-total * (1.0 + p_coef), penalty_saturated=saturated,
    )


def reward(state, action, cfg: RewardConfig) -> CostBreakdown:
    """Score one dosing step from a plant state and the applied dose flows."""
    q_jsf, q_pax = float(action[0]), float(action[1])
    return compute_reward(state.c_p, state.q_w, q_jsf, q_pax, cfg)
