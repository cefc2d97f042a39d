import math

import numpy as np
import pytest

from phosrl.reward import (
    CostBreakdown,
    RewardConfig,
    chemical_cost,
    compute_reward,
    penalty_linear,
    penalty_nonlinear,
    phosphorus_mass,
    reward,
    tax,
)


def straight_line_reward(c_p, q_w, q_jsf, q_pax, cfg):
    """Independent re-derivation of the step reward, no shared code."""
    cost_jsf = cfg.pr_jsf * q_jsf * cfg.t_dose / 60.0
    cost_pax = cfg.pr_pax * q_pax * cfg.t_dose / 60.0
    mass = c_p * q_w * cfg.t_dose / 60000.0
    tax_cost = cfg.t_rate * mass
    total = cost_jsf + cost_pax + tax_cost
    if cfg.penalty_mode == "linear":
        coef = 0.0 if 0.0 < c_p <= cfg.x_ideal else -100.0 * tax_cost
    else:
        coef = cfg.a * math.exp(cfg.z * c_p + cfg.c) + cfg.d
    return -total * (1.0 + coef)


class TestChemicalCost:
    def test_zero_dose(self):
        assert chemical_cost(0.0, 0.20, 2.0) == 0.0

    def test_hand_arithmetic(self):
        # 0.20 * 100 * 2 / 60 = 2/3
        assert chemical_cost(100.0, 0.20, 2.0) == pytest.approx(0.6666666666666666, rel=1e-12)

    def test_unit_cancelling(self):
        assert chemical_cost(60.0, 1.0, 60.0) == 60.0

    def test_negative_flow_rejected(self):
        with pytest.raises(ValueError):
            chemical_cost(-1.0, 0.20, 2.0)


class TestPhosphorusMass:
    def test_zero_concentration(self):
        assert phosphorus_mass(0.0, 600.0, 2.0) == 0.0

    def test_hand_arithmetic(self):
        # 1 * 600 * 2 / 60000 = 0.02 kg
        assert phosphorus_mass(1.0, 600.0, 2.0) == pytest.approx(0.02, rel=1e-12)

    def test_round_numbers(self):
        # 1000 * 60 * 60 / 60000 = 60 kg
        assert phosphorus_mass(1000.0, 60.0, 60.0) == pytest.approx(60.0, rel=1e-12)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            phosphorus_mass(-0.1, 600.0, 2.0)


class TestTax:
    def test_zero_mass(self):
        assert tax(0.0, 183.64) == 0.0

    def test_hand_arithmetic(self):
        assert tax(0.02, 183.64) == pytest.approx(3.6728, rel=1e-12)

    def test_unit_mass(self):
        assert tax(1.0, 183.64) == 183.64


class TestPenaltyLinear:
    def test_inside_band(self):
        assert penalty_linear(0.75, 1.5, 5.0) == 0.0

    def test_violation(self):
        assert penalty_linear(3.0, 1.5, 1.0) == -100.0

    def test_boundary_included(self):
        assert penalty_linear(1.5, 1.5, 5.0) == 0.0

    def test_zero_is_outside_band(self):
        # the printed band is 0 < x <= x_ideal, so x = 0 takes the other branch
        assert penalty_linear(0.0, 1.5, 2.0) == -200.0


class TestPenaltyNonlinear:
    def test_zero_at_origin(self):
        coef, saturated = penalty_nonlinear(0.0, RewardConfig())
        assert coef == 0.0 and not saturated

    def test_hand_arithmetic(self):
        # 0.01 * e^6 - 0.01
        coef, _ = penalty_nonlinear(1.5, RewardConfig())
        assert coef == pytest.approx(0.01 * math.exp(6.0) - 0.01, rel=1e-12)
        assert coef == pytest.approx(4.0243, abs=1e-4)

    def test_monotone(self):
        cfg = RewardConfig()
        xs = np.linspace(0.0, 5.0, 100)
        coefs = [penalty_nonlinear(x, cfg)[0] for x in xs]
        assert all(b > a for a, b in zip(coefs, coefs[1:]))

    def test_saturation_flagged(self):
        cfg = RewardConfig()
        coef, saturated = penalty_nonlinear(1e6, cfg)
        assert saturated
        assert coef == pytest.approx(cfg.a * math.exp(cfg.exp_cap) + cfg.d)
        assert math.isfinite(coef)

    def test_config_invariant_enforced(self):
        with pytest.raises(ValueError):
            RewardConfig(a=0.01, c=0.0, d=-0.02).validate()
        RewardConfig(a=0.02, c=1.0, d=-0.02 * math.exp(1.0)).validate()


class TestReward:
    def test_all_terms_vanish(self):
        b = compute_reward(0.0, 600.0, 0.0, 0.0, RewardConfig())
        assert b.total == 0.0 and b.reward == 0.0 and b.p_coef == 0.0

    def test_worked_composite_example(self):
        # hand arithmetic: costs 0.2*100*2/60 + 183.64*0.02 = 4.339466...,
        # coefficient 0.01*e^4 - 0.01 = 0.535981..., product negated
        expected = -(0.2 * 100 * 2 / 60 + 183.64 * (1.0 * 600 * 2 / 60000)) \
            * (1.0 + 0.01 * math.exp(4.0) - 0.01)
        assert expected == pytest.approx(-6.6653405, abs=1e-6)
        b = compute_reward(1.0, 600.0, 100.0, 0.0, RewardConfig())
        assert b.total == pytest.approx(4.339467, abs=1e-6)
        assert b.p_coef == pytest.approx(0.535982, abs=1e-6)
        assert b.reward == pytest.approx(expected, abs=1e-9)

    def test_reward_nonincreasing_in_dose(self):
        cfg = RewardConfig()
        base = compute_reward(1.0, 600.0, 50.0, 50.0, cfg).reward
        assert compute_reward(1.0, 600.0, 80.0, 50.0, cfg).reward < base
        assert compute_reward(1.0, 600.0, 50.0, 80.0, cfg).reward < base

    def test_state_wrapper(self):
        class S:
            c_p = 1.0
            q_w = 600.0

        b = reward(S(), np.array([100.0, 0.0]), RewardConfig())
        assert b.reward == compute_reward(1.0, 600.0, 100.0, 0.0, RewardConfig()).reward

    def test_additivity_exact(self):
        rng = np.random.default_rng(0)
        cfg = RewardConfig()
        for _ in range(200):
            b = compute_reward(rng.uniform(0, 8), rng.uniform(100, 1200),
                               rng.uniform(0, 300), rng.uniform(0, 400), cfg)
            assert b.total == b.c_jsf + b.c_pax + b.tax

    def test_nonpositive_when_coefficient_above_minus_one(self):
        rng = np.random.default_rng(1)
        cfg = RewardConfig()
        for _ in range(500):
            b = compute_reward(rng.uniform(0, 6), rng.uniform(100, 1200),
                               rng.uniform(0, 300), rng.uniform(0, 400), cfg)
            assert b.p_coef >= 0.0
            assert b.reward <= 0.0

    def test_strictly_decreasing_in_concentration(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            a = rng.uniform(0.001, 0.1)
            c = rng.uniform(-2.0, 2.0)
            cfg = RewardConfig(a=a, z=rng.uniform(0.5, 6.0), c=c, d=-a * math.exp(c))
            cfg.validate()
            q_jsf, q_pax = rng.uniform(0, 300), rng.uniform(0, 400)
            q_w = rng.uniform(100, 1200)
            c1 = rng.uniform(0.0, 4.0)
            c2 = c1 + rng.uniform(0.01, 2.0)
            assert compute_reward(c2, q_w, q_jsf, q_pax, cfg).reward \
                < compute_reward(c1, q_w, q_jsf, q_pax, cfg).reward

    @pytest.mark.parametrize("mode", ["nonlinear", "linear"])
    def test_matches_straight_line_oracle(self, mode):
        rng = np.random.default_rng(3)
        for _ in range(10_000):
            cfg = RewardConfig(penalty_mode=mode)
            c_p = rng.uniform(0.0, 10.0)
            q_w = rng.uniform(50.0, 2000.0)
            q_jsf = rng.uniform(0.0, 300.0)
            q_pax = rng.uniform(0.0, 400.0)
            got = compute_reward(c_p, q_w, q_jsf, q_pax, cfg).reward
            want = straight_line_reward(c_p, q_w, q_jsf, q_pax, cfg)
            assert got == pytest.approx(want, rel=1e-9, abs=1e-12)

    def test_csv_row_shape(self):
        b = compute_reward(1.0, 600.0, 10.0, 10.0, RewardConfig())
        assert len(b.as_row()) == len(CostBreakdown.CSV_FIELDS)
