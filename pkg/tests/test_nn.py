"""Networks, gradients, policy head, optimizer and checkpoints."""

import numpy as np
import pytest
from scipy import integrate, stats

from oracles import check_grads_against_fd, nudge_off_kink
from phosrl.nn import (
    CHECKPOINT_VERSION,
    LOG_STD_MAX,
    LOG_STD_MIN,
    Gradients,
    NetworkParams,
    OptimizerState,
    backward,
    forward,
    load_checkpoint,
    optimizer_step,
    sample_policy,
    save_checkpoint,
    scale_to_box,
    squashed_log_prob,
    unscale_from_box,
)

# every (input, hidden..., output) shape the agent trains, plus small nets:
# actor and critic for the plain 10-dim observation and for the 32-dim
# delay-augmented one (two extra indicator slots and a ten-slot buffer)
TRAINING_SHAPES = [
    (10, 256, 256, 4),
    (32, 256, 256, 4),
    (12, 256, 256, 1),
    (34, 256, 256, 1),
    (3, 8, 1),
    (5, 16, 16, 2),
]


class TestForward:
    def test_zero_parameters_give_zero_output(self):
        params = NetworkParams(weights=[np.zeros((4, 3)), np.zeros((3, 2))],
                               biases=[np.zeros(3), np.zeros(2)])
        out = forward(params, np.array([1.0, -2.0, 3.0, 4.0]))
        assert np.array_equal(out, np.zeros(2))

    def test_identity_linear_layer(self):
        params = NetworkParams(weights=[np.eye(3)], biases=[np.zeros(3)])
        x = np.array([0.5, -1.0, 2.0])
        assert np.array_equal(forward(params, x), x)

    def test_two_layer_matches_straight_line_oracle(self):
        rng = np.random.default_rng(0)
        params = NetworkParams.init([4, 6, 2], rng)
        x = rng.standard_normal(4)
        expected = np.maximum(x @ params.weights[0] + params.biases[0], 0.0)
        expected = expected @ params.weights[1] + params.biases[1]
        assert forward(params, x) == pytest.approx(expected, rel=1e-9)

    def test_batch_rows_match_single_calls(self):
        rng = np.random.default_rng(1)
        params = NetworkParams.init([5, 8, 3], rng)
        batch = rng.standard_normal((7, 5))
        out = forward(params, batch)
        for i in range(7):
            assert np.allclose(out[i], forward(params, batch[i]), atol=1e-12)

    def test_shape_mismatch_rejected(self):
        params = NetworkParams.init([4, 2], np.random.default_rng(0))
        with pytest.raises(ValueError):
            forward(params, np.zeros(3))

    def test_validate_catches_incompatible_layers(self):
        bad = NetworkParams(weights=[np.zeros((3, 4)), np.zeros((5, 2))],
                            biases=[np.zeros(4), np.zeros(2)])
        with pytest.raises(ValueError):
            bad.validate()
        nonfinite = NetworkParams(weights=[np.full((2, 2), np.nan)],
                                  biases=[np.zeros(2)])
        with pytest.raises(ValueError):
            nonfinite.validate()


class TestBackward:
    def test_requires_tape(self):
        with pytest.raises(ValueError):
            backward(None, np.zeros(2))

    def test_linear_squared_error_closed_form(self):
        rng = np.random.default_rng(2)
        w = rng.standard_normal((3, 2))
        b = rng.standard_normal(2)
        params = NetworkParams(weights=[w.copy()], biases=[b.copy()])
        x = rng.standard_normal(3)
        y = rng.standard_normal(2)
        out, tape = forward(params, x, with_tape=True)
        resid = out - y
        grads, _ = backward(tape, 2.0 * resid)
        assert grads.weights[0] == pytest.approx(np.outer(x, 2.0 * resid), rel=1e-9)
        assert grads.biases[0] == pytest.approx(2.0 * resid, rel=1e-9)

    def test_zero_upstream_gradient_gives_zero_grads(self):
        params = NetworkParams.init([4, 8, 2], np.random.default_rng(3))
        _, tape = forward(params, np.ones(4), with_tape=True)
        grads, grad_in = backward(tape, np.zeros(2))
        assert all(np.all(t == 0.0) for t in grads.tensors())
        assert np.all(grad_in == 0.0)

    @pytest.mark.parametrize("sizes", TRAINING_SHAPES)
    def test_param_gradients_match_finite_differences(self, sizes):
        rng = np.random.default_rng(hash(sizes) % (2 ** 32))
        params = NetworkParams.init(list(sizes), rng)
        x = rng.standard_normal(sizes[0])
        probe = rng.standard_normal(sizes[-1])
        # central stencils are invalid on the rectifier kink itself
        nudge_off_kink(params, x, forward)

        def loss():
            return float(forward(params, x) @ probe)

        _, tape = forward(params, x, with_tape=True)
        grads, _ = backward(tape, probe)
        check_grads_against_fd(loss, params.tensors(), grads.tensors(), rng)

    def test_input_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        params = NetworkParams.init([6, 16, 1], rng)
        x = rng.standard_normal(6)

        def loss():
            return float(forward(params, x)[0])

        _, tape = forward(params, x, with_tape=True)
        grads, grad_in = backward(tape, np.ones(1))
        check_grads_against_fd(loss, [x], [grad_in], rng)

    def test_batch_param_grads_sum_over_rows(self):
        rng = np.random.default_rng(6)
        params = NetworkParams.init([3, 5, 2], rng)
        batch = rng.standard_normal((4, 3))
        probe = rng.standard_normal((4, 2))
        _, tape = forward(params, batch, with_tape=True)
        grads, _ = backward(tape, probe)
        acc = [np.zeros_like(t) for t in params.tensors()]
        for i in range(4):
            _, tape_i = forward(params, batch[i], with_tape=True)
            g_i, _ = backward(tape_i, probe[i])
            for a, g in zip(acc, g_i.tensors()):
                a += g
        for got, want in zip(grads.tensors(), acc):
            assert got == pytest.approx(want, rel=1e-9)


def make_actor_1d(mean, log_std):
    """Single-layer 1-D actor with constant (mean, log-std) output."""
    return NetworkParams(weights=[np.zeros((1, 2))],
                         biases=[np.array([mean, log_std])])


class TestPolicyHead:
    def test_actions_within_unit_box_10k_draws(self):
        rng = np.random.default_rng(7)
        params = NetworkParams.init([4, 16, 4], rng)
        low = np.zeros(2)
        high = np.array([300.0, 400.0])
        for _ in range(100):
            obs = rng.standard_normal((100, 4))
            out = sample_policy(params, obs, rng)
            assert np.all(np.abs(out.action) <= 1.0)
            dose = scale_to_box(out.action, low, high)
            assert np.all(dose >= low) and np.all(dose <= high)

    def test_log_std_clamped(self):
        params = make_actor_1d(0.0, 99.0)
        out = sample_policy(params, np.zeros(1), np.random.default_rng(0))
        assert out.log_std[0] == LOG_STD_MAX
        params = make_actor_1d(0.0, -99.0)
        out = sample_policy(params, np.zeros(1), np.random.default_rng(0))
        assert out.log_std[0] == LOG_STD_MIN

    def test_vanishing_std_matches_deterministic(self):
        params = make_actor_1d(0.7, -99.0)
        rng = np.random.default_rng(8)
        stoch = sample_policy(params, np.zeros(1), rng)
        det = sample_policy(params, np.zeros(1), deterministic=True)
        assert stoch.action[0] == pytest.approx(det.action[0], abs=1e-7)

    def test_deterministic_needs_no_rng(self):
        params = make_actor_1d(0.3, 0.0)
        out = sample_policy(params, np.zeros(1), deterministic=True)
        assert out.action[0] == pytest.approx(np.tanh(0.3))
        with pytest.raises(ValueError):
            sample_policy(params, np.zeros(1))

    def test_density_integrates_to_one_1d(self):
        mean, log_std = 0.4, np.log(0.7)

        def density(a):
            u = np.arctanh(a)
            return float(np.exp(squashed_log_prob(
                np.array([u]), np.array([mean]), np.array([log_std]))))

        total, err = integrate.quad(density, -1 + 1e-12, 1 - 1e-12)
        assert total == pytest.approx(1.0, abs=1e-3)
        assert err < 1e-6

    def test_density_matches_change_of_variables_pointwise(self):
        mean, std = -0.2, 0.5
        for a in np.linspace(-0.95, 0.95, 21):
            u = np.arctanh(a)
            ours = np.exp(squashed_log_prob(
                np.array([u]), np.array([mean]), np.array([np.log(std)])))
            expected = stats.norm.pdf(u, mean, std) / (1.0 - a * a)
            assert ours == pytest.approx(expected, rel=1e-9)

    def test_log_prob_stable_at_saturated_actions(self):
        lp = squashed_log_prob(np.array([30.0]), np.array([0.0]),
                               np.array([0.0]))
        assert np.isfinite(lp)

    @staticmethod
    def bin_masses_from_density(mean, std, edges, n_sub=2048):
        """Per-bin action mass implied by the density, midpoint rule in u."""
        u_edges = np.arctanh(np.clip(edges, -1 + 1e-15, 1 - 1e-15))
        u_edges[0] = mean - 12 * std
        u_edges[-1] = mean + 12 * std
        masses = []
        for lo, hi in zip(u_edges[:-1], u_edges[1:]):
            du = (hi - lo) / n_sub
            u = lo + (np.arange(n_sub) + 0.5) * du
            dens = np.exp(squashed_log_prob(
                u[:, None], np.array([mean]), np.array([np.log(std)])))
            masses.append(float((dens * (1.0 - np.tanh(u) ** 2)).sum() * du))
        return np.array(masses)

    def test_density_matches_monte_carlo_2d(self):
        rng = np.random.default_rng(9)
        mean = np.array([0.2, -0.3])
        std = np.array([0.6, 0.8])
        u = mean + std * rng.standard_normal((1000000, 2))
        a = np.tanh(u)
        edges = np.linspace(-1.0, 1.0, 21)
        hist, _, _ = np.histogram2d(a[:, 0], a[:, 1], bins=(edges, edges))
        empirical = hist / len(a)

        per_dim = [self.bin_masses_from_density(mean[d], std[d], edges)
                   for d in range(2)]
        # the integrated density must reproduce the exact normal bin masses
        for d in range(2):
            u_edges = np.arctanh(np.clip(edges, -1 + 1e-15, 1 - 1e-15))
            exact = np.diff(stats.norm.cdf(u_edges, mean[d], std[d]))
            big = exact > 1e-6
            assert per_dim[d][big] == pytest.approx(exact[big], rel=1e-3)
        # and the samples must land in bins with those probabilities
        model = np.outer(per_dim[0], per_dim[1])
        heavy = model > 2e-3
        assert empirical[heavy] == pytest.approx(model[heavy], rel=0.1)

    def test_box_scaling_roundtrip(self):
        low = np.zeros(2)
        high = np.array([300.0, 400.0])
        rng = np.random.default_rng(10)
        a = rng.uniform(-1, 1, size=(50, 2))
        back = unscale_from_box(scale_to_box(a, low, high), low, high)
        assert back == pytest.approx(a, abs=1e-12)


class TestOptimizer:
    def quad_setup(self, x0=0.0):
        params = NetworkParams(weights=[np.array([[x0]])], biases=[np.zeros(1)])
        return params, OptimizerState.for_params(params)

    def test_zero_gradients_leave_fresh_params_unchanged(self):
        params, state = self.quad_setup(0.5)
        before = [t.copy() for t in params.tensors()]
        zero = Gradients(weights=[np.zeros((1, 1))], biases=[np.zeros(1)])
        optimizer_step(state, params, zero)
        for t, b in zip(params.tensors(), before):
            assert np.array_equal(t, b)
        assert all(np.all(m == 0.0) for m in state.m)

    def test_moments_decay_after_activity(self):
        params, state = self.quad_setup()
        g = Gradients(weights=[np.ones((1, 1))], biases=[np.ones(1)])
        optimizer_step(state, params, g)
        m_after = state.m[0].copy()
        zero = Gradients(weights=[np.zeros((1, 1))], biases=[np.zeros(1)])
        optimizer_step(state, params, zero)
        assert abs(state.m[0][0, 0]) < abs(m_after[0, 0])

    def test_quadratic_converges_within_5000_steps(self):
        params, state = self.quad_setup(0.0)
        target = 1.0
        for _ in range(5000):
            x = params.weights[0][0, 0] + params.biases[0][0]
            g = 2.0 * (x - target)
            optimizer_step(state, params, Gradients(
                weights=[np.array([[g]])], biases=[np.array([g])]))
        x = params.weights[0][0, 0] + params.biases[0][0]
        assert abs(x - target) < 1e-6

    def test_nonfinite_gradient_skipped_and_counted(self):
        params, state = self.quad_setup(0.5)
        before = [t.copy() for t in params.tensors()]
        bad = Gradients(weights=[np.array([[np.inf]])], biases=[np.zeros(1)])
        optimizer_step(state, params, bad)
        for t, b in zip(params.tensors(), before):
            assert np.array_equal(t, b)
        assert state.skipped == 1
        assert state.step_count == 0

    def test_identical_state_identical_updates(self):
        results = []
        for _ in range(2):
            rng = np.random.default_rng(11)
            params = NetworkParams.init([3, 8, 1], rng)
            state = OptimizerState.for_params(params, lr=3e-4)
            for _ in range(50):
                x = rng.standard_normal(3)
                out, tape = forward(params, x, with_tape=True)
                grads, _ = backward(tape, 2.0 * out)
                optimizer_step(state, params, grads)
            results.append(params)
        for a, b in zip(results[0].tensors(), results[1].tensors()):
            assert np.array_equal(a, b)

    def test_moment_shapes_match_params(self):
        params = NetworkParams.init([4, 7, 2], np.random.default_rng(12))
        state = OptimizerState.for_params(params)
        for t, m, v in zip(params.tensors(), state.m, state.v):
            assert m.shape == t.shape
            assert v.shape == t.shape

    def test_shape_mismatch_rejected(self):
        params, state = self.quad_setup()
        with pytest.raises(ValueError):
            optimizer_step(state, params, Gradients(
                weights=[np.zeros((2, 2))], biases=[np.zeros(1)]))


class TestCheckpoints:
    def make_nets(self):
        rng = np.random.default_rng(13)
        return {
            "actor": NetworkParams.init([10, 32, 4], rng),
            "critic_1": NetworkParams.init([12, 32, 1], rng),
        }

    def test_roundtrip_preserves_everything(self, tmp_path):
        path = tmp_path / "ckpt.npz"
        nets = self.make_nets()
        meta = {"delay_mode": "none", "step": 1234}
        save_checkpoint(path, nets, meta)
        loaded, got_meta = load_checkpoint(path)
        assert got_meta == meta
        assert set(loaded) == set(nets)
        for name in nets:
            for a, b in zip(nets[name].tensors(), loaded[name].tensors()):
                assert np.array_equal(a, b)

    def test_shape_tamper_rejected(self, tmp_path):
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, self.make_nets())
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files}
        arrays["actor.w0"] = np.zeros((3, 3))
        np.savez(path, **arrays)
        with pytest.raises(ValueError, match="shape mismatch"):
            load_checkpoint(path)

    def test_version_tamper_rejected(self, tmp_path):
        import json
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, self.make_nets())
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files}
        header = json.loads(bytes(arrays["__header__"]).decode())
        header["version"] = CHECKPOINT_VERSION + 1
        arrays["__header__"] = np.frombuffer(
            json.dumps(header).encode(), dtype=np.uint8)
        np.savez(path, **arrays)
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(path)

    def test_non_checkpoint_rejected(self, tmp_path):
        path = tmp_path / "junk.npz"
        np.savez(path, a=np.zeros(3))
        with pytest.raises(ValueError, match="header"):
            load_checkpoint(path)
