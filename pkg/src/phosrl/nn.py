"""Small differentiable building blocks used by the agent.

Fully connected networks with rectifier hidden layers, a recorded tape for
exact reverse-mode gradients (with respect to parameters and inputs), a
squashed-Gaussian policy head, an adaptive-moment optimizer and a versioned
checkpoint format. Everything is plain numpy and deterministic for fixed
inputs; batches go in as (batch, dim) arrays, single vectors as (dim,).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
CHECKPOINT_VERSION = 1
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass
class NetworkParams:
    """Per-layer weights (fan_in, fan_out) and biases; hidden layers rectify."""

    weights: list
    biases: list
    hidden_act: str = "relu"

    @classmethod
    def init(cls, sizes, rng: np.random.Generator) -> "NetworkParams":
        """He-scaled normal weights, zero biases, for layer sizes chain."""
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            weights.append(rng.standard_normal((fan_in, fan_out))
                           * np.sqrt(2.0 / fan_in))
            biases.append(np.zeros(fan_out))
        return cls(weights=weights, biases=biases)

    @property
    def sizes(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def validate(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must pair up")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i} weight/bias shapes incompatible")
            if i > 0 and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i} input dim mismatch")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")

    def copy(self) -> "NetworkParams":
        return NetworkParams(weights=[w.copy() for w in self.weights],
                             biases=[b.copy() for b in self.biases],
                             hidden_act=self.hidden_act)

    def tensors(self) -> list:
        """Flat parameter list, weights then biases, layer order."""
        return list(self.weights) + list(self.biases)


@dataclass
class Gradients:
    """Loss gradients aligned with a NetworkParams instance."""

    weights: list
    biases: list

    def tensors(self) -> list:
        return list(self.weights) + list(self.biases)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors())


@dataclass
class Tape:
    """Forward record: layer inputs and preactivations, batch-shaped."""

    params: NetworkParams
    inputs: list          # h_i fed to layer i, (batch, fan_in)
    preacts: list         # z_i = h_i W_i + b_i
    squeezed: bool        # caller passed a single vector


def forward(params: NetworkParams, x: np.ndarray, with_tape: bool = False):
    """Affine + rectifier composition; output layer stays linear."""
    x = np.asarray(x, dtype=float)
    squeezed = x.ndim == 1
    h = x[None, :] if squeezed else x
    if h.ndim != 2 or h.shape[1] != params.weights[0].shape[0]:
        raise ValueError(
            f"input dim {x.shape[-1]} does not match network input "
            f"{params.weights[0].shape[0]}"
        )
    inputs, preacts = [], []
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        preacts.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    out = h[0] if squeezed else h
    if with_tape:
        return out, Tape(params=params, inputs=inputs, preacts=preacts,
                         squeezed=squeezed)
    return out


def backward(tape: Tape, grad_out: np.ndarray):
    """Exact reverse sweep.

    grad_out is dLoss/dOutput in the output's shape. Returns (Gradients,
    grad_input); parameter gradients sum over the batch, the input gradient
    keeps the batch shape.
    """
    if not isinstance(tape, Tape):
        raise ValueError("backward requires the tape recorded by forward")
    params = tape.params
    g = np.asarray(grad_out, dtype=float)
    if tape.squeezed:
        g = g[None, :]
    if g.shape != tape.preacts[-1].shape:
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match output "
            f"{tape.preacts[-1].shape}"
        )
    grad_w = [None] * params.n_layers
    grad_b = [None] * params.n_layers
    dz = g
    for i in range(params.n_layers - 1, -1, -1):
        grad_w[i] = tape.inputs[i].T @ dz
        grad_b[i] = dz.sum(axis=0)
        dh = dz @ params.weights[i].T
        if i > 0:
            dz = dh * (tape.preacts[i - 1] > 0.0)
    grad_in = dh[0] if tape.squeezed else dh
    return Gradients(weights=grad_w, biases=grad_b), grad_in


# -- squashed-Gaussian policy head -------------------------------------------


@dataclass
class PolicyOutput:
    mean: np.ndarray
    log_std: np.ndarray       # already clamped
    pre_squash: np.ndarray    # u = mean + std * eps
    action: np.ndarray        # tanh(u), in [-1, 1] per dimension
    log_prob: np.ndarray      # scalar per batch row


def _log_one_minus_tanh_sq(u: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2) without catastrophic cancellation at large |u|."""
    return 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def gaussian_log_prob(u: np.ndarray, mean: np.ndarray,
                      log_std: np.ndarray) -> np.ndarray:
    z = (u - mean) * np.exp(-log_std)
    return (-0.5 * z * z - log_std - _HALF_LOG_2PI).sum(axis=-1)


def squashed_log_prob(u: np.ndarray, mean: np.ndarray,
                      log_std: np.ndarray) -> np.ndarray:
    """Density of a = tanh(u) under the reparameterized Gaussian."""
    return gaussian_log_prob(u, mean, log_std) - _log_one_minus_tanh_sq(u).sum(axis=-1)


def sample_policy(params: NetworkParams, observation: np.ndarray,
                  rng: np.random.Generator | None = None,
                  deterministic: bool = False) -> PolicyOutput:
    """Draw an action from the squashed-Gaussian head of an actor network.

    The network emits (mean, raw log-std) concatenated; the log-std is
    clamped before use. The stochastic path uses the reparameterized draw
    u = mean + std * eps.
    """
    out = forward(params, observation)
    half = out.shape[-1] // 2
    mean = out[..., :half]
    log_std = np.clip(out[..., half:], LOG_STD_MIN, LOG_STD_MAX)
    if deterministic:
        u = mean.copy()
    else:
        if rng is None:
            raise ValueError("stochastic sampling requires an rng")
        u = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    action = np.tanh(u)
    return PolicyOutput(mean=mean, log_std=log_std, pre_squash=u,
                        action=action,
                        log_prob=squashed_log_prob(u, mean, log_std))


def scale_to_box(action: np.ndarray, low: np.ndarray,
                 high: np.ndarray) -> np.ndarray:
    """Map [-1, 1] actions onto the env's dose box."""
    return low + (np.asarray(action) + 1.0) * 0.5 * (high - low)


def unscale_from_box(dose: np.ndarray, low: np.ndarray,
                     high: np.ndarray) -> np.ndarray:
    return np.clip((np.asarray(dose) - low) / (high - low) * 2.0 - 1.0,
                   -1.0, 1.0)


# -- optimizer ----------------------------------------------------------------


@dataclass
class OptimizerState:
    """Adaptive-moment accumulators aligned with a parameter list."""

    m: list
    v: list
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    skipped: int = 0          # updates dropped due to non-finite gradients

    @classmethod
    def for_params(cls, params: NetworkParams, lr: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> "OptimizerState":
        tensors = params.tensors()
        return cls(m=[np.zeros_like(t) for t in tensors],
                   v=[np.zeros_like(t) for t in tensors],
                   lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def optimizer_step(state: OptimizerState, params: NetworkParams,
                   grads: Gradients) -> NetworkParams:
    """One adaptive-moment update with bias correction; mutates params.

    Non-finite gradients skip the whole update and are counted so training
    can report them instead of silently corrupting the parameters.
    """
    tensors = params.tensors()
    gtensors = grads.tensors()
    if len(tensors) != len(gtensors):
        raise ValueError("gradient structure does not match parameters")
    for t, g in zip(tensors, gtensors):
        if t.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter {t.shape}")
    if not grads.all_finite():
        state.skipped += 1
        return params
    state.step_count += 1
    b1c = 1.0 - state.beta1 ** state.step_count
    b2c = 1.0 - state.beta2 ** state.step_count
    for t, g, m, v in zip(tensors, gtensors, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        t -= state.lr * (m / b1c) / (np.sqrt(v / b2c) + state.eps)
    return params


# -- checkpoints ---------------------------------------------------------------


def save_checkpoint(path, nets: dict, meta: dict | None = None) -> None:
    """Write named parameter sets plus a JSON meta block to an npz file."""
    arrays = {}
    shapes = {}
    for name, params in nets.items():
        params.validate()
        for i, w in enumerate(params.weights):
            arrays[f"{name}.w{i}"] = w
        for i, b in enumerate(params.biases):
            arrays[f"{name}.b{i}"] = b
        shapes[name] = {"sizes": params.sizes, "hidden_act": params.hidden_act}
    header = {"version": CHECKPOINT_VERSION, "nets": shapes,
              "meta": meta or {}}
    arrays["__header__"] = np.frombuffer(
        json.dumps(header).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Read a checkpoint; returns ({name: NetworkParams}, meta dict).

    Rejects unknown versions and any array whose shape disagrees with the
    recorded layer sizes.
    """
    with np.load(path) as data:
        if "__header__" not in data:
            raise ValueError("not a checkpoint: missing header")
        header = json.loads(bytes(data["__header__"]).decode("utf-8"))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {header.get('version')}")
        nets = {}
        for name, entry in header["nets"].items():
            sizes = entry["sizes"]
            weights, biases = [], []
            for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
                w = data[f"{name}.w{i}"]
                b = data[f"{name}.b{i}"]
                if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                    raise ValueError(
                        f"checkpoint shape mismatch in {name} layer {i}: "
                        f"{w.shape} vs {(fan_in, fan_out)}"
                    )
                weights.append(w)
                biases.append(b)
            nets[name] = NetworkParams(weights=weights, biases=biases,
                                       hidden_act=entry["hidden_act"])
            nets[name].validate()
    return nets, header["meta"]
