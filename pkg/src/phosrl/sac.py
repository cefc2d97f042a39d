"""Soft Actor-Critic over the env pool.

One squashed-Gaussian actor, two critics with polyak-averaged targets, a
uniform replay ring and the interact/store/update loop. Observations and
actions live normalized inside the agent; dose units appear only at the
env boundary. The actor step uses reparameterized pathwise gradients with
the twin-critic minimum in both the bootstrap target and the actor
objective.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .delay import DELAY_MODES
from .nn import (
    LOG_STD_MAX,
    LOG_STD_MIN,
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
)

MODE_ALIASES = {"nd": "none", "cd": "constant", "rd": "random"}


def canonical_mode(name: str) -> str:
    mode = MODE_ALIASES.get(name, name)
    if mode not in DELAY_MODES:
        raise ValueError(f"unknown delay mode {name!r}")
    return mode


@dataclass
class SACConfig:
    gamma: float = 0.99
    alpha: float = 0.2
    auto_alpha: bool = False
    target_entropy: float | None = None   # defaults to -action_dim
    alpha_lr: float = 3e-4
    tau_polyak: float = 0.005
    batch_n: int = 256
    buffer_capacity: int = 1_000_000
    warmup_steps: int = 10_000
    updates_per_step: int = 1             # gradient steps per pool step
    lr: float = 3e-4
    hidden: tuple = (256, 256)
    reward_scale: float = 1.0
    bootstrap_on_timeout: bool = False
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if self.alpha < 0.0:
            raise ValueError("alpha must be >= 0")
        if not 0.0 < self.tau_polyak <= 1.0:
            raise ValueError("tau_polyak must be in (0, 1]")
        if self.batch_n <= 0 or self.batch_n > self.buffer_capacity:
            raise ValueError("need 0 < batch_n <= buffer_capacity")
        if self.warmup_steps < 0 or self.updates_per_step < 1:
            raise ValueError("warmup_steps >= 0 and updates_per_step >= 1")
        if self.lr <= 0 or self.reward_scale <= 0:
            raise ValueError("lr and reward_scale must be > 0")


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray          # normalized to [-1, 1]
    r: float
    s_next: np.ndarray
    done: bool


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray       # float 0/1


class ReplayBuffer:
    """Fixed-capacity ring with uniform sampling over stored entries."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int, seed: int = 0):
        if capacity <= 0:
            raise ValueError("capacity must be > 0")
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self.s = np.zeros((capacity, obs_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self.cursor = 0
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB0]))

    def push(self, tr: Transition) -> None:
        if len(tr.s) != self.obs_dim or len(tr.s_next) != self.obs_dim:
            raise ValueError(
                f"transition obs dim {len(tr.s)}/{len(tr.s_next)} "
                f"!= buffer dim {self.obs_dim}"
            )
        i = self.cursor
        self.s[i] = tr.s
        self.a[i] = tr.a
        self.r[i] = tr.r
        self.s_next[i] = tr.s_next
        self.done[i] = float(tr.done)
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int) -> Batch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = self.rng.integers(0, self.size, size=n)
        return Batch(s=self.s[idx], a=self.a[idx], r=self.r[idx],
                     s_next=self.s_next[idx], done=self.done[idx])


# -- operations ---------------------------------------------------------------


def select_action(actor: NetworkParams, observation: np.ndarray,
                  rng: np.random.Generator | None,
                  action_low: np.ndarray, action_high: np.ndarray,
                  deterministic: bool = False,
                  delay_mode: str = "none") -> np.ndarray:
    """Policy action in dose units; validates the observation dimension."""
    observation = np.asarray(observation, dtype=float)
    expected = actor.weights[0].shape[0]
    if observation.shape[-1] != expected:
        raise ValueError(
            f"observation dim {observation.shape[-1]} does not match the "
            f"actor input {expected} for delay mode {delay_mode!r}"
        )
    out = sample_policy(actor, observation, rng, deterministic=deterministic)
    return scale_to_box(out.action, action_low, action_high)


def compute_target(batch: Batch, critic_targets: list, actor: NetworkParams,
                   cfg: SACConfig, rng: np.random.Generator,
                   alpha: float | None = None) -> np.ndarray:
    """Soft bootstrap values y = r + gamma (1-done) (min_j Q_j - alpha logpi)."""
    alpha = cfg.alpha if alpha is None else alpha
    pol = sample_policy(actor, batch.s_next, rng)
    x = np.concatenate([batch.s_next, pol.action], axis=1)
    qs = np.stack([forward(c, x)[:, 0] for c in critic_targets])
    soft = qs.min(axis=0) - alpha * pol.log_prob
    return batch.r + cfg.gamma * (1.0 - batch.done) * soft


def _batch_diagnostics(batch: Batch) -> str:
    return (f"r in [{batch.r.min():.3g}, {batch.r.max():.3g}], "
            f"|s| max {np.abs(batch.s).max():.3g}, "
            f"|a| max {np.abs(batch.a).max():.3g}")


def critic_update(batch: Batch, critic: NetworkParams, y: np.ndarray,
                  opt: OptimizerState) -> float:
    """One mean-squared Bellman error step; returns the pre-step loss."""
    x = np.concatenate([batch.s, batch.a], axis=1)
    q, tape = forward(critic, x, with_tape=True)
    resid = q[:, 0] - y
    loss = float(np.mean(resid ** 2))
    if not np.isfinite(loss):
        raise RuntimeError(
            f"non-finite critic loss {loss}; {_batch_diagnostics(batch)}")
    grad_out = (2.0 / len(y)) * resid[:, None]
    grads, _ = backward(tape, grad_out)
    optimizer_step(opt, critic, grads)
    return loss


def actor_loss_and_grads(s: np.ndarray, actor: NetworkParams, critics: list,
                         alpha: float, eps: np.ndarray):
    """Loss E[alpha logpi - min Q] and its exact pathwise actor gradients.

    eps is the frozen reparameterization noise, shape (batch, action_dim).
    The gradient flows through u = mean + std*eps into both the squashing
    correction and the critic input; coordinates with a clamped log-std
    get zero gradient there.
    """
    n, a_dim = eps.shape
    out, tape = forward(actor, s, with_tape=True)
    mean = out[:, :a_dim]
    raw_log_std = out[:, a_dim:]
    log_std = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
    std = np.exp(log_std)
    u = mean + std * eps
    t = np.tanh(u)
    sech_sq = 1.0 - t * t

    x = np.concatenate([s, t], axis=1)
    q_tapes = []
    qs = []
    for c in critics:
        q, q_tape = forward(c, x, with_tape=True)
        qs.append(q[:, 0])
        q_tapes.append(q_tape)
    qs = np.stack(qs)
    q_min = qs.min(axis=0)
    which = qs.argmin(axis=0)

    log_prob = squashed_log_prob(u, mean, log_std)
    loss = float(np.mean(alpha * log_prob - q_min))
    if not np.isfinite(loss):
        raise RuntimeError(f"non-finite actor loss on batch of {n}")

    # dQmin/da: route each row through whichever critic attains the min
    dq_da = np.zeros((n, a_dim))
    for j, q_tape in enumerate(q_tapes):
        rows = (which == j).astype(float)[:, None]
        if rows.any():
            _, grad_in = backward(q_tape, rows)
            dq_da += grad_in[:, s.shape[1]:] * rows
    # d/du of [alpha logpi - Qmin]: the Gaussian term is constant in u for
    # frozen eps, leaving the squashing correction 2 tanh(u) per dimension
    du = alpha * 2.0 * t - dq_da * sech_sq
    g_mean = du / n
    # log-std also shifts u by std*eps and carries the -1 entropy term
    clamp_active = (raw_log_std <= LOG_STD_MIN) | (raw_log_std >= LOG_STD_MAX)
    g_log_std = (alpha * (-1.0) + du * std * eps) / n
    g_log_std[clamp_active] = 0.0
    grad_out = np.concatenate([g_mean, g_log_std], axis=1)
    grads, _ = backward(tape, grad_out)
    return loss, grads


def actor_update(batch: Batch, actor: NetworkParams, critics: list,
                 cfg: SACConfig, opt: OptimizerState,
                 rng: np.random.Generator,
                 alpha: float | None = None) -> float:
    """One pathwise policy step against frozen critics; returns the loss."""
    alpha = cfg.alpha if alpha is None else alpha
    a_dim = critics[0].weights[0].shape[0] - batch.s.shape[1]
    eps = rng.standard_normal((len(batch.s), a_dim))
    loss, grads = actor_loss_and_grads(batch.s, actor, critics, alpha, eps)
    optimizer_step(opt, actor, grads)
    return loss


def polyak_update(target: NetworkParams, online: NetworkParams,
                  tau: float) -> NetworkParams:
    """In-place blend: target <- tau * online + (1 - tau) * target."""
    t_tensors = target.tensors()
    o_tensors = online.tensors()
    if len(t_tensors) != len(o_tensors):
        raise ValueError("target and online parameter structures differ")
    for t, o in zip(t_tensors, o_tensors):
        if t.shape != o.shape:
            raise ValueError(f"shape mismatch {t.shape} vs {o.shape}")
        t *= 1.0 - tau
        t += tau * o
    return target


# -- agent bundle -------------------------------------------------------------


class SACAgent:
    """Parameter sets, optimizers and rngs for one training run."""

    def __init__(self, obs_dim: int, action_dim: int, cfg: SACConfig,
                 action_low: np.ndarray, action_high: np.ndarray,
                 delay_mode: str = "none"):
        cfg.validate()
        self.cfg = cfg
        self.obs_dim = int(obs_dim)
        self.action_dim = int(action_dim)
        self.action_low = np.asarray(action_low, dtype=float)
        self.action_high = np.asarray(action_high, dtype=float)
        self.delay_mode = canonical_mode(delay_mode)

        root = np.random.SeedSequence(cfg.seed)
        init_ss, act_ss, upd_ss, warm_ss = root.spawn(4)
        init_rng = np.random.default_rng(init_ss)
        self.rng_action = np.random.default_rng(act_ss)
        self.rng_update = np.random.default_rng(upd_ss)
        self.rng_warmup = np.random.default_rng(warm_ss)

        sizes_a = [obs_dim, *cfg.hidden, 2 * action_dim]
        sizes_c = [obs_dim + action_dim, *cfg.hidden, 1]
        self.actor = NetworkParams.init(sizes_a, init_rng)
        self.critics = [NetworkParams.init(sizes_c, init_rng) for _ in range(2)]
        self.targets = [c.copy() for c in self.critics]
        self.opt_actor = OptimizerState.for_params(self.actor, lr=cfg.lr)
        self.opt_critics = [OptimizerState.for_params(c, lr=cfg.lr)
                            for c in self.critics]
        self.log_alpha = float(np.log(max(cfg.alpha, 1e-8)))
        self.buffer = ReplayBuffer(cfg.buffer_capacity, obs_dim, action_dim,
                                   seed=cfg.seed)

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha)) if self.cfg.auto_alpha else self.cfg.alpha

    def act(self, observation: np.ndarray, deterministic: bool = False) -> np.ndarray:
        return select_action(self.actor, observation, self.rng_action,
                             self.action_low, self.action_high,
                             deterministic=deterministic,
                             delay_mode=self.delay_mode)

    def update_once(self):
        """One gradient step on both critics, the actor, and the targets."""
        cfg = self.cfg
        batch = self.buffer.sample(cfg.batch_n)
        y = compute_target(batch, self.targets, self.actor, cfg,
                           self.rng_update, alpha=self.alpha)
        c_losses = [critic_update(batch, c, y, opt)
                    for c, opt in zip(self.critics, self.opt_critics)]
        a_loss = actor_update(batch, self.actor, self.critics, cfg,
                              self.opt_actor, self.rng_update, alpha=self.alpha)
        if cfg.auto_alpha:
            pol = sample_policy(self.actor, batch.s, self.rng_update)
            target_h = (cfg.target_entropy if cfg.target_entropy is not None
                        else -float(self.action_dim))
            self.log_alpha += cfg.alpha_lr * (float(pol.log_prob.mean()) + target_h)
        for tgt, online in zip(self.targets, self.critics):
            polyak_update(tgt, online, cfg.tau_polyak)
        return c_losses, a_loss

    def nets(self) -> dict:
        return {"actor": self.actor,
                "critic_1": self.critics[0], "critic_2": self.critics[1],
                "target_1": self.targets[0], "target_2": self.targets[1]}

    def save(self, path, step: int) -> None:
        meta = {"delay_mode": self.delay_mode, "step": step,
                "obs_dim": self.obs_dim, "action_dim": self.action_dim,
                "alpha": self.alpha,
                "sac_config": {k: (list(v) if isinstance(v, tuple) else v)
                               for k, v in asdict(self.cfg).items()}}
        save_checkpoint(path, self.nets(), meta)

    def load_params(self, path) -> dict:
        """Restore parameters from a checkpoint; optimizer state starts fresh."""
        nets, meta = load_checkpoint(path)
        if meta["obs_dim"] != self.obs_dim:
            raise ValueError(
                f"checkpoint was trained with delay mode {meta['delay_mode']!r} "
                f"(obs dim {meta['obs_dim']}); this agent expects dim "
                f"{self.obs_dim} for delay mode {self.delay_mode!r}"
            )
        self.actor = nets["actor"]
        self.critics = [nets["critic_1"], nets["critic_2"]]
        self.targets = [nets["target_1"], nets["target_2"]]
        self.opt_actor = OptimizerState.for_params(self.actor, lr=self.cfg.lr)
        self.opt_critics = [OptimizerState.for_params(c, lr=self.cfg.lr)
                            for c in self.critics]
        return meta


# -- training loop ------------------------------------------------------------

LOG_FIELDS_BASE = ["step", "critic_1_loss", "critic_2_loss", "actor_loss",
                   "alpha", "mean_kappa", "mean_omega", "buffer_size"]


@dataclass
class TrainResult:
    agent: SACAgent
    log_rows: list
    csv_path: Path | None
    checkpoint_paths: list = field(default_factory=list)


def train(pool, delay_mode: str, cfg: SACConfig, total_steps: int,
          out_dir=None, log_every: int = 2000, checkpoint_every: int | None = None,
          resume_from=None) -> TrainResult:
    """Run the interact/store/update loop for total_steps env transitions.

    Each pool step stores one transition per env; once warmup_steps
    transitions exist, every pool step performs updates_per_step gradient
    updates. Logging is in env steps; episodic reward per step is averaged
    per scheduler setup over episodes completed since the previous row.
    """
    mode = canonical_mode(delay_mode)
    if pool.delay_cfg.mode != mode:
        raise ValueError(
            f"pool runs delay mode {pool.delay_cfg.mode!r} but training "
            f"was requested for {mode!r}"
        )
    agent = SACAgent(pool.observation_dim, len(pool.action_high), cfg,
                     pool.action_low, pool.action_high, delay_mode=mode)
    start_step = 0
    if resume_from is not None:
        meta = agent.load_params(resume_from)
        start_step = int(meta["step"])

    setups = sorted(set(pool.setups))
    fields = LOG_FIELDS_BASE + [f"ep_rew_{s}" for s in setups]
    csv_path = None
    writer = None
    handle = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"train_{mode}.csv"
        handle = open(csv_path, "w", newline="")
        writer = csv.DictWriter(handle, fieldnames=fields)
        writer.writeheader()

    n = pool.n_envs
    obs = pool.reset_all()
    ep_reward = np.zeros(n)
    ep_len = np.zeros(n, dtype=int)
    recent_ep: dict = {s: [] for s in setups}
    last_losses = {"critic_1_loss": np.nan, "critic_2_loss": np.nan,
                   "actor_loss": np.nan}
    kappa_sum = omega_sum = kappa_n = 0.0
    log_rows = []
    checkpoint_paths = []

    span = agent.action_high - agent.action_low
    step = start_step
    next_log = step + log_every
    try:
        while step < total_steps:
            if agent.buffer.size < cfg.warmup_steps:
                unit_actions = agent.rng_warmup.uniform(
                    -1.0, 1.0, size=(n, agent.action_dim))
            else:
                pol = sample_policy(agent.actor, obs, agent.rng_action)
                unit_actions = pol.action
            doses = agent.action_low + (unit_actions + 1.0) * 0.5 * span
            results = pool.step_all(doses)

            for i, res in enumerate(results):
                s_next = (res.info["terminal_observation"] if res.done
                          else res.observation)
                done_flag = res.done and not cfg.bootstrap_on_timeout
                agent.buffer.push(Transition(
                    s=obs[i], a=unit_actions[i],
                    r=res.reward * cfg.reward_scale,
                    s_next=s_next, done=done_flag))
                ep_reward[i] += res.reward
                ep_len[i] += 1
                if res.done:
                    recent_ep[pool.setups[i]].append(ep_reward[i] / ep_len[i])
                    ep_reward[i] = 0.0
                    ep_len[i] = 0
                kappa_sum += np.mean(res.info.get("kappa_t", 0))
                omega_sum += res.info.get("omega_t", 0)
                kappa_n += 1
            obs = np.stack([r.observation for r in results])
            step += n

            if agent.buffer.size >= cfg.warmup_steps:
                for _ in range(cfg.updates_per_step):
                    c_losses, a_loss = agent.update_once()
                    last_losses = {"critic_1_loss": c_losses[0],
                                   "critic_2_loss": c_losses[1],
                                   "actor_loss": a_loss}

            if step >= next_log or step >= total_steps:
                row = {"step": step, "alpha": agent.alpha,
                       "buffer_size": agent.buffer.size,
                       "mean_kappa": kappa_sum / max(kappa_n, 1),
                       "mean_omega": omega_sum / max(kappa_n, 1),
                       **last_losses}
                for s in setups:
                    vals = recent_ep[s]
                    row[f"ep_rew_{s}"] = float(np.mean(vals)) if vals else np.nan
                    recent_ep[s] = []
                kappa_sum = omega_sum = kappa_n = 0.0
                log_rows.append(row)
                if writer is not None:
                    writer.writerow(row)
                    handle.flush()
                next_log = step + log_every

            if (checkpoint_every is not None and out_dir is not None
                    and step % checkpoint_every < n):
                path = out_dir / f"checkpoint_{step}.npz"
                agent.save(path, step)
                checkpoint_paths.append(path)
    finally:
        if handle is not None:
            handle.close()

    if out_dir is not None:
        final = Path(out_dir) / "checkpoint_final.npz"
        agent.save(final, step)
        checkpoint_paths.append(final)
    return TrainResult(agent=agent, log_rows=log_rows, csv_path=csv_path,
                       checkpoint_paths=checkpoint_paths)
