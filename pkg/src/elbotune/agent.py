"""Goal-conditioned soft actor-critic on VAE latents, fixed entropy temperature.

Actor input is ``z_s ++ z_g``. Critic input is ``z_s ++ z_g ++ a``. Actions are
``action_scale * tanh(u)`` with ``u ~ N(mean, exp(log_std)^2)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .nn import AdamState, DenseNet, adam_step, backward_pre, forward, forward_cached, init_dense, load_params, save_params, soft_update

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass
class AgentConfig:
    hidden: tuple[int, ...] = (64, 64)
    gamma: float = 0.99
    tau: float = 0.005
    alpha: float = 0.1
    batch_size: int = 128
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    f_future: float = 0.5
    f_prior: float = 0.2


def latent_reward(z_s, z_g):
    """Negative Euclidean distance between state and goal latents (row-wise for batches)."""
    z_s = np.asarray(z_s, dtype=np.float64)
    z_g = np.asarray(z_g, dtype=np.float64)
    if z_s.shape != z_g.shape:
        raise ValueError(f"latent shapes differ: {z_s.shape} vs {z_g.shape}")
    return -np.linalg.norm(z_s - z_g, axis=-1)


@dataclass
class Agent:
    actor: DenseNet
    critics: list[DenseNet]
    targets: list[DenseNet]
    actor_opt: AdamState
    critic_opts: list[AdamState]
    latent_dim: int
    action_dim: int
    action_scale: float
    config: AgentConfig
    updates: int = 0


def make_agent(latent_dim: int, action_dim: int, action_scale: float, config: AgentConfig, rng) -> Agent:
    h = list(config.hidden)
    actor = init_dense([2 * latent_dim, *h, 2 * action_dim], rng)
    critics = [init_dense([2 * latent_dim + action_dim, *h, 1], rng) for _ in range(2)]
    return Agent(
        actor,
        critics,
        [c.copy() for c in critics],
        AdamState.for_net(actor, config.actor_lr),
        [AdamState.for_net(c, config.critic_lr) for c in critics],
        latent_dim,
        action_dim,
        float(action_scale),
        config,
    )


def _policy_head(agent: Agent, out: np.ndarray):
    mean = out[:, : agent.action_dim]
    raw_ls = out[:, agent.action_dim :]
    return mean, raw_ls, np.clip(raw_ls, LOG_STD_MIN, LOG_STD_MAX)


def _log1m_tanh2(u):
    # log(1 - tanh(u)^2) without cancellation
    return 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def sample_policy(agent: Agent, z_s, z_g, noise):
    """Reparameterised squashed action and its log-density (per row)."""
    x = np.concatenate([np.atleast_2d(z_s), np.atleast_2d(z_g)], axis=1)
    mean, _, ls = _policy_head(agent, forward(agent.actor, x))
    u = mean + np.exp(ls) * noise
    logp = np.sum(-0.5 * noise * noise - ls - _HALF_LOG_2PI - _log1m_tanh2(u), axis=1)
    return agent.action_scale * np.tanh(u), logp


def select_action(agent: Agent, z_s, z_g, deterministic: bool = False, rng=None):
    """Bounded action(s); 1-D latents give a 1-D action."""
    single = np.ndim(z_s) == 1
    x = np.concatenate([np.atleast_2d(z_s), np.atleast_2d(z_g)], axis=1)
    mean, _, ls = _policy_head(agent, forward(agent.actor, x))
    if deterministic:
        u = mean
    else:
        u = mean + np.exp(ls) * rng.standard_normal(mean.shape)
    a = agent.action_scale * np.tanh(u)
    return a[0] if single else a


def q_values(net: DenseNet, obs, goal, action) -> np.ndarray:
    return forward(net, np.concatenate([obs, goal, action], axis=1))[:, 0]


def td_targets(agent: Agent, batch, noise) -> np.ndarray:
    """Clipped double-Q soft targets ``r + gamma * (min Q' - alpha * log pi)``."""
    cfg = agent.config
    a2, logp2 = sample_policy(agent, batch.next_obs, batch.goal, noise)
    q_next = np.minimum(q_values(agent.targets[0], batch.next_obs, batch.goal, a2), q_values(agent.targets[1], batch.next_obs, batch.goal, a2))
    return batch.reward + cfg.gamma * (q_next - cfg.alpha * logp2)


def critic_loss_and_grads(agent: Agent, batch, targets):
    """Mean squared TD error of each critic against fixed ``targets``.

    Returns ``(loss, grads)`` where ``loss`` averages the two critics and
    ``grads[i]`` is the gradient of critic ``i``'s own loss.
    """
    x = np.concatenate([batch.obs, batch.goal, batch.action], axis=1)
    n = len(targets)
    losses, grads = [], []
    for net in agent.critics:
        cache = forward_cached(net, x)
        err = cache.out[:, 0] - targets
        losses.append(float(np.mean(err * err)))
        g, _ = backward_pre(net, cache, (2.0 * err / n)[:, None])
        grads.append(g)
    return 0.5 * (losses[0] + losses[1]), grads


def actor_loss_and_grads(agent: Agent, batch, noise):
    """Mean of ``alpha * log pi(a|s) - min_i Q_i(s, a)`` for reparameterised ``a``."""
    alpha = agent.config.alpha
    n = len(batch.obs)
    x = np.concatenate([batch.obs, batch.goal], axis=1)
    cache = forward_cached(agent.actor, x)
    mean, raw_ls, ls = _policy_head(agent, cache.out)
    std = np.exp(ls)
    u = mean + std * noise
    th = np.tanh(u)
    a = agent.action_scale * th
    logp = np.sum(-0.5 * noise * noise - ls - _HALF_LOG_2PI - _log1m_tanh2(u), axis=1)

    qx = np.concatenate([batch.obs, batch.goal, a], axis=1)
    caches = [forward_cached(c, qx) for c in agent.critics]
    qs = np.stack([c.out[:, 0] for c in caches])
    pick = np.argmin(qs, axis=0)
    loss = float(np.mean(alpha * logp - qs[pick, np.arange(n)]))

    dq_da = np.zeros((n, agent.action_dim))
    for i, (net, c) in enumerate(zip(agent.critics, caches)):
        sel = (pick == i).astype(np.float64)[:, None]
        _, gin = backward_pre(net, c, sel)
        dq_da += gin[:, -agent.action_dim :]
    g_u = (-dq_da * agent.action_scale * (1.0 - th * th) + alpha * 2.0 * th) / n
    g_mean = g_u
    g_ls = (g_u * std * noise - alpha / n) * ((raw_ls > LOG_STD_MIN) & (raw_ls < LOG_STD_MAX))
    grads, _ = backward_pre(agent.actor, cache, np.concatenate([g_mean, g_ls], axis=1))
    return loss, grads


def soft_target_update(agent: Agent, tau: float) -> None:
    if not 0 < tau <= 1:
        raise ValueError("tau must be in (0, 1]")
    for t, c in zip(agent.targets, agent.critics):
        soft_update(t, c, tau)


def gradient_step(agent: Agent, batch, rng) -> tuple[float, float]:
    """One critic update, one actor update, one Polyak target update."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    shape = (len(batch), agent.action_dim)
    targets = td_targets(agent, batch, rng.standard_normal(shape))
    c_loss, c_grads = critic_loss_and_grads(agent, batch, targets)
    for net, g, opt in zip(agent.critics, c_grads, agent.critic_opts):
        adam_step(net, g, opt)
    a_loss, a_grads = actor_loss_and_grads(agent, batch, rng.standard_normal(shape))
    adam_step(agent.actor, a_grads, agent.actor_opt)
    soft_target_update(agent, agent.config.tau)
    agent.updates += 1
    return c_loss, a_loss


_NETS = ("actor", "critic0", "critic1", "target0", "target1")


def save_agent(directory, agent: Agent) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    nets = [agent.actor, *agent.critics, *agent.targets]
    for name, net in zip(_NETS, nets):
        save_params(directory / f"{name}.nnc", net)
    meta = {
        "latent_dim": agent.latent_dim,
        "action_dim": agent.action_dim,
        "action_scale": agent.action_scale,
        "updates": agent.updates,
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(agent.config).items()},
    }
    (directory / "agent.json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def load_agent(directory) -> Agent:
    directory = Path(directory)
    meta = json.loads((directory / "agent.json").read_text())
    cfg = dict(meta["config"])
    cfg["hidden"] = tuple(cfg["hidden"])
    config = AgentConfig(**cfg)
    actor, c0, c1, t0, t1 = (load_params(directory / f"{n}.nnc") for n in _NETS)
    return Agent(
        actor,
        [c0, c1],
        [t0, t1],
        AdamState.for_net(actor, config.actor_lr),
        [AdamState.for_net(c, config.critic_lr) for c in (c0, c1)],
        meta["latent_dim"],
        meta["action_dim"],
        meta["action_scale"],
        config,
        meta["updates"],
    )
