"""Imagined-goal RL with ELBO-driven budgets.

Each epoch runs these phases in order: resolve budgets from the last ELBO,
resize the buffer, explore with prior-sampled latent goals, run policy
updates, evaluate on goal images, fine-tune the VAE and measure the ELBO
for the next epoch.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from copy import deepcopy
from pathlib import Path

import numpy as np

from . import envs
from .agent import Agent, gradient_step, make_agent, save_agent, select_action
from .autotune import AutotuneSettings, resolve
from .config import RunConfig, to_dict, write_config
from .replay import Episode, EpisodeBuffer
from .vae import ElboReport, VaeModel, VaeOptimizer, encode_mean, evaluate_elbo, fit, save_vae

log = logging.getLogger(__name__)

METRICS_COLUMNS = [
    "epoch",
    "neg_beta_elbo",
    "kl_term",
    "recon_nll",
    "n_e",
    "n_b",
    "n_theta",
    "buffer_transitions",
    "eval_dist_mean",
    "eval_dist_std",
    "coverage",
    "cum_env_steps",
    "cum_grad_updates",
    "wall_clock_s",
]
ROLLOUT_CHUNK = 256  # episodes rolled out side by side


@dataclass
class EpochMetrics:
    epoch: int
    neg_beta_elbo: float
    kl_term: float
    recon_nll: float
    n_e: int
    n_b: int
    n_theta: int
    buffer_transitions: int
    eval_dist_mean: float
    eval_dist_std: float
    coverage: float
    cum_env_steps: int
    cum_grad_updates: int
    wall_clock_s: float
    variant: str = ""
    trajectories: np.ndarray | None = field(default=None, repr=False)  # (goals, l + 1, 2)

    def row(self, log_wall_clock: bool) -> list[str]:
        out = []
        for col in METRICS_COLUMNS:
            v = getattr(self, col)
            if col == "wall_clock_s" and not log_wall_clock:
                out.append("")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out


@dataclass
class RunState:
    config: RunConfig
    schedule: list
    vae: VaeModel
    vae_opt: VaeOptimizer
    agent: Agent
    buffer: EpisodeBuffer
    report: ElboReport  # latest ELBO evaluation, drives the next epoch's budgets
    rng: np.random.Generator
    pretrain_env_steps: int
    cum_env_steps: int = 0
    cum_grad_updates: int = 0
    phase_log: list = field(default_factory=list)
    metrics: list = field(default_factory=list)
    settings: list = field(default_factory=list)


def coverage_area(trajectories, bounds=(0.0, 1.0), grid: int = 20) -> float:
    """Fraction of a ``grid x grid`` partition of the workspace touched by any point."""
    pts = np.concatenate([np.asarray(t, dtype=np.float64).reshape(-1, 2) for t in trajectories])
    if len(pts) == 0:
        raise ValueError("no trajectory points")
    lo, hi = bounds
    cells = np.clip(np.floor((pts - lo) / (hi - lo) * grid).astype(int), 0, grid - 1)
    return len({(int(a), int(b)) for a, b in cells}) / float(grid * grid)


def rollout(env_cfg, vae: VaeModel, agent: Agent, n: int, rng, goals=None, deterministic=False, start=None):
    """Roll ``n`` episodes of exactly ``l`` steps side by side.

    Without ``goals`` each episode draws a latent goal from ``N(0, I)``.
    Returns frames ``(n, l+1, D)``, latents ``(n, l+1, d_z)``, actions,
    positions ``(n, l+1, 2)`` and the goal latents.
    """
    l = env_cfg.max_path_length
    if start is None:
        batch, img = envs.reset_batch(env_cfg, n, rng)
    else:
        batch, img = start, envs.render_batch(start, env_cfg)
    if goals is None:
        goals = rng.standard_normal((n, vae.latent_dim))
    frames = np.empty((n, l + 1, img.shape[1]))
    latents = np.empty((n, l + 1, vae.latent_dim))
    actions = np.empty((n, l, agent.action_dim))
    positions = np.empty((n, l + 1, 2))
    frames[:, 0], positions[:, 0] = img, batch.positions
    latents[:, 0] = encode_mean(vae, img)
    for t in range(l):
        a = select_action(agent, latents[:, t], goals, deterministic, rng)
        batch, img = envs.step_batch(batch, a, env_cfg)
        actions[:, t] = a
        frames[:, t + 1], positions[:, t + 1] = img, batch.positions
        latents[:, t + 1] = encode_mean(vae, img)
    return frames, latents, actions, positions, goals


def _random_rollout_frames(env_cfg, n: int, rng) -> np.ndarray:
    l = env_cfg.max_path_length
    batch, img = envs.reset_batch(env_cfg, n, rng)
    frames = [img]
    for _ in range(l):
        a = rng.uniform(-env_cfg.action_scale, env_cfg.action_scale, size=(n, 2))
        batch, img = envs.step_batch(batch, a, env_cfg)
        frames.append(img)
    return np.stack(frames, axis=1).reshape(-1, img.shape[1])


def _eval_batch(frames: np.ndarray, size: int, rng) -> np.ndarray:
    idx = rng.choice(len(frames), size=min(size, len(frames)), replace=False)
    return frames[np.sort(idx)]


def pretrain_vae(config: RunConfig, rng) -> tuple[VaeModel, VaeOptimizer, ElboReport, int]:
    """Fit the VAE on uniform-random-action rollouts in the epoch-0 environment.

    Returns the model, its optimiser state, the evaluation report that seeds
    epoch 0, and the number of environment steps spent.
    """
    v = config.vae
    if v.pretrain_rollouts < 1:
        raise ValueError("pretrain_rollouts must be >= 1")
    env_cfg = envs.curriculum_advance(config.env_schedule(), 0)
    frames = _random_rollout_frames(env_cfg, v.pretrain_rollouts, rng)
    model = config.vae_config().build(env_cfg.image_shape, rng)
    opt = VaeOptimizer.for_model(model, v.learning_rate)
    fit(model, frames, v.pretrain_steps, v.batch_size, opt, rng)
    report = evaluate_elbo(model, _eval_batch(frames, v.eval_batch, rng), v.eval_mc_samples, rng)
    return model, opt, report, v.pretrain_rollouts * env_cfg.max_path_length


_PRETRAINED: dict = {}


def _pretrained(config: RunConfig):
    """Pretraining depends only on env, VAE settings and seed; share it across trials."""
    d = to_dict(config)
    key = json.dumps({"env": d["env"], "vae": d["vae"], "seed": config.run.seed}, sort_keys=True)
    if key not in _PRETRAINED:
        if len(_PRETRAINED) >= 8:
            _PRETRAINED.pop(next(iter(_PRETRAINED)))
        _PRETRAINED[key] = pretrain_vae(config, np.random.default_rng([config.run.seed, 1]))
    model, opt, report, steps = _PRETRAINED[key]
    return model.copy(), deepcopy(opt), report, steps


def init_run(config: RunConfig) -> RunState:
    seed = config.run.seed
    model, opt, report, pre_steps = _pretrained(config)
    env0 = config.env_schedule()[0][1]
    agent = make_agent(model.latent_dim, 2, env0.action_scale, config.agent_config(), np.random.default_rng([seed, 3]))
    buffer = EpisodeBuffer(max(1, config.autotune.n_buffer))
    return RunState(
        config,
        config.env_schedule(),
        model,
        opt,
        agent,
        buffer,
        report,
        np.random.default_rng([seed, 2]),
        pre_steps,
        cum_env_steps=pre_steps,
    )


def run_epoch(state: RunState, epoch: int) -> EpochMetrics:
    cfg = state.config
    t0 = time.perf_counter()
    env_cfg = envs.curriculum_advance(state.schedule, epoch)
    l = env_cfg.max_path_length
    phases = []

    # budgets from the previous evaluation
    settings: AutotuneSettings = resolve(cfg.tuning_mode(), state.report, l, cfg.caps())
    phases.append("tune")
    state.buffer.resize(settings.n_buffer)
    phases.append("resize")

    # exploration: prior goals, stochastic policy, whole episodes into the buffer
    remaining = settings.n_explore
    while remaining > 0:
        n = min(ROLLOUT_CHUNK, remaining)
        frames, latents, actions, _, goals = rollout(env_cfg, state.vae, state.agent, n, state.rng)
        for i in range(n):
            state.buffer.push_episode(Episode(frames[i], latents[i], actions[i], goals[i]))
        state.cum_env_steps += n * l
        remaining -= n
    phases.append("explore")

    # policy updates
    ac = cfg.agent
    for _ in range(settings.n_grad):
        batch = state.buffer.sample_batch(ac.batch_size, state.rng, ac.f_future, ac.f_prior)
        gradient_step(state.agent, batch, state.rng)
    state.cum_grad_updates += settings.n_grad
    phases.append("update")

    # evaluation on goal images; goals depend only on (seed, epoch) so runs are paired
    eval_rng = np.random.default_rng([cfg.run.seed, epoch, 7])
    start, _ = envs.reset_batch(env_cfg, cfg.run.eval_goals, eval_rng)
    goal_imgs, _ = envs.sample_eval_goal_batch(env_cfg, eval_rng, start)
    goal_lat = encode_mean(state.vae, goal_imgs)
    frames, _, _, positions, _ = rollout(env_cfg, state.vae, state.agent, len(goal_imgs), eval_rng, goal_lat, True, start)
    dist = envs.image_distance(frames[:, -1], goal_imgs)
    coverage = coverage_area(positions, env_cfg.bounds, cfg.run.coverage_grid)
    phases.append("evaluate")

    if epoch % cfg.vae.finetune_interval == 0 and cfg.vae.finetune_steps > 0:
        pool = state.buffer.next_frames()
        fit(state.vae, pool, cfg.vae.finetune_steps, cfg.vae.batch_size, state.vae_opt, state.rng)
        state.buffer.refresh_latents(state.vae)
        phases.append("finetune")
        state.report = evaluate_elbo(state.vae, _eval_batch(pool, cfg.vae.eval_batch, state.rng), cfg.vae.eval_mc_samples, state.rng)
        phases.append("elbo")

    state.phase_log.append(phases)
    state.settings.append(settings)
    rep = state.report
    m = EpochMetrics(
        epoch,
        rep.neg_beta_elbo,
        rep.kl_term,
        rep.recon_nll,
        settings.n_explore,
        settings.n_buffer,
        settings.n_grad,
        state.buffer.total_transitions,
        float(dist.mean()),
        float(dist.std()),
        coverage,
        state.cum_env_steps,
        state.cum_grad_updates,
        time.perf_counter() - t0,
        env_cfg.variant,
        positions,
    )
    state.metrics.append(m)
    return m


@dataclass
class RunResult:
    metrics: list[EpochMetrics]
    state: RunState
    out_dir: Path | None
    peak_buffer: int
    wall_clock_s: float

    def objective(self, window: int = 3) -> float:
        return float(np.mean([m.eval_dist_mean for m in self.metrics[-window:]]))


def _write_metrics(path: Path, metrics, log_wall_clock: bool) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for m in metrics:
            w.writerow(m.row(log_wall_clock))


def _write_trajectories(path: Path, positions: np.ndarray) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["traj_id", "step", "x", "y"])
        for i, traj in enumerate(positions):
            for t, (x, y) in enumerate(traj):
                w.writerow([i, t, repr(float(x)), repr(float(y))])


def _checkpoint(out: Path, state: RunState, tag: str) -> None:
    d = out / "checkpoints" / tag
    save_vae(d / "vae", state.vae)
    save_agent(d / "agent", state.agent)


def run(config: RunConfig, out_dir=None, write: bool = True) -> RunResult:
    """All epochs of one seed; writes ``metrics.csv``, trajectories and checkpoints.

    Output files depend only on the config, so repeated runs are byte-identical
    (wall clock goes to ``timing.csv`` unless ``run.log_wall_clock`` is set).
    """
    t_start = time.perf_counter()
    out = Path(out_dir if out_dir is not None else config.run.out_dir) if write else None
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            write_config(config, out / "config.toml")
        except OSError as exc:
            raise OSError(f"cannot write run output to {out}: {exc}") from exc
    state = init_run(config)
    peak = 0
    for epoch in range(config.run.epochs):
        m = run_epoch(state, epoch)
        peak = max(peak, m.buffer_transitions)
        log.info(
            "epoch %d %s: -elbo %.2f N=(%d,%d,%d) dist %.3f cov %.3f",
            epoch, m.variant, m.neg_beta_elbo, m.n_e, m.n_b, m.n_theta, m.eval_dist_mean, m.coverage,
        )
        if out is not None:
            try:
                if config.run.log_trajectories:
                    _write_trajectories(out / f"coverage_epoch{epoch:03d}.csv", m.trajectories)
                ci = config.run.checkpoint_interval
                if ci and (epoch + 1) % ci == 0:
                    _checkpoint(out, state, f"epoch_{epoch:03d}")
            except OSError as exc:
                raise OSError(f"cannot write run output to {out}: {exc}") from exc
    wall = time.perf_counter() - t_start
    if out is not None:
        try:
            _write_metrics(out / "metrics.csv", state.metrics, config.run.log_wall_clock)
            with (out / "timing.csv").open("w") as fh:
                fh.write("epoch,wall_clock_s\n")
                for m in state.metrics:
                    fh.write(f"{m.epoch},{m.wall_clock_s:.3f}\n")
            _checkpoint(out, state, "final")
        except OSError as exc:
            raise OSError(f"cannot write run output to {out}: {exc}") from exc
    return RunResult(state.metrics, state, out, peak, wall)
