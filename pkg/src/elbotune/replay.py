"""Episodic goal-conditioned replay with whole-trajectory FIFO eviction.

An episode of ``T`` transitions keeps its ``T + 1`` frames once; transition
``t`` is ``(frames[t], actions[t], frames[t + 1])`` under a single goal latent.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .vae import VaeModel, encode_mean


@dataclass
class Episode:
    images: np.ndarray  # (T + 1, D)
    latents: np.ndarray  # (T + 1, d_z), posterior means
    actions: np.ndarray  # (T, action_dim)
    goal_latent: np.ndarray  # (d_z,)

    def __post_init__(self):
        t = len(self.actions)
        if t < 1:
            raise ValueError("empty episode")
        if len(self.images) != t + 1 or len(self.latents) != t + 1:
            raise ValueError("an episode of T actions needs T + 1 frames and latents")
        self.images.setflags(write=False)

    def __len__(self) -> int:
        return len(self.actions)

    def tail(self, n: int) -> "Episode":
        """The last ``n`` transitions."""
        return Episode(self.images[-(n + 1) :], self.latents[-(n + 1) :].copy(), self.actions[-n:], self.goal_latent)

    def transition(self, t: int) -> "Transition":
        return Transition(
            self.images[t], self.images[t + 1], self.latents[t], self.latents[t + 1], self.actions[t], self.goal_latent
        )


@dataclass(frozen=True)
class Transition:
    obs_image: np.ndarray
    next_obs_image: np.ndarray
    obs_latent: np.ndarray
    next_obs_latent: np.ndarray
    action: np.ndarray
    goal_latent: np.ndarray


@dataclass
class Batch:
    obs: np.ndarray
    action: np.ndarray
    next_obs: np.ndarray
    goal: np.ndarray
    reward: np.ndarray
    # provenance, for checking relabeling
    episode_index: np.ndarray
    step_index: np.ndarray
    goal_source_step: np.ndarray  # -1 original goal, -2 prior sample, else relabel step

    def __len__(self) -> int:
        return len(self.reward)


class EpisodeBuffer:
    def __init__(self, capacity_transitions: int):
        if capacity_transitions < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity_transitions = int(capacity_transitions)
        self.episodes: deque[Episode] = deque()
        self.total_transitions = 0
        self.pushed = 0  # episodes ever pushed; ids of survivors are a contiguous range ending here
        self._flat = None

    def __len__(self) -> int:
        return self.total_transitions

    @property
    def first_id(self) -> int:
        return self.pushed - len(self.episodes)

    def _evict_to(self, capacity: int) -> int:
        evicted = 0
        while self.total_transitions > capacity and len(self.episodes) > 1:
            old = self.episodes.popleft()
            self.total_transitions -= len(old)
            evicted += 1
        return evicted

    def push_episode(self, episode: Episode) -> int:
        """Append, then evict oldest whole episodes until within capacity.

        An episode longer than the capacity on its own is cut to its most
        recent transitions. Returns the number of episodes evicted.
        """
        if len(episode) < 1:
            raise ValueError("empty episode")
        if len(episode) > self.capacity_transitions:
            episode = episode.tail(self.capacity_transitions)
        self.episodes.append(episode)
        self.total_transitions += len(episode)
        self.pushed += 1
        self._flat = None
        return self._evict_to(self.capacity_transitions)

    def resize(self, new_capacity: int) -> int:
        if new_capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity_transitions = int(new_capacity)
        evicted = self._evict_to(self.capacity_transitions)
        if self.total_transitions > self.capacity_transitions:
            # a lone survivor larger than the new capacity keeps its newest part
            only = self.episodes.pop()
            self.episodes.append(only.tail(self.capacity_transitions))
            self.total_transitions = self.capacity_transitions
        self._flat = None
        return evicted

    def _flatten(self):
        if self._flat is None:
            lengths = np.array([len(e) for e in self.episodes])
            starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
            frame_starts = starts + np.arange(len(lengths))
            latents = np.concatenate([e.latents for e in self.episodes])
            actions = np.concatenate([e.actions for e in self.episodes])
            goals = np.stack([e.goal_latent for e in self.episodes])
            self._flat = (lengths, starts, frame_starts, latents, actions, goals)
        return self._flat

    def sample_batch(self, batch_size: int, rng, f_future: float = 0.5, f_prior: float = 0.2) -> Batch:
        """Uniform transitions with future-strategy and prior-sample goal relabeling.

        The reward is recomputed for the goal actually used.
        """
        if self.total_transitions == 0:
            raise ValueError("cannot sample from an empty buffer")
        if f_future < 0 or f_prior < 0 or f_future + f_prior > 1 + 1e-12:
            raise ValueError("relabel fractions must be nonnegative and sum to <= 1")
        lengths, starts, frame_starts, latents, actions, goals = self._flatten()
        flat = rng.integers(0, self.total_transitions, size=batch_size)
        ep = np.searchsorted(starts, flat, side="right") - 1
        t = flat - starts[ep]
        obs = latents[frame_starts[ep] + t]
        nxt = latents[frame_starts[ep] + t + 1]
        goal = goals[ep].copy()
        source = np.full(batch_size, -1)

        u = rng.random(batch_size)
        fut = u < f_future
        if fut.any():
            # uniform over this transition and the later ones in its episode
            span = lengths[ep[fut]] - t[fut]
            j = t[fut] + np.floor(rng.random(int(fut.sum())) * span).astype(int)
            goal[fut] = latents[frame_starts[ep[fut]] + j + 1]
            source[fut] = j
        pri = (~fut) & (u < f_future + f_prior)
        if pri.any():
            goal[pri] = rng.standard_normal((int(pri.sum()), goal.shape[1]))
            source[pri] = -2
        reward = -np.linalg.norm(nxt - goal, axis=1)
        return Batch(obs, actions[flat], nxt, goal, reward, ep, t, source)

    def refresh_latents(self, model: VaeModel, chunk: int = 4096) -> None:
        """Re-encode every stored frame as a posterior mean under ``model``."""
        if not self.episodes:
            return
        frames = np.concatenate([e.images for e in self.episodes])
        lat = np.concatenate([encode_mean(model, frames[i : i + chunk]) for i in range(0, len(frames), chunk)])
        k = 0
        for e in self.episodes:
            n = len(e.images)
            e.latents = lat[k : k + n]
            k += n
        self._flat = None

    def next_frames(self) -> np.ndarray:
        """All stored next-observation images (the VAE fine-tuning pool)."""
        return np.concatenate([e.images[1:] for e in self.episodes])

    def transitions(self):
        for e in self.episodes:
            for t in range(len(e)):
                yield e.transition(t)

    # snapshot: b"RPB1", uint32 episode count, then per episode
    # uint32 T, D, d_z, action_dim followed by images, latents, actions, goal (<f8)
    def save_snapshot(self, path) -> None:
        parts = [b"RPB1", struct.pack("<I", len(self.episodes))]
        for e in self.episodes:
            parts.append(struct.pack("<4I", len(e), e.images.shape[1], e.latents.shape[1], e.actions.shape[1]))
            for arr in (e.images, e.latents, e.actions, e.goal_latent):
                parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        Path(path).write_bytes(b"".join(parts))

    @classmethod
    def load_snapshot(cls, path, capacity_transitions: int) -> "EpisodeBuffer":
        raw = Path(path).read_bytes()
        if raw[:4] != b"RPB1":
            raise ValueError(f"{path}: not a replay snapshot")
        (count,) = struct.unpack_from("<I", raw, 4)
        off = 8
        buf = cls(capacity_transitions)

        def take(shape):
            nonlocal off
            n = int(np.prod(shape))
            arr = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64)
            off += 8 * n
            return arr

        for _ in range(count):
            t, d, dz, da = struct.unpack_from("<4I", raw, off)
            off += 16
            buf.push_episode(Episode(take((t + 1, d)), take((t + 1, dz)), take((t, da)), take((dz,))))
        return buf
