"""Map the VAE's negative beta-ELBO to exploration, buffer and update budgets."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Caps:
    n_explore: int | None = None
    n_buffer: int | None = None
    n_grad: int | None = None


@dataclass(frozen=True)
class AutotuneSettings:
    n_explore: int
    n_buffer: int
    n_grad: int
    xi: float | None
    max_path_length: int
    estimated_goal_count: float | None = None

    def as_tuple(self) -> tuple[int, int, int]:
        return self.n_explore, self.n_buffer, self.n_grad


@dataclass(frozen=True)
class Auto:
    xi: float

    def __post_init__(self):
        if not self.xi > 0:
            raise ValueError("xi must be positive")


@dataclass(frozen=True)
class Fixed:
    n_explore: int
    n_buffer: int
    n_grad: int

    def __post_init__(self):
        if min(self.n_explore, self.n_buffer, self.n_grad) < 1:
            raise ValueError("fixed budgets must all be >= 1")


TuningMode = Auto | Fixed


def compute_settings(neg_beta_elbo: float, xi: float, max_path_length: int, caps: Caps | None = None) -> AutotuneSettings:
    """``N_e = N_theta = ceil(xi * neg_elbo)`` clamped to ``[1, cap]``, ``N_b = l * N_e``.

    With a buffer cap set, ``N_e`` is also held to ``cap_b // l`` so the
    coupling ``N_b = l * N_e`` survives the cap.
    """
    if not math.isfinite(neg_beta_elbo):
        raise ValueError(f"non-finite negative ELBO {neg_beta_elbo!r}; VAE evaluation is broken")
    if not xi > 0:
        raise ValueError("xi must be positive")
    if max_path_length < 1:
        raise ValueError("max path length must be >= 1")
    caps = caps or Caps()
    goals = xi * neg_beta_elbo
    n = max(1, math.ceil(goals))
    limits = [c for c in (caps.n_explore, caps.n_grad) if c is not None]
    if caps.n_buffer is not None:
        limits.append(max(1, caps.n_buffer // max_path_length))
    if limits:
        n = min(n, *limits)
    return AutotuneSettings(n, max_path_length * n, n, xi, max_path_length, goals)


def resolve(mode, elbo_report, max_path_length: int, caps: Caps | None = None) -> AutotuneSettings:
    if isinstance(mode, Fixed):
        return AutotuneSettings(mode.n_explore, mode.n_buffer, mode.n_grad, None, max_path_length)
    if isinstance(mode, Auto):
        return compute_settings(elbo_report.neg_beta_elbo, mode.xi, max_path_length, caps)
    raise TypeError(f"unknown tuning mode {mode!r}")
