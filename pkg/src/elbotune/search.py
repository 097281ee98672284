"""Random search over xi (auto mode) or over the raw budgets (fixed mode).

Each trial is one full training run. Trial ``i`` of master seed ``s`` uses
run seed ``trial_seed(s, i)`` in both modes, so auto and fixed harnesses see
the same environment and pretraining randomness trial by trial.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .rig import run

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "rank",
    "trial",
    "label",
    "mode",
    "seed",
    "xi",
    "n_e",
    "n_b",
    "n_theta",
    "objective",
    "cum_env_steps",
    "cum_grad_updates",
    "peak_buffer",
    "wall_clock_s",
]


@dataclass(frozen=True)
class SearchSpace:
    mode: str
    xi_range: tuple[float, float] = (0.1, 2.0)
    ne_range: tuple[int, int] = (5, 300)
    nb_range: tuple[int, int] = (250, 15000)
    ntheta_range: tuple[int, int] = (5, 300)

    def __post_init__(self):
        if self.mode not in ("auto", "fixed"):
            raise ValueError(f"mode must be 'auto' or 'fixed', got {self.mode!r}")
        for name in ("xi_range", "ne_range", "nb_range", "ntheta_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name}: need 0 < low <= high")

    @classmethod
    def from_config(cls, config: RunConfig, mode: str) -> "SearchSpace":
        s = config.search
        return cls(mode, tuple(s.xi_range), tuple(s.ne_range), tuple(s.nb_range), tuple(s.ntheta_range))

    def sample(self, rng) -> dict:
        """One point: uniform in xi, N_e, N_theta; log-uniform in N_b."""
        if self.mode == "auto":
            return {"mode": "auto", "xi": float(rng.uniform(*self.xi_range))}
        lo, hi = self.nb_range
        n_b = int(round(math.exp(rng.uniform(math.log(lo), math.log(hi)))))
        return {
            "mode": "fixed",
            "n_explore": int(rng.integers(self.ne_range[0], self.ne_range[1] + 1)),
            "n_buffer": min(max(n_b, lo), hi),
            "n_grad": int(rng.integers(self.ntheta_range[0], self.ntheta_range[1] + 1)),
        }


@dataclass
class TrialResult:
    trial: int
    label: str
    seed: int
    params: dict
    objective: float
    cum_env_steps: int
    cum_grad_updates: int
    peak_buffer: int
    wall_clock_s: float
    n_e: list
    n_b: list
    n_theta: list
    coverage: list
    agent_updates: int

    def summary_row(self, rank: int, log_wall_clock: bool = False) -> list:
        p = self.params
        return [
            rank,
            self.trial,
            self.label,
            p["mode"],
            self.seed,
            repr(p["xi"]) if "xi" in p else "",
            p.get("n_explore", ""),
            p.get("n_buffer", ""),
            p.get("n_grad", ""),
            repr(self.objective),
            self.cum_env_steps,
            self.cum_grad_updates,
            self.peak_buffer,
            f"{self.wall_clock_s:.3f}" if log_wall_clock else "",
        ]


def trial_seed(master_seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([master_seed, trial]).generate_state(1)[0])


def trial_config(base: RunConfig, params: dict, seed: int) -> RunConfig:
    tune = {k: v for k, v in params.items() if k != "mode"}
    return base.replace(autotune={"mode": params["mode"], **tune}, run={"seed": seed})


def run_trial(base: RunConfig, params: dict, seed: int, trial: int = 0, label: str = "", out_dir=None) -> TrialResult:
    cfg = trial_config(base, params, seed)
    res = run(cfg, out_dir, write=out_dir is not None)
    m = res.metrics
    if res.state.agent.updates != res.state.cum_grad_updates:
        raise RuntimeError("gradient update accounting mismatch")
    return TrialResult(
        trial,
        label or f"{params['mode']}_{trial:03d}",
        seed,
        params,
        res.objective(cfg.search.objective_window),
        m[-1].cum_env_steps,
        m[-1].cum_grad_updates,
        res.peak_buffer,
        res.wall_clock_s,
        [x.n_e for x in m],
        [x.n_b for x in m],
        [x.n_theta for x in m],
        [x.coverage for x in m],
        res.state.agent.updates,
    )


def _run_job(job):
    return run_trial(*job)


def _run_jobs(jobs, workers: int) -> list[TrialResult]:
    if workers <= 1 or len(jobs) <= 1:
        out = []
        for job in jobs:
            r = _run_job(job)
            log.info("trial %s objective %.4f", r.label, r.objective)
            out.append(r)
        return out
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs))


def ranked(results: list[TrialResult]) -> list[TrialResult]:
    return sorted(results, key=lambda r: (r.objective, r.trial))


def random_search(space: SearchSpace, n_trials: int, base_config: RunConfig, master_seed: int = 0, workers: int = 1, out_dir=None) -> list[TrialResult]:
    """Run ``n_trials`` sampled configurations; best (lowest objective) first."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = np.random.default_rng([master_seed, 0 if space.mode == "auto" else 1])
    jobs = []
    for i in range(n_trials):
        params = space.sample(rng)
        label = f"{space.mode}_{i:03d}"
        trial_out = None if out_dir is None else Path(out_dir) / label
        jobs.append((base_config, params, trial_seed(master_seed, i), i, label, trial_out))
    return ranked(_run_jobs(jobs, workers))


def baseline_params(base_config: RunConfig) -> dict[str, dict]:
    """Each baseline starves one budget at its search-range minimum, the others at their maxima."""
    s = base_config.search
    ne, nb, nt = s.ne_range[1], s.nb_range[1], s.ntheta_range[1]
    return {
        "limited_exploration": {"mode": "fixed", "n_explore": s.ne_range[0], "n_buffer": nb, "n_grad": nt},
        "limited_buffer": {"mode": "fixed", "n_explore": ne, "n_buffer": s.nb_range[0], "n_grad": nt},
        "limited_updates": {"mode": "fixed", "n_explore": ne, "n_buffer": nb, "n_grad": s.ntheta_range[0]},
    }


def run_baselines(base_config: RunConfig, seed: int | None = None, workers: int = 1, out_dir=None) -> dict[str, TrialResult]:
    seed = base_config.run.seed if seed is None else seed
    jobs = []
    for i, (name, params) in enumerate(baseline_params(base_config).items()):
        jobs.append((base_config, params, seed, i, name, None if out_dir is None else Path(out_dir) / name))
    return {r.label: r for r in _run_jobs(jobs, workers)}


def write_summary(path, results, log_wall_clock: bool = False) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for rank, r in enumerate(results):
            w.writerow(r.summary_row(rank, log_wall_clock))
