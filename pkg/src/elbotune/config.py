"""TOML run configuration: schema, defaults, validation and serialisation.

Sections are ``[env]``, ``[vae]``, ``[agent]``, ``[autotune]``, ``[run]`` and
``[search]``. Unknown keys and out-of-range values raise :class:`ConfigError`
naming the dotted key path.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .agent import AgentConfig
from .autotune import Auto, Caps, Fixed
from .envs import VARIANTS, NavEnvConfig
from .vae import VaeConfig


class ConfigError(ValueError):
    pass


@dataclass
class EnvSection:
    variant: str = "no_wall"
    image_size: int = 16
    workspace_scale: float = 1.0
    max_path_length: int = 50
    wall_set_size: int = 15
    action_scale: float = 0.15
    # [[env.curriculum]] entries {epoch = int, variant = str}; empty means no switches
    curriculum: list = field(default_factory=list)


@dataclass
class VaeSection:
    latent_dim: int = 4
    beta: float = 1.0
    hidden: list = field(default_factory=lambda: [128])
    learning_rate: float = 1e-3
    batch_size: int = 64
    eval_mc_samples: int = 4
    eval_batch: int = 256
    pretrain_rollouts: int = 20
    pretrain_steps: int = 4000
    finetune_steps: int = 250
    finetune_interval: int = 1


@dataclass
class AgentSection:
    hidden: list = field(default_factory=lambda: [64, 64])
    gamma: float = 0.99
    tau: float = 0.005
    alpha: float = 0.1
    batch_size: int = 128
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    f_future: float = 0.5
    f_prior: float = 0.2


@dataclass
class AutotuneSection:
    mode: str = "auto"
    xi: float = 1.0
    n_explore: int = 100
    n_buffer: int = 5000
    n_grad: int = 100
    cap_explore: int = 300
    cap_buffer: int = 15000
    cap_grad: int = 300


@dataclass
class RunSection:
    epochs: int = 40
    seed: int = 0
    eval_goals: int = 30
    checkpoint_interval: int = 0  # 0: final checkpoint only
    coverage_grid: int = 20
    log_trajectories: bool = True
    log_wall_clock: bool = False
    out_dir: str = "runs/default"


@dataclass
class SearchSection:
    trials: int = 10
    workers: int = 1
    seed: int = 0
    xi_range: list = field(default_factory=lambda: [0.1, 2.0])
    ne_range: list = field(default_factory=lambda: [5, 300])
    nb_range: list = field(default_factory=lambda: [250, 15000])
    ntheta_range: list = field(default_factory=lambda: [5, 300])
    objective_window: int = 3


@dataclass
class RunConfig:
    env: EnvSection = field(default_factory=EnvSection)
    vae: VaeSection = field(default_factory=VaeSection)
    agent: AgentSection = field(default_factory=AgentSection)
    autotune: AutotuneSection = field(default_factory=AutotuneSection)
    run: RunSection = field(default_factory=RunSection)
    search: SearchSection = field(default_factory=SearchSection)

    # -- derived views used by the training loop --

    def nav_config(self, variant: str | None = None) -> NavEnvConfig:
        e = self.env
        return NavEnvConfig(
            variant or e.variant,
            (3, e.image_size, e.image_size),
            e.workspace_scale,
            e.max_path_length,
            e.wall_set_size,
            e.action_scale,
        )

    def env_schedule(self) -> list[tuple[int, NavEnvConfig]]:
        sched = [(0, self.nav_config())]
        for entry in sorted(self.env.curriculum, key=lambda c: c["epoch"]):
            if entry["epoch"] == 0:
                sched[0] = (0, self.nav_config(entry["variant"]))
            else:
                sched.append((int(entry["epoch"]), self.nav_config(entry["variant"])))
        return sched

    def tuning_mode(self):
        a = self.autotune
        if a.mode == "auto":
            return Auto(a.xi)
        return Fixed(a.n_explore, a.n_buffer, a.n_grad)

    def caps(self) -> Caps:
        a = self.autotune
        return Caps(a.cap_explore, a.cap_buffer, a.cap_grad)

    def vae_config(self) -> VaeConfig:
        v = self.vae
        return VaeConfig(v.latent_dim, v.beta, tuple(v.hidden), v.learning_rate, v.batch_size, v.eval_mc_samples)

    def agent_config(self) -> AgentConfig:
        a = self.agent
        return AgentConfig(tuple(a.hidden), a.gamma, a.tau, a.alpha, a.batch_size, a.actor_lr, a.critic_lr, a.f_future, a.f_prior)

    def replace(self, **sections) -> "RunConfig":
        """Copy with per-section overrides, e.g. ``replace(autotune={"xi": 0.5})``; validated."""
        data = to_dict(self)
        for sec, values in sections.items():
            data[sec].update(values)
        return from_dict(data)


_SECTION_TYPES = {
    "env": EnvSection,
    "vae": VaeSection,
    "agent": AgentSection,
    "autotune": AutotuneSection,
    "run": RunSection,
    "search": SearchSection,
}


def _check_type(path: str, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
    elif isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
    return value


def _require(cond: bool, path: str, msg: str):
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def _positive_ints(path, values, n=None):
    _require(all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in values), path, "entries must be integers >= 1")
    if n is not None:
        _require(len(values) == n, path, f"expected {n} entries")


def _range(path, values, integer: bool):
    _require(len(values) == 2, path, "expected [low, high]")
    kinds = (int,) if integer else (int, float)
    _require(all(isinstance(v, kinds) and not isinstance(v, bool) for v in values), path, "bounds must be numbers")
    _require(values[0] <= values[1], path, "low must not exceed high")
    _require(values[0] > 0, path, "bounds must be positive")


def _validate(cfg: RunConfig) -> None:
    e, v, a, t, r, s = cfg.env, cfg.vae, cfg.agent, cfg.autotune, cfg.run, cfg.search
    _require(e.variant in VARIANTS, "env.variant", f"must be one of {VARIANTS}")
    _require(e.image_size >= 8, "env.image_size", "must be >= 8")
    _require(0 < e.workspace_scale <= 1, "env.workspace_scale", "must be in (0, 1]")
    _require(e.max_path_length >= 1, "env.max_path_length", "must be >= 1")
    _require(1 <= e.wall_set_size <= 15, "env.wall_set_size", "must be in 1..15")
    _require(e.action_scale > 0, "env.action_scale", "must be positive")
    for i, entry in enumerate(e.curriculum):
        p = f"env.curriculum[{i}]"
        _require(isinstance(entry, dict) and set(entry) == {"epoch", "variant"}, p, "needs exactly the keys epoch and variant")
        _require(isinstance(entry["epoch"], int) and entry["epoch"] >= 0, p + ".epoch", "must be an integer >= 0")
        _require(entry["variant"] in VARIANTS, p + ".variant", f"must be one of {VARIANTS}")
    _require(v.latent_dim >= 1, "vae.latent_dim", "must be >= 1")
    _require(v.beta >= 1, "vae.beta", "must be >= 1")
    _positive_ints("vae.hidden", v.hidden)
    for name in ("learning_rate",):
        _require(getattr(v, name) > 0, f"vae.{name}", "must be positive")
    for name in ("batch_size", "eval_mc_samples", "eval_batch", "pretrain_rollouts", "pretrain_steps", "finetune_interval"):
        _require(getattr(v, name) >= 1, f"vae.{name}", "must be >= 1")
    _require(v.finetune_steps >= 0, "vae.finetune_steps", "must be >= 0")
    _positive_ints("agent.hidden", a.hidden)
    _require(0 <= a.gamma < 1, "agent.gamma", "must be in [0, 1)")
    _require(0 < a.tau <= 1, "agent.tau", "must be in (0, 1]")
    _require(a.alpha >= 0, "agent.alpha", "must be >= 0")
    _require(a.batch_size >= 1, "agent.batch_size", "must be >= 1")
    _require(a.actor_lr > 0, "agent.actor_lr", "must be positive")
    _require(a.critic_lr > 0, "agent.critic_lr", "must be positive")
    _require(a.f_future >= 0 and a.f_prior >= 0 and a.f_future + a.f_prior <= 1, "agent.f_future", "relabel fractions must be >= 0 and sum to <= 1")
    _require(t.mode in ("auto", "fixed"), "autotune.mode", "must be 'auto' or 'fixed'")
    _require(t.xi > 0, "autotune.xi", "must be positive")
    for name in ("n_explore", "n_buffer", "n_grad", "cap_explore", "cap_buffer", "cap_grad"):
        _require(getattr(t, name) >= 1, f"autotune.{name}", "must be >= 1")
    _require(r.epochs >= 1, "run.epochs", "must be >= 1")
    _require(r.eval_goals >= 1, "run.eval_goals", "must be >= 1")
    _require(r.checkpoint_interval >= 0, "run.checkpoint_interval", "must be >= 0")
    _require(r.coverage_grid >= 1, "run.coverage_grid", "must be >= 1")
    _require(s.trials >= 1, "search.trials", "must be >= 1")
    _require(s.workers >= 1, "search.workers", "must be >= 1")
    _range("search.xi_range", s.xi_range, integer=False)
    _range("search.ne_range", s.ne_range, integer=True)
    _range("search.nb_range", s.nb_range, integer=True)
    _range("search.ntheta_range", s.ntheta_range, integer=True)
    _require(s.objective_window >= 1, "search.objective_window", "must be >= 1")


def from_dict(data: dict) -> RunConfig:
    unknown = set(data) - set(_SECTION_TYPES)
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown section")
    sections = {}
    for name, cls in _SECTION_TYPES.items():
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"{name}: expected a table")
        defaults = cls()
        known = {f.name for f in dataclasses.fields(cls)}
        for key in raw:
            if key not in known:
                raise ConfigError(f"{name}.{key}: unknown key")
        values = {}
        for f in dataclasses.fields(cls):
            if f.name in raw:
                values[f.name] = _check_type(f"{name}.{f.name}", raw[f.name], getattr(defaults, f.name))
        sections[name] = cls(**values)
    cfg = RunConfig(**sections)
    _validate(cfg)
    return cfg


def to_dict(cfg: RunConfig) -> dict:
    return {name: dataclasses.asdict(getattr(cfg, name)) for name in _SECTION_TYPES}


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML ({exc})") from None
    return from_dict(data)


def serialize(cfg: RunConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def write_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(serialize(cfg))
