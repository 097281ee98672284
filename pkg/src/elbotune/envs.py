"""Rendered 2-D point navigation: no-wall, multi-wall and multi-color variants.

Positions live in canvas units, the unit square with y pointing down. The
reachable workspace is a centred square of side ``workspace_scale``. Walls
are axis-aligned segments. Each wall is inflated by one pixel into an
exclusion rectangle that motion may touch but never enter. All operations
have a batched form (``*_batch``) working on many episodes at once. The
single-state functions wrap it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

VARIANTS = ("no_wall", "multi_wall", "multi_color")
WALL_SEED = 15_2021
BACKGROUND = 0.0
WALL_GRAY = 0.5
RED = (1.0, 0.0, 0.0)


@dataclass(frozen=True)
class NavEnvConfig:
    variant: str = "no_wall"
    image_shape: tuple[int, int, int] = (3, 16, 16)
    workspace_scale: float = 1.0
    max_path_length: int = 50
    wall_set_size: int = 15
    action_scale: float = 0.15

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        c, h, w = self.image_shape
        if c != 3 or h < 8 or w < 8:
            raise ValueError(f"image_shape must be (3, H>=8, W>=8), got {self.image_shape}")
        if not 0 < self.workspace_scale <= 1:
            raise ValueError("workspace_scale must be in (0, 1]")
        if self.max_path_length < 1 or self.action_scale <= 0:
            raise ValueError("max_path_length >= 1 and action_scale > 0 required")
        if not 1 <= self.wall_set_size <= len(wall_library()):
            raise ValueError(f"wall_set_size must be in 1..{len(wall_library())}")

    @property
    def n_pixels(self) -> int:
        return int(np.prod(self.image_shape))

    @property
    def bounds(self) -> tuple[float, float]:
        half = 0.5 * self.workspace_scale
        return 0.5 - half, 0.5 + half

    @property
    def margin(self) -> float:
        return 1.0 / self.image_shape[2]

    @property
    def has_walls(self) -> bool:
        return self.variant != "no_wall"


@dataclass
class NavState:
    position: np.ndarray
    point_color: np.ndarray = field(default_factory=lambda: np.array(RED))
    wall_id: int = -1  # index into the wall library, -1 for none
    active_walls: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))  # (k, 4) x0, y0, x1, y1


@dataclass
class NavBatch:
    positions: np.ndarray  # (n, 2)
    colors: np.ndarray  # (n, 3)
    wall_ids: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.positions)

    def state(self, i: int, config: NavEnvConfig) -> NavState:
        wid = int(self.wall_ids[i])
        return NavState(self.positions[i].copy(), self.colors[i].copy(), wid, active_walls(config, wid))


# -- wall library -----------------------------------------------------------


def generate_wall_library(seed: int = WALL_SEED, count: int = 15) -> list[list[list[float]]]:
    """1-3 axis-aligned segments per configuration, normalised workspace coords."""
    rng = np.random.default_rng(seed)
    library = []
    for _ in range(count):
        segs = []
        for _ in range(int(rng.integers(1, 4))):
            length = float(rng.uniform(0.3, 0.6))
            fixed = float(rng.uniform(0.2, 0.8))
            start = float(rng.uniform(0.15, 0.85 - length))
            if rng.random() < 0.5:
                seg = [fixed, start, fixed, start + length]  # vertical
            else:
                seg = [start, fixed, start + length, fixed]
            segs.append([round(v, 4) for v in seg])
        library.append(segs)
    return library


@lru_cache(maxsize=None)
def _library_tuple():
    text = resources.files("elbotune").joinpath("data/walls.json").read_text()
    return tuple(tuple(tuple(s) for s in cfg) for cfg in json.loads(text)["configs"])


def wall_library() -> list[list[list[float]]]:
    return [[list(s) for s in cfg] for cfg in _library_tuple()]


def active_walls(config: NavEnvConfig, wall_id: int) -> np.ndarray:
    """Segments of one library entry mapped into canvas coordinates."""
    if wall_id < 0:
        return np.zeros((0, 4))
    lo, _ = config.bounds
    return lo + config.workspace_scale * np.array(_library_tuple()[wall_id], dtype=np.float64)


@dataclass(frozen=True)
class _WallTables:
    rects: np.ndarray  # (n_cfg + 1, 3, 4) inflated exclusion rects; last row = no walls
    valid: np.ndarray  # (n_cfg + 1, 3)
    rasters: np.ndarray  # (n_cfg + 1, H, W) wall pixel masks


@lru_cache(maxsize=64)
def _tables(config: NavEnvConfig) -> _WallTables:
    lib = _library_tuple()
    n = len(lib)
    _, h, w = config.image_shape
    m = config.margin
    rects = np.zeros((n + 1, 3, 4))
    valid = np.zeros((n + 1, 3), dtype=bool)
    rasters = np.zeros((n + 1, h, w), dtype=bool)
    for i in range(n):
        segs = active_walls(config, i)
        for j, (x0, y0, x1, y1) in enumerate(segs):
            rects[i, j] = [min(x0, x1) - m, min(y0, y1) - m, max(x0, x1) + m, max(y0, y1) + m]
            valid[i, j] = True
            c0, c1 = sorted((_pix(x0, w), _pix(x1, w)))
            r0, r1 = sorted((_pix(y0, h), _pix(y1, h)))
            rasters[i, r0 : r1 + 1, c0 : c1 + 1] = True
    return _WallTables(rects, valid, rasters)


def _pix(v: float, size: int) -> int:
    return int(min(max(np.floor(v * size), 0), size - 1))


# -- dynamics ---------------------------------------------------------------


def _inside_open(pos: np.ndarray, rect: np.ndarray) -> np.ndarray:
    return (rect[..., 0] < pos[..., 0]) & (pos[..., 0] < rect[..., 2]) & (rect[..., 1] < pos[..., 1]) & (pos[..., 1] < rect[..., 3])


def _blocked(config: NavEnvConfig, positions: np.ndarray, wall_ids: np.ndarray) -> np.ndarray:
    tab = _tables(config)
    ids = np.where(wall_ids < 0, len(tab.rects) - 1, wall_ids)
    rects = tab.rects[ids]  # (n, 3, 4)
    inside = _inside_open(positions[:, None, :], rects) & tab.valid[ids]
    return inside.any(axis=1)


def _sample_context(config: NavEnvConfig, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    if config.has_walls:
        wall_ids = rng.integers(0, config.wall_set_size, size=n)
    else:
        wall_ids = np.full(n, -1)
    if config.variant == "multi_color":
        raw = rng.uniform(0.0, 1.0, size=(n, 3))
        # brightest channel pinned to 1 so the point never vanishes into the background
        colors = raw / np.maximum(raw.max(axis=1, keepdims=True), 1e-12)
    else:
        colors = np.tile(np.array(RED), (n, 1))
    return wall_ids, colors


def _sample_free_positions(config: NavEnvConfig, wall_ids: np.ndarray, rng) -> np.ndarray:
    lo, hi = config.bounds
    pos = rng.uniform(lo, hi, size=(len(wall_ids), 2))
    bad = _blocked(config, pos, wall_ids)
    while bad.any():
        pos[bad] = rng.uniform(lo, hi, size=(int(bad.sum()), 2))
        bad = _blocked(config, pos, wall_ids)
    return pos


def reset_batch(config: NavEnvConfig, n: int, rng) -> tuple[NavBatch, np.ndarray]:
    wall_ids, colors = _sample_context(config, n, rng)
    pos = _sample_free_positions(config, wall_ids, rng)
    batch = NavBatch(pos, colors, wall_ids)
    return batch, render_batch(batch, config)


def _move(config: NavEnvConfig, pos: np.ndarray, actions: np.ndarray, wall_ids: np.ndarray) -> np.ndarray:
    lo, hi = config.bounds
    a = np.clip(np.asarray(actions, dtype=np.float64).reshape(pos.shape), -config.action_scale, config.action_scale)
    target = np.clip(pos + a, lo, hi)
    if not config.has_walls or np.all(wall_ids < 0):
        return target
    d = target - pos
    tab = _tables(config)
    ids = np.where(wall_ids < 0, len(tab.rects) - 1, wall_ids)
    n = len(pos)
    t_hit = np.ones(n)
    face_axis = np.full(n, -1)
    face_val = np.zeros(n)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for j in range(tab.rects.shape[1]):
            rect = tab.rects[ids, j]
            valid = tab.valid[ids, j]
            tnear = np.empty((n, 2))
            tfar = np.empty((n, 2))
            for k in range(2):
                lo_k, hi_k = rect[:, k], rect[:, k + 2]
                moving = d[:, k] != 0
                t1 = (lo_k - pos[:, k]) / d[:, k]
                t2 = (hi_k - pos[:, k]) / d[:, k]
                inside = (lo_k < pos[:, k]) & (pos[:, k] < hi_k)
                tnear[:, k] = np.where(moving, np.minimum(t1, t2), np.where(inside, -np.inf, np.inf))
                tfar[:, k] = np.where(moving, np.maximum(t1, t2), np.where(inside, np.inf, -np.inf))
            t_enter = tnear.max(axis=1)
            t_exit = tfar.min(axis=1)
            hit = valid & (t_enter < t_exit) & (t_exit > 0) & (t_enter < t_hit)
            if not hit.any():
                continue
            axis = np.argmax(tnear, axis=1)
            toward_low = d[np.arange(n), axis] > 0
            val = np.where(toward_low, rect[np.arange(n), axis], rect[np.arange(n), axis + 2])
            t_hit = np.where(hit, np.maximum(t_enter, 0.0), t_hit)
            face_axis = np.where(hit, axis, face_axis)
            face_val = np.where(hit, val, face_val)
    new = pos + t_hit[:, None] * d
    for k in range(2):
        snap = face_axis == k
        new[snap, k] = face_val[snap]
    # a start point already inside an exclusion rect (t_enter <= 0) must not move
    stuck = (face_axis >= 0) & (t_hit <= 0)
    new[stuck] = pos[stuck]
    return np.clip(new, lo, hi)


def step_batch(batch: NavBatch, actions, config: NavEnvConfig) -> tuple[NavBatch, np.ndarray]:
    pos = _move(config, batch.positions, actions, batch.wall_ids)
    nxt = NavBatch(pos, batch.colors, batch.wall_ids)
    return nxt, render_batch(nxt, config)


def render_batch(batch: NavBatch, config: NavEnvConfig) -> np.ndarray:
    """Flattened channel-first images, shape ``(n, 3*H*W)``, values in [0, 1]."""
    _, h, w = config.image_shape
    n = len(batch)
    tab = _tables(config)
    img = np.full((n, 3, h, w), BACKGROUND)
    if config.has_walls:
        ids = np.where(batch.wall_ids < 0, len(tab.rasters) - 1, batch.wall_ids)
        mask = tab.rasters[ids]
        img[np.broadcast_to(mask[:, None], img.shape)] = WALL_GRAY
    c0 = np.clip(np.rint(batch.positions[:, 0] * w).astype(int) - 1, 0, w - 2)
    r0 = np.clip(np.rint(batch.positions[:, 1] * h).astype(int) - 1, 0, h - 2)
    idx = np.arange(n)
    for dr in (0, 1):
        for dc in (0, 1):
            img[idx, :, r0 + dr, c0 + dc] = batch.colors
    return img.reshape(n, -1)


def sample_eval_goal_batch(config: NavEnvConfig, rng, context: NavBatch | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Goal images at fresh reachable positions, sharing each context's walls and color."""
    if context is None:
        raise ValueError("batched goal sampling needs a context batch")
    pos = _sample_free_positions(config, context.wall_ids, rng)
    goal = NavBatch(pos, context.colors, context.wall_ids)
    return render_batch(goal, config), pos


# -- single-state API ---------------------------------------------------------


def _single(state: NavState) -> NavBatch:
    return NavBatch(np.asarray(state.position, dtype=np.float64)[None], np.asarray(state.point_color, dtype=np.float64)[None], np.array([state.wall_id]))


def reset(config: NavEnvConfig, rng) -> tuple[NavState, np.ndarray]:
    batch, images = reset_batch(config, 1, rng)
    return batch.state(0, config), images[0]


def step(state: NavState, action, config: NavEnvConfig) -> tuple[NavState, np.ndarray]:
    batch, images = step_batch(_single(state), np.asarray(action, dtype=np.float64)[None], config)
    return batch.state(0, config), images[0]


def render(state: NavState, config: NavEnvConfig) -> np.ndarray:
    return render_batch(_single(state), config)[0]


def sample_eval_goal(config: NavEnvConfig, rng, context: NavState | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One goal image and its position.

    Without ``context`` the wall set and color are drawn as in :func:`reset`.
    """
    if context is None:
        wall_ids, colors = _sample_context(config, 1, rng)
        ctx = NavBatch(np.zeros((1, 2)), colors, wall_ids)
    else:
        ctx = _single(context)
    images, pos = sample_eval_goal_batch(config, rng, ctx)
    return images[0], pos[0]


def image_distance(a, b) -> float | np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return np.linalg.norm(a - b, axis=-1)


def curriculum_advance(schedule, epoch: int) -> NavEnvConfig:
    """Config of the latest stage whose start epoch is <= ``epoch``."""
    if not schedule:
        raise ValueError("empty curriculum schedule")
    current = None
    for start, cfg in schedule:
        if start <= epoch:
            current = cfg
        else:
            break
    if current is None:
        raise ValueError("schedule must start at epoch 0")
    return current


def default_curriculum(base: NavEnvConfig | None = None, switches=(50, 100)) -> list[tuple[int, NavEnvConfig]]:
    base = base or NavEnvConfig()
    kw = {k: getattr(base, k) for k in ("image_shape", "workspace_scale", "max_path_length", "wall_set_size", "action_scale")}
    return [
        (0, NavEnvConfig("no_wall", **kw)),
        (switches[0], NavEnvConfig("multi_wall", **kw)),
        (switches[1], NavEnvConfig("multi_color", **kw)),
    ]


# -- golden fixtures -------------------------------------------------------------


def save_golden(path, image: np.ndarray, meta: dict) -> None:
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(image, dtype="<f8").tobytes())
    path.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def load_golden(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    image = np.frombuffer(path.read_bytes(), dtype="<f8").astype(np.float64)
    if image.size != int(np.prod(meta["shape"])):
        raise ValueError(f"{path}: size does not match sidecar shape {meta['shape']}")
    return image, meta
