"""Diversity-controlled glyph datasets, empirical entropy and the ELBO-vs-diversity experiment.

The experiment trains one VAE per seed through a schedule of class sets.
Datasets keep a constant size: classes outside the active set are replaced
by blank images, so only the pixel diversity changes between stages.
"""

from __future__ import annotations

import csv
import gzip
import math
import struct
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .vae import ElboReport, VaeConfig, VaeModel, VaeOptimizer, encode, evaluate_elbo, fit, kl_to_unit_gaussian

GLYPH_SIZE = 16
N_GLYPHS = 16
EXPERIMENT_COLUMNS = ["stage", "class_count", "seed", "neg_beta_elbo", "kl_term", "recon_nll"]


def empirical_entropy(items) -> float:
    """Entropy in nats of the empirical distribution over ``items``.

    Items must be hashable; numpy arrays are compared by their bytes.
    """
    keys = [it.tobytes() if isinstance(it, np.ndarray) else it for it in items]
    if not keys:
        raise ValueError("empirical entropy of an empty multiset")
    n = len(keys)
    h = 0.0
    for c in Counter(keys).values():
        p = c / n
        h -= p * math.log(p)
    return h


def _glyph(idx: int) -> np.ndarray:
    g = np.zeros((GLYPH_SIZE, GLYPH_SIZE))
    r = np.arange(GLYPH_SIZE)
    if idx == 0:  # horizontal bar
        g[7:9, 2:14] = 1
    elif idx == 1:  # vertical bar
        g[2:14, 7:9] = 1
    elif idx == 2:  # plus
        g[7:9, 2:14] = 1
        g[2:14, 7:9] = 1
    elif idx == 3:  # diagonal cross
        g[r[2:14], r[2:14]] = 1
        g[r[2:14], 15 - r[2:14]] = 1
    elif idx in (4, 5, 6, 7):  # corners
        rows = slice(2, 4) if idx in (4, 5) else slice(12, 14)
        cols = slice(2, 4) if idx in (4, 6) else slice(12, 14)
        g[rows, 2:14] = 1
        g[2:14, cols] = 1
    elif idx == 8:  # centre block
        g[5:11, 5:11] = 1
    elif idx == 9:  # hollow frame
        g[2:14, 2:14] = 1
        g[4:12, 4:12] = 0
    elif idx == 10:  # two horizontal bars
        g[3:5, 2:14] = 1
        g[11:13, 2:14] = 1
    elif idx == 11:  # two vertical bars
        g[2:14, 3:5] = 1
        g[2:14, 11:13] = 1
    elif idx == 12:  # main diagonal, thick
        g[r[1:15], r[1:15]] = 1
        g[r[1:14], r[2:15]] = 1
    elif idx == 13:  # anti-diagonal, thick
        g[r[1:15], 15 - r[1:15]] = 1
        g[r[1:14], 14 - r[1:14]] = 1
    elif idx == 14:  # checker of two blocks
        g[2:7, 2:7] = 1
        g[9:14, 9:14] = 1
    elif idx == 15:  # T
        g[2:4, 2:14] = 1
        g[2:14, 7:9] = 1
    else:
        raise ValueError(f"glyph index {idx} outside 0..{N_GLYPHS - 1}")
    return g.ravel()


def glyph_prototypes() -> np.ndarray:
    """The 16 procedural 16x16 binary glyphs, one flattened row each."""
    return np.stack([_glyph(i) for i in range(N_GLYPHS)])


@dataclass
class GlyphDataset:
    images: np.ndarray  # (n, 256)
    labels: np.ndarray  # class index, -1 for blank padding
    class_count: int
    canvas: tuple[int, int, int] = (1, GLYPH_SIZE, GLYPH_SIZE)

    def __len__(self) -> int:
        return len(self.images)


def make_glyph_dataset(class_set, per_class: int, noise_prob: float = 0.0, seed: int = 0) -> GlyphDataset:
    classes = sorted(set(int(c) for c in class_set))
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if any(c < 0 or c >= N_GLYPHS for c in classes):
        raise ValueError(f"class set {classes} outside 0..{N_GLYPHS - 1}")
    protos = glyph_prototypes()
    labels = np.full(N_GLYPHS * per_class, -1)
    for i, c in enumerate(classes):
        labels[i * per_class : (i + 1) * per_class] = c
    images = np.zeros((len(labels), protos.shape[1]))
    filled = labels >= 0
    images[filled] = protos[labels[filled]]
    if noise_prob > 0:
        rng = np.random.default_rng(seed)
        flips = rng.random(images.shape) < noise_prob
        images = np.where(flips, 1.0 - images, images)
    return GlyphDataset(images, labels, len(classes))


@dataclass
class DiversitySchedule:
    stages: list[tuple[int, frozenset]]

    def __post_init__(self):
        starts = [s for s, _ in self.stages]
        if not starts or starts[0] != 0:
            raise ValueError("first stage must start at epoch 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("stage start epochs must be strictly increasing")

    @classmethod
    def from_class_sets(cls, class_sets, epochs_per_stage: int) -> "DiversitySchedule":
        return cls([(i * epochs_per_stage, frozenset(s)) for i, s in enumerate(class_sets)])

    def stage_lengths(self, last_stage_epochs: int) -> list[int]:
        starts = [s for s, _ in self.stages]
        return [b - a for a, b in zip(starts, starts[1:])] + [last_stage_epochs]


def add_then_remove_schedule(max_class: int = 9, epochs_per_stage: int = 20, first: int = 2) -> DiversitySchedule:
    """{0,1} -> {0,1,2} -> ... -> {0..max_class} -> ... -> {0,1}."""
    up = [set(range(k)) for k in range(first, max_class + 2)]
    down = up[-2::-1]
    return DiversitySchedule.from_class_sets(up + down, epochs_per_stage)


def converged(values) -> float:
    """Mean over the final 10% of a curve (at least one point)."""
    values = list(values)
    k = max(1, int(round(0.1 * len(values))))
    return float(np.mean(values[-k:]))


def _converged_report(trace: list[ElboReport]) -> ElboReport:
    return ElboReport(
        converged(r.neg_beta_elbo for r in trace),
        converged(r.kl_term for r in trace),
        converged(r.recon_nll for r in trace),
        trace[-1].n_samples,
    )


def train_stages(
    model: VaeModel,
    datasets,
    stage_epochs,
    vae_config: VaeConfig,
    steps_per_epoch: int,
    rng,
) -> list[list[ElboReport]]:
    """Train one model through successive datasets, evaluating after each epoch."""
    opt = VaeOptimizer.for_model(model, vae_config.learning_rate)
    traces = []
    for data, epochs in zip(datasets, stage_epochs):
        trace = []
        for _ in range(epochs):
            fit(model, data, steps_per_epoch, vae_config.batch_size, opt, rng)
            trace.append(evaluate_elbo(model, data, vae_config.eval_mc_samples, rng))
        traces.append(trace)
    return traces


def _run_seed(args):
    schedule, vae_config, epochs_per_stage, seed, per_class, noise_prob, steps_per_epoch = args
    rng = np.random.default_rng(seed)
    model = vae_config.build((1, GLYPH_SIZE, GLYPH_SIZE), rng)
    datasets = [make_glyph_dataset(cs, per_class, noise_prob, seed * 1000 + i).images for i, (_, cs) in enumerate(schedule.stages)]
    traces = train_stages(model, datasets, schedule.stage_lengths(epochs_per_stage), vae_config, steps_per_epoch, rng)
    rows = []
    for i, ((_, cs), trace) in enumerate(zip(schedule.stages, traces)):
        rep = _converged_report(trace)
        rows.append(
            {
                "stage": i,
                "class_count": len(cs),
                "seed": seed,
                "neg_beta_elbo": rep.neg_beta_elbo,
                "kl_term": rep.kl_term,
                "recon_nll": rep.recon_nll,
            }
        )
    return rows


def run_diversity_experiment(
    schedule: DiversitySchedule,
    vae_config: VaeConfig,
    epochs_per_stage: int,
    seeds,
    per_class: int = 16,
    noise_prob: float = 0.0,
    steps_per_epoch: int = 8,
    workers: int = 1,
) -> list[dict]:
    """Converged ELBO terms per (stage, seed).

    Each seed owns one model trained straight through the schedule, so a stage
    continues from where the previous one stopped. Rows are ordered by seed
    then stage regardless of ``workers``.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    jobs = [(schedule, vae_config, epochs_per_stage, s, per_class, noise_prob, steps_per_epoch) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_seed, jobs))
    else:
        results = [_run_seed(j) for j in jobs]
    return [row for rows in results for row in rows]


def stage_means(rows) -> list[dict]:
    """Seed-mean (and std) of each ELBO column per stage."""
    out = []
    for stage in sorted({r["stage"] for r in rows}):
        sel = [r for r in rows if r["stage"] == stage]
        entry = {"stage": stage, "class_count": sel[0]["class_count"]}
        for col in ("neg_beta_elbo", "kl_term", "recon_nll"):
            vals = np.array([r[col] for r in sel])
            entry[col] = float(vals.mean())
            entry[col + "_std"] = float(vals.std())
        out.append(entry)
    return out


def write_experiment_csv(rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=EXPERIMENT_COLUMNS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})


def mi_upper_bound(model: VaeModel, dataset) -> float:
    """Mean posterior KL to the unit Gaussian: an upper bound on I(X; Z)."""
    x = np.asarray(dataset, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("empty dataset")
    return float(np.mean(kl_to_unit_gaussian(encode(model, x))))


def read_idx_images(path) -> np.ndarray:
    """Read an IDX image file (magic 0x00000803) into ``(n, rows*cols)`` floats in [0, 1]."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    magic, n, rows, cols = struct.unpack_from(">IIII", raw, 0)
    if magic != 0x00000803:
        raise ValueError(f"{path}: bad IDX image magic {magic:#010x}")
    data = np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols, offset=16)
    return data.reshape(n, rows * cols).astype(np.float64) / 255.0


def read_idx_labels(path) -> np.ndarray:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    magic, n = struct.unpack_from(">II", raw, 0)
    if magic != 0x00000801:
        raise ValueError(f"{path}: bad IDX label magic {magic:#010x}")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=8).astype(np.int64)


def make_idx_dataset(images, labels, class_set, per_class: int, n_classes: int = 10, seed: int = 0) -> GlyphDataset:
    """Same padding rule as :func:`make_glyph_dataset`, drawing real images per class."""
    rng = np.random.default_rng(seed)
    images = np.asarray(images)
    labels = np.asarray(labels)
    out = np.zeros((n_classes * per_class, images.shape[1]))
    out_labels = np.full(n_classes * per_class, -1)
    for i, c in enumerate(sorted(set(class_set))):
        pool = np.flatnonzero(labels == c)
        pick = rng.choice(pool, size=per_class, replace=len(pool) < per_class)
        out[i * per_class : (i + 1) * per_class] = images[pick]
        out_labels[i * per_class : (i + 1) * per_class] = c
    side = int(round(math.sqrt(images.shape[1])))
    return GlyphDataset(out, out_labels, len(set(class_set)), (1, side, side))
