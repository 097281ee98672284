"""Beta-VAE over flattened images with a Bernoulli pixel likelihood.

Loss per image is ``beta * KL(posterior || N(0, I)) - log p(x | z)`` with a
single reparameterised sample during training. All quantities are in nats
per image.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import AdamState, DenseNet, adam_step, backward_pre, forward, forward_cached, init_dense, load_params, save_params

PIXEL_EPS = 1e-6
LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0


@dataclass
class VaeConfig:
    latent_dim: int = 4
    beta: float = 1.0
    hidden: tuple[int, ...] = (128,)
    learning_rate: float = 1e-3
    batch_size: int = 64
    eval_mc_samples: int = 4

    def build(self, image_shape, rng) -> "VaeModel":
        return make_vae(image_shape, self.latent_dim, self.beta, self.hidden, rng)


@dataclass
class VaeModel:
    encoder: DenseNet  # image -> (mean, raw log-variance)
    decoder: DenseNet  # latent -> pixel logits (sigmoid output)
    beta: float
    latent_dim: int
    image_shape: tuple[int, ...]

    def __post_init__(self):
        if self.beta < 1:
            raise ValueError(f"beta must be >= 1, got {self.beta}")
        if self.encoder.n_out != 2 * self.latent_dim or self.decoder.n_in != self.latent_dim:
            raise ValueError("encoder/decoder sizes disagree with latent_dim")
        if self.encoder.n_in != self.decoder.n_out or self.encoder.n_in != int(np.prod(self.image_shape)):
            raise ValueError("encoder input, decoder output and image_shape must agree")

    @property
    def n_pixels(self) -> int:
        return self.encoder.n_in

    def copy(self) -> "VaeModel":
        return VaeModel(self.encoder.copy(), self.decoder.copy(), self.beta, self.latent_dim, tuple(self.image_shape))


def make_vae(image_shape, latent_dim=4, beta=1.0, hidden=(128,), rng=None) -> VaeModel:
    rng = np.random.default_rng(0) if rng is None else rng
    d = int(np.prod(image_shape))
    hidden = list(hidden)
    enc = init_dense([d, *hidden, 2 * latent_dim], rng, "relu", "identity")
    dec = init_dense([latent_dim, *hidden[::-1], d], rng, "relu", "sigmoid")
    return VaeModel(enc, dec, float(beta), int(latent_dim), tuple(int(s) for s in image_shape))


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    log_variance: np.ndarray


@dataclass(frozen=True)
class ElboReport:
    neg_beta_elbo: float
    kl_term: float
    recon_nll: float
    n_samples: int


@dataclass
class VaeOptimizer:
    encoder: AdamState
    decoder: AdamState

    @classmethod
    def for_model(cls, model: VaeModel, learning_rate: float = 1e-3) -> "VaeOptimizer":
        return cls(
            AdamState.for_net(model.encoder, learning_rate),
            AdamState.for_net(model.decoder, learning_rate),
        )


def _check_images(model: VaeModel, images) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.n_pixels:
        raise ValueError(f"images of shape {x.shape} do not match {model.n_pixels} pixels")
    if x.shape[0] == 0:
        raise ValueError("empty image batch")
    return x


def encode(model: VaeModel, image) -> GaussianPosterior:
    """Posterior for one image (1-D) or a batch (2-D)."""
    x = np.asarray(image, dtype=np.float64)
    single = x.ndim == 1
    out = forward(model.encoder, _check_images(model, x))
    dz = model.latent_dim
    mean, lv = out[:, :dz], np.clip(out[:, dz:], LOGVAR_MIN, LOGVAR_MAX)
    if single:
        return GaussianPosterior(mean[0], lv[0])
    return GaussianPosterior(mean, lv)


def encode_mean(model: VaeModel, images) -> np.ndarray:
    out = forward(model.encoder, images)
    return out[..., : model.latent_dim]


def decode(model: VaeModel, z) -> np.ndarray:
    """Bernoulli means clamped to ``[eps, 1 - eps]``."""
    return np.clip(forward(model.decoder, z), PIXEL_EPS, 1.0 - PIXEL_EPS)


def reparameterize(posterior: GaussianPosterior, noise) -> np.ndarray:
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape[-1] != np.shape(posterior.mean)[-1]:
        raise ValueError("noise length must equal latent dimension")
    return posterior.mean + np.exp(0.5 * posterior.log_variance) * noise


def kl_to_unit_gaussian(posterior: GaussianPosterior) -> np.ndarray | float:
    """KL divergence to ``N(0, I)`` summed over latent dimensions (per row for batches)."""
    mu, lv = np.asarray(posterior.mean), np.asarray(posterior.log_variance)
    kl = 0.5 * np.sum(mu * mu + np.exp(lv) - 1.0 - lv, axis=-1)
    # exp(lv) - 1 - lv >= 0 analytically; rounding can dip below zero by ~1e-17
    return np.maximum(kl, 0.0)


def recon_log_prob(image, decoder_means) -> np.ndarray | float:
    x = np.asarray(image, dtype=np.float64)
    m = np.asarray(decoder_means, dtype=np.float64)
    if x.shape != m.shape:
        raise ValueError(f"image shape {x.shape} != decoder output shape {m.shape}")
    return np.sum(x * np.log(m) + (1.0 - x) * np.log1p(-m), axis=-1)


def _loss_parts(model: VaeModel, x: np.ndarray, noise: np.ndarray):
    dz = model.latent_dim
    enc_cache = forward_cached(model.encoder, x)
    raw = enc_cache.out
    mu = raw[:, :dz]
    raw_lv = raw[:, dz:]
    lv = np.clip(raw_lv, LOGVAR_MIN, LOGVAR_MAX)
    std = np.exp(0.5 * lv)
    z = mu + std * noise
    dec_cache = forward_cached(model.decoder, z)
    m_raw = dec_cache.out
    m = np.clip(m_raw, PIXEL_EPS, 1.0 - PIXEL_EPS)
    recon_lp = np.sum(x * np.log(m) + (1.0 - x) * np.log1p(-m), axis=1)
    kl = 0.5 * np.sum(mu * mu + np.exp(lv) - 1.0 - lv, axis=1)
    return enc_cache, dec_cache, mu, raw_lv, lv, std, m_raw, m, recon_lp, kl


def beta_elbo_loss_and_grads(model: VaeModel, image_batch, rng=None, noise=None):
    """Batch-mean beta-ELBO loss and its gradients.

    Pass ``noise`` (shape ``(batch, latent_dim)``) to freeze the
    reparameterisation draw; otherwise it is drawn from ``rng``.
    Returns ``(ElboReport, (encoder_grads, decoder_grads))``.
    """
    x = _check_images(model, image_batch)
    n = x.shape[0]
    if noise is None:
        noise = rng.standard_normal((n, model.latent_dim))
    noise = np.asarray(noise, dtype=np.float64).reshape(n, model.latent_dim)
    enc_cache, dec_cache, mu, raw_lv, lv, std, m_raw, m, recon_lp, kl = _loss_parts(model, x, noise)

    beta = model.beta
    kl_mean = float(np.mean(kl))
    nll_mean = float(-np.mean(recon_lp))
    report = ElboReport(beta * kl_mean + nll_mean, kl_mean, nll_mean, n)

    # d(-log p)/d logit = m - x wherever the clamp is inactive
    inside = (m_raw > PIXEL_EPS) & (m_raw < 1.0 - PIXEL_EPS)
    g_logit = (m - x) * inside / n
    dec_grads, g_z = backward_pre(model.decoder, dec_cache, g_logit)

    g_mu = beta * mu / n + g_z
    g_lv = beta * 0.5 * (np.exp(lv) - 1.0) / n + g_z * 0.5 * std * noise
    g_lv = g_lv * ((raw_lv > LOGVAR_MIN) & (raw_lv < LOGVAR_MAX))
    enc_grads, _ = backward_pre(model.encoder, enc_cache, np.concatenate([g_mu, g_lv], axis=1))
    return report, (enc_grads, dec_grads)


def fit(model: VaeModel, dataset, steps: int, batch_size: int, optimizer: VaeOptimizer, rng) -> list[ElboReport]:
    """Minibatch Adam on the beta-ELBO; updates ``model`` in place."""
    data = np.asarray(dataset, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("fit needs a non-empty 2-D dataset")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    history = []
    for _ in range(steps):
        idx = rng.integers(0, data.shape[0], size=min(batch_size, data.shape[0]))
        report, (g_enc, g_dec) = beta_elbo_loss_and_grads(model, data[idx], rng)
        adam_step(model.encoder, g_enc, optimizer.encoder)
        adam_step(model.decoder, g_dec, optimizer.decoder)
        history.append(report)
    return history


def evaluate_elbo(model: VaeModel, eval_batch, mc_samples: int = 4, rng=None, noise=None) -> ElboReport:
    """Held-out report; the reconstruction term is averaged over ``mc_samples`` draws.

    ``noise`` may be given with shape ``(mc_samples, batch, latent_dim)``.
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    x = _check_images(model, eval_batch)
    n = x.shape[0]
    if noise is None:
        noise = rng.standard_normal((mc_samples, n, model.latent_dim))
    noise = np.asarray(noise, dtype=np.float64).reshape(mc_samples, n, model.latent_dim)
    out = forward(model.encoder, x)
    mu = out[:, : model.latent_dim]
    lv = np.clip(out[:, model.latent_dim :], LOGVAR_MIN, LOGVAR_MAX)
    std = np.exp(0.5 * lv)
    kl = 0.5 * np.sum(mu * mu + np.exp(lv) - 1.0 - lv, axis=1)
    z = (mu[None] + std[None] * noise).reshape(mc_samples * n, model.latent_dim)
    m = np.clip(forward(model.decoder, z), PIXEL_EPS, 1.0 - PIXEL_EPS).reshape(mc_samples, n, -1)
    recon_lp = np.sum(x[None] * np.log(m) + (1.0 - x[None]) * np.log1p(-m), axis=2).mean(axis=0)
    kl_mean = float(np.mean(kl))
    nll_mean = float(-np.mean(recon_lp))
    return ElboReport(model.beta * kl_mean + nll_mean, kl_mean, nll_mean, n)


def save_vae(directory, model: VaeModel) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_params(directory / "encoder.nnc", model.encoder)
    save_params(directory / "decoder.nnc", model.decoder)
    meta = {"latent_dim": model.latent_dim, "beta": model.beta, "image_shape": list(model.image_shape)}
    (directory / "vae.json").write_text(json.dumps(meta) + "\n")


def load_vae(directory) -> VaeModel:
    directory = Path(directory)
    meta = json.loads((directory / "vae.json").read_text())
    enc = load_params(directory / "encoder.nnc", "relu", "identity")
    dec = load_params(directory / "decoder.nnc", "relu", "sigmoid")
    return VaeModel(enc, dec, float(meta["beta"]), int(meta["latent_dim"]), tuple(meta["image_shape"]))
