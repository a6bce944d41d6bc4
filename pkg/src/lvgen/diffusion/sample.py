"""Ancestral sampling and mesh generation.

Each sample owns a PRNG stream keyed by (seed, index): results do not
depend on batch size or chunking, and vector i of a run of n is bit
identical to vector i of any longer run with the same seed.
"""

import numpy as np

from ..errors import ValidationError
from ..synth.preprocess import destandardize


def sample_latents(denoiser, schedule, stats, n, seed, chunk_size=256):
    """Draw n latents by reverse diffusion; exactly T net calls per chunk.

    The per-vector noise block is (T, width): row 0 seeds z_T, row T - t
    is the injection after step t. No noise enters at t = 0.
    """
    if n < 1:
        raise ValidationError("need n >= 1 samples")
    w = denoiser.config.width
    if stats.mean.shape[0] != w:
        raise ValidationError(
            f"stats dimension {stats.mean.shape[0]} does not match "
            f"denoiser width {w}")
    T = schedule.timesteps
    sqrt_a = np.sqrt(schedule.alphas)
    coef = schedule.betas / np.sqrt(1.0 - schedule.alpha_bars)
    sigma = np.sqrt(schedule.posterior_vars)

    out = np.empty((n, w))
    for c0 in range(0, n, chunk_size):
        m = min(chunk_size, n - c0)
        noise = np.empty((m, T, w))
        for j in range(m):
            stream = np.random.default_rng(
                np.random.SeedSequence(seed, spawn_key=(c0 + j,)))
            noise[j] = stream.standard_normal((T, w))
        z = noise[:, 0, :].copy()
        for t in range(T - 1, -1, -1):
            eps_hat = denoiser.forward(z, t)
            z = (z - coef[t] * eps_hat) / sqrt_a[t]
            if t > 0:
                z = z + sigma[t] * noise[:, T - t, :]
        out[c0:c0 + m] = stats.denormalize(z)
    return out


def generate_meshes(vae, coord_stats, vae_phase, denoiser, schedule,
                    latent_stats, ddpm_phase, n, seed, batch_size=64):
    """Sample latents, decode them, return mm vertices (n, V, 3).

    The two checkpoints must come from the same cardiac phase; mixing
    an ED decoder with an ES denoiser would silently produce anatomy
    from neither distribution.
    """
    if vae_phase != ddpm_phase:
        raise ValidationError(
            f"phase mismatch: VAE checkpoint is {vae_phase!r}, denoiser "
            f"checkpoint is {ddpm_phase!r}")
    if denoiser.config.width != vae.config.latent_dim:
        raise ValidationError(
            f"denoiser width {denoiser.config.width} does not match VAE "
            f"latent dimension {vae.config.latent_dim}")
    z = sample_latents(denoiser, schedule, latent_stats, n, seed)
    out = []
    for i in range(0, n, batch_size):
        out.append(vae.decode(z[i:i + batch_size]))
    return destandardize(np.concatenate(out, axis=0), coord_stats)
