"""Sinusoidal timestep embedding for the denoiser."""

import numpy as np

from ..errors import ValidationError


def sinusoidal_embedding(t, dim):
    """Map integer timesteps to [*, dim] sin/cos features.

    Frequencies follow the transformer convention 10000^(-2i/dim); the
    first half of the vector is the sines, the second half the cosines,
    so t = 0 embeds to dim/2 zeros followed by dim/2 ones.
    """
    if dim < 2 or dim % 2 != 0:
        raise ValidationError("embedding dim must be a positive even number")
    t = np.asarray(t, dtype=np.float64)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    half = dim // 2
    freqs = np.power(10000.0, -2.0 * np.arange(half) / dim)
    angles = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
    return emb[0] if scalar else emb
