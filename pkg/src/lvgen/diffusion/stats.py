"""Per-dimension affine normalization of encoded latents."""

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError


@dataclass
class LatentStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.ndim != 1 or self.mean.shape != self.std.shape:
            raise ValidationError("mean and std must be matching 1-d arrays")
        if not (np.isfinite(self.mean).all() and np.isfinite(self.std).all()):
            raise ValidationError("latent statistics must be finite")
        if (self.std < 1e-9).any():
            raise ValidationError(
                "latent standard deviation below 1e-9: degenerate dimension")

    @classmethod
    def from_latents(cls, latents):
        latents = np.asarray(latents, dtype=np.float64)
        if latents.ndim != 2 or latents.shape[0] < 2:
            raise ValidationError("need a (n >= 2, dim) latent array")
        if not np.isfinite(latents).all():
            raise ValidationError("latents contain non-finite values")
        return cls(latents.mean(axis=0), latents.std(axis=0))

    def normalize(self, z):
        return (np.asarray(z, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, z):
        return np.asarray(z, dtype=np.float64) * self.std + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"]), np.asarray(d["std"]))
