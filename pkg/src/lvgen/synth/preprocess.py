"""Dataset splitting and coordinate standardization."""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ValidationError


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def split_sizes(n):
    """70/5/25 partition sizes: round(0.70 n), round(0.05 n), remainder."""
    train = _round_half_up(0.70 * n)
    val = _round_half_up(0.05 * n)
    test = n - train - val
    return train, val, test


def split_indices(n, seed):
    """Disjoint shuffled (train, val, test) index arrays covering range(n)."""
    if n < 20:
        raise ConfigError(f"dataset too small to split: {n} < 20")
    tr, va, _ = split_sizes(n)
    perm = np.random.default_rng(seed).permutation(n)
    return perm[:tr], perm[tr : tr + va], perm[tr + va :]


def split_dataset(vertices, seed):
    """Split an (n, V, 3) vertex stack into (train, val, test) stacks plus
    the index arrays used, so manifests can record the assignment."""
    idx = split_indices(len(vertices), seed)
    return tuple(vertices[i] for i in idx), idx


@dataclass
class StandardizationStats:
    """Per-axis (default) or per-vertex affine normalization parameters.

    Axis mode keeps 3+3 numbers regardless of resolution; vertex mode
    stores (V, 3) arrays for comparison experiments.
    """

    mean: np.ndarray
    std: np.ndarray
    mode: str = "axis"

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mode not in ("axis", "vertex"):
            raise ConfigError(f"unknown standardization mode {self.mode!r}")
        if self.mode == "axis" and self.mean.shape != (3,):
            raise ConfigError("axis-mode stats need 3-vectors")
        if (self.std < 1e-9).any():
            raise ValidationError(
                "standard deviation below 1e-9 mm: degenerate axis")

    def to_dict(self):
        return {"mode": self.mode, "mean": self.mean.tolist(),
                "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(mean=np.asarray(d["mean"]), std=np.asarray(d["std"]),
                   mode=d.get("mode", "axis"))


def compute_standardization(train_vertices, mode="axis") -> StandardizationStats:
    """Stats over the training split only: (n, V, 3) stack in, stats out."""
    arr = np.asarray(train_vertices, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"expected (n, V, 3) stack, got {arr.shape}")
    if mode == "axis":
        mean = arr.reshape(-1, 3).mean(axis=0)
        std = arr.reshape(-1, 3).std(axis=0)
    elif mode == "vertex":
        mean = arr.mean(axis=0)
        std = arr.std(axis=0)
    else:
        raise ConfigError(f"unknown standardization mode {mode!r}")
    return StandardizationStats(mean=mean, std=std, mode=mode)


def standardize(vertices, stats: StandardizationStats):
    """(x - mean) / std; accepts (V, 3) or (n, V, 3)."""
    return (np.asarray(vertices, dtype=np.float64) - stats.mean) / stats.std


def destandardize(standardized, stats: StandardizationStats):
    """Exact inverse of standardize."""
    return np.asarray(standardized, dtype=np.float64) * stats.std + stats.mean
