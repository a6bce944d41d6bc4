"""Adam optimizer and learning-rate schedules."""

import numpy as np

from ..errors import NumericalError, ValidationError


class Adam:
    """Adam with bias correction, updating parameter arrays in place.

    The params dict maps names to the live ndarrays owned by the layers,
    so a step is visible to the model immediately. Moment buffers are
    keyed the same way.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValidationError("Adam betas must lie in [0, 1)")
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.params.items()}

    def step(self, grads, lr=None):
        if lr is None:
            lr = self.lr
        if set(grads) != set(self.params):
            raise ValidationError("gradient keys do not match parameters")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = grads[k]
            if g.shape != p.shape:
                raise ValidationError(f"gradient shape mismatch for {k}")
            if not np.isfinite(g).all():
                raise NumericalError(f"non-finite gradient for {k}")
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            denom = np.sqrt(v / c2)
            denom += self.eps
            p -= (lr / c1) * m / denom


def constant_lr(lr):
    def schedule(step):
        return lr
    return schedule


def linear_decay_lr(lr0, total_steps):
    """Linearly anneal from lr0 to 0 over total_steps (clamped at 0)."""
    if total_steps < 1:
        raise ValidationError("total_steps must be >= 1")

    def schedule(step):
        frac = min(max(step, 0), total_steps) / total_steps
        return lr0 * (1.0 - frac)
    return schedule
