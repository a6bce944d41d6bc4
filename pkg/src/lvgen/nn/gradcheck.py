"""Finite-difference verification of hand-derived gradients.

Central differences with a small step probe every component of every
tensor. Comparison is per-tensor: infinity norm of the difference over
the sum of infinity norms, which stays meaningful when individual
components are near zero. The checker reports, it never throws; tests
and the CLI decide what threshold to enforce.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_tensor: str
    n_components: int
    n_evaluations: int
    per_tensor: dict = field(default_factory=dict)

    def passed(self, tol=1e-6):
        return self.max_rel_error < tol

    def summary(self):
        lines = [f"{name}: rel_err={err:.3e}" for name, err in
                 sorted(self.per_tensor.items())]
        lines.append(f"max {self.max_rel_error:.3e} at {self.worst_tensor} "
                     f"({self.n_components} components, "
                     f"{self.n_evaluations} evaluations)")
        return "\n".join(lines)


def finite_difference_gradients(loss_fn, tensors, h=1e-5):
    """d loss / d tensor by central differences, perturbing in place.

    tensors maps names to the live arrays loss_fn reads. Each entry is
    restored exactly after probing.
    """
    out = {}
    for name, arr in tensors.items():
        g = np.zeros_like(arr)
        flat, gflat = arr.ravel(), g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_fn()
            flat[i] = orig - h
            lm = loss_fn()
            flat[i] = orig
            gflat[i] = (lp - lm) / (2.0 * h)
        out[name] = g
    return out


def compare_gradients(analytic, numeric):
    per_tensor = {}
    n_components = 0
    for name in sorted(analytic):
        a, f = analytic[name], numeric[name]
        n_components += a.size
        scale = np.abs(a).max() + np.abs(f).max()
        diff = np.abs(a - f).max()
        per_tensor[name] = diff / scale if scale > 0 else diff
    worst = max(per_tensor, key=per_tensor.get)
    return GradCheckReport(
        max_rel_error=per_tensor[worst],
        worst_tensor=worst,
        n_components=n_components,
        n_evaluations=2 * n_components,
        per_tensor=per_tensor,
    )


def check_model(model, x, h=1e-5, seed=0):
    """Check a layer or stack against a random linear readout loss.

    loss = sum(forward(x) * R) for fixed R, so dloss/dy = R exercises the
    whole Jacobian. The input gradient is checked alongside the params.
    """
    x = np.array(x, dtype=np.float64)
    y0 = model.forward(x)
    R = np.random.default_rng(seed).standard_normal(y0.shape)

    model.zero_grads()
    model.forward(x)
    gx = model.backward(R)
    analytic = {k: v.copy() for k, v in model.grads.items()}
    analytic["input"] = np.asarray(gx, dtype=np.float64)

    def loss_fn():
        return float(np.sum(model.forward(x) * R))

    tensors = dict(model.params)
    tensors["input"] = x
    numeric = finite_difference_gradients(loss_fn, tensors, h=h)
    return compare_gradients(analytic, numeric)
