"""Layers with hand-derived forward/backward passes.

No autodiff: every backward is written out against the forward's algebra
and verified by central finite differences (see gradcheck). All math in
float64. Parameters and their gradients live in per-layer dicts with
matching keys and shapes; backward accumulates into the gradient arrays
so batches can sum before an optimizer step.
"""

import numpy as np
from scipy import sparse, special

from ..errors import NumericalError, ValidationError


def _ensure_finite(name, arr):
    if not np.isfinite(arr).all():
        raise NumericalError(f"non-finite values out of {name}")
    return arr


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base: params/grads dicts plus a one-shot forward cache.

    backward may only be called once per forward; the cache is consumed.
    """

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def zero_grads(self):
        for k in self.grads:
            self.grads[k][...] = 0.0

    def _take_cache(self):
        if self._cache is None:
            raise ValidationError(
                f"{type(self).__name__}.backward called without a matching forward")
        cache, self._cache = self._cache, None
        return cache

    def forward(self, x):
        raise NotImplementedError

    def backward(self, gy):
        raise NotImplementedError


class Dense(Layer):
    """y = x W + b for x of shape [batch, in]."""

    def __init__(self, in_dim, out_dim, rng):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.params = {
            "W": glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim),
            "b": np.zeros(out_dim),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValidationError(
                f"dense expects [batch, {self.in_dim}], got {x.shape}")
        self._cache = x
        y = x @ self.params["W"]
        y += self.params["b"]
        return _ensure_finite("dense", y)

    def backward(self, gy):
        x = self._take_cache()
        gy = np.asarray(gy, dtype=np.float64)
        if gy.shape != (x.shape[0], self.out_dim):
            raise ValidationError(f"gradient shape {gy.shape} mismatch")
        self.grads["W"] += x.T @ gy
        self.grads["b"] += gy.sum(axis=0)
        return gy @ self.params["W"].T


def sigmoid(x):
    # numerically stable logistic from scipy (handles large |x|)
    return special.expit(x)


class Swish1(Layer):
    """y = x * sigmoid(x), elementwise over any shape."""

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        s = sigmoid(x)
        self._cache = (x, s)
        return x * s

    def backward(self, gy):
        # d/dx[x s(x)] = s (1 + x (1 - s)), built in place
        x, s = self._take_cache()
        d = 1.0 - s
        d *= x
        d += 1.0
        d *= s
        return gy * d


def _to_vcols(x):
    """[V, C] or [B, V, C] -> ([V, B*C] view-friendly array, batch or None)."""
    if x.ndim == 2:
        return x, None
    b, v, c = x.shape
    return np.ascontiguousarray(x.transpose(1, 0, 2)).reshape(v, b * c), b


def _from_vcols(z, batch, channels):
    if batch is None:
        return z
    v = z.shape[0]
    return np.ascontiguousarray(
        z.reshape(v, batch, channels).transpose(1, 0, 2))


class ChebConv(Layer):
    """Chebyshev spectral graph convolution of order K.

    y = sum_k T_k(L) x W_k + b with the usual three-term recurrence on the
    scaled Laplacian L (symmetric, spectrum in [-1, 1]). x is [V, C_in] or
    batched [B, V, C_in]. The K weight products collapse into a single
    GEMM on the stacked [.., K*C_in] basis; backward runs the adjoint
    recurrence, again three-term, so cost matches the forward.
    """

    def __init__(self, in_ch, out_ch, K, scaled_laplacian, rng):
        super().__init__()
        if K < 1:
            raise ValidationError("Chebyshev order K must be >= 1")
        L = scaled_laplacian.tocsr()
        if L.shape[0] != L.shape[1]:
            raise ValidationError("Laplacian must be square")
        self.L = L
        self.K = K
        self.in_ch, self.out_ch = in_ch, out_ch
        self.params = {
            "W": glorot_uniform(rng, (K, in_ch, out_ch), K * in_ch, out_ch),
            "b": np.zeros(out_ch),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def _check_shape(self, x):
        V = self.L.shape[0]
        ok = (x.ndim == 2 and x.shape == (V, self.in_ch)) or \
             (x.ndim == 3 and x.shape[1:] == (V, self.in_ch))
        if not ok:
            raise ValidationError(
                f"chebconv expects [*, {V}, {self.in_ch}], got {x.shape}")

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        self._check_shape(x)
        V, C = self.L.shape[0], self.in_ch
        z, batch = _to_vcols(x)
        n = 1 if batch is None else batch
        T = [z]
        if self.K > 1:
            T.append(self.L @ z)
        for _ in range(2, self.K):
            T.append(2.0 * (self.L @ T[-1]) - T[-2])
        # [V*n, K*C] with k-major feature blocks, matching W reshaped
        # row-major to [K*C, out]; written in place to avoid a second copy
        Tcat = np.empty((V, n, self.K, C))
        for k, t in enumerate(T):
            Tcat[:, :, k, :] = t.reshape(V, n, C)
        Tcat = Tcat.reshape(V * n, self.K * C)
        y = Tcat @ self.params["W"].reshape(self.K * C, self.out_ch)
        y += self.params["b"]
        y = y.reshape(V, n, self.out_ch)
        self._cache = (Tcat, batch)
        out = y[:, 0, :] if batch is None else \
            np.ascontiguousarray(y.transpose(1, 0, 2))
        return _ensure_finite("chebconv", out)

    def backward(self, gy):
        Tcat, batch = self._take_cache()
        V, C, K = self.L.shape[0], self.in_ch, self.K
        n = 1 if batch is None else batch
        gy = np.asarray(gy, dtype=np.float64)
        g = gy.reshape(V, n, self.out_ch) if batch is None else \
            np.ascontiguousarray(gy.transpose(1, 0, 2))
        g = g.reshape(V * n, self.out_ch)
        self.grads["W"] += (Tcat.T @ g).reshape(K, C, self.out_ch)
        self.grads["b"] += g.sum(axis=0)
        dTcat = (g @ self.params["W"].reshape(K * C, self.out_ch).T)
        dTcat = np.ascontiguousarray(
            dTcat.reshape(V, n, K, C).transpose(2, 0, 1, 3))
        dT = [dTcat[k].reshape(V, n * C) for k in range(K)]
        # adjoint of the recurrence: dT_k += 2 L dT_{k+1} - dT_{k+2}
        # (L symmetric); finally dx = dT_0 + L dT_1 since T_1 = L x
        if K == 1:
            return _from_vcols(dT[0], batch, C)
        acc2 = np.zeros((V, n * C))
        acc1 = dT[K - 1]
        for k in range(K - 2, 0, -1):
            acc = dT[k] + 2.0 * (self.L @ acc1) - acc2
            acc2, acc1 = acc1, acc
        dx = dT[0] - acc2 + self.L @ acc1
        return _from_vcols(dx, batch, C)


def _check_row_stochastic(P):
    P = P.tocsr()
    rows = np.asarray(P.sum(axis=1)).ravel()
    if not np.allclose(rows, 1.0, atol=1e-9):
        raise ValidationError("pooling map must be row-stochastic")
    if (P.data < 0).any():
        raise ValidationError("pooling map must be nonnegative")
    return P


class GraphPool(Layer):
    """y = P x with a row-stochastic patch-averaging map P: fine -> coarse."""

    def __init__(self, P):
        super().__init__()
        self.P = _check_row_stochastic(P)

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-2] != self.P.shape[1]:
            raise ValidationError(
                f"pool expects {self.P.shape[1]} rows, got {x.shape[-2]}")
        z, batch = _to_vcols(x)
        self._cache = (batch,)
        return _from_vcols(self.P @ z, batch, x.shape[-1])

    def backward(self, gy):
        (batch,) = self._take_cache()
        z, _ = _to_vcols(np.asarray(gy, dtype=np.float64))
        return _from_vcols(self.P.T @ z, batch, gy.shape[-1])


class GraphUnpool(Layer):
    """Transpose of a pooling map with rows renormalized to sum to one."""

    def __init__(self, P):
        super().__init__()
        P = _check_row_stochastic(P)
        U = P.T.tocsr().astype(np.float64)
        scale = np.asarray(U.sum(axis=1)).ravel()
        if (scale <= 0).any():
            raise ValidationError("unpool has unreachable fine vertices")
        U = sparse.diags(1.0 / scale) @ U
        self.U = U.tocsr()

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-2] != self.U.shape[1]:
            raise ValidationError(
                f"unpool expects {self.U.shape[1]} rows, got {x.shape[-2]}")
        z, batch = _to_vcols(x)
        self._cache = (batch,)
        return _from_vcols(self.U @ z, batch, x.shape[-1])

    def backward(self, gy):
        (batch,) = self._take_cache()
        z, _ = _to_vcols(np.asarray(gy, dtype=np.float64))
        return _from_vcols(self.U.T @ z, batch, gy.shape[-1])


class Sequential(Layer):
    """Chain of layers; parameters exposed under '{index}.{name}' keys."""

    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)

    @property
    def params(self):
        return {f"{i}.{k}": v for i, l in enumerate(self.layers)
                for k, v in l.params.items()}

    @params.setter
    def params(self, value):
        if value:
            raise ValidationError("Sequential params are owned by sublayers")

    @property
    def grads(self):
        return {f"{i}.{k}": v for i, l in enumerate(self.layers)
                for k, v in l.grads.items()}

    @grads.setter
    def grads(self, value):
        if value:
            raise ValidationError("Sequential grads are owned by sublayers")

    def zero_grads(self):
        for l in self.layers:
            l.zero_grads()

    def forward(self, x):
        for l in self.layers:
            x = l.forward(x)
        return x

    def backward(self, gy):
        for l in reversed(self.layers):
            gy = l.backward(gy)
        return gy
