"""Graph-convolutional beta-VAE over standardized shell meshes.

Encoder: three conv+pool levels then dense heads to (mu, logvar).
Decoder mirrors with unpooling. All gradients are hand-derived through
the layer stack, the reparameterization and the KL term; finite
differences vet the whole assembly in the tests.
"""

import json
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericalError, ValidationError
from ..nn import (ChebConv, Dense, GraphPool, GraphUnpool, Swish1,
                  read_tensors, write_tensors)
from ..synth.preprocess import StandardizationStats, destandardize
from .hierarchy import MeshHierarchy

LOGVAR_MIN, LOGVAR_MAX = -20.0, 10.0


@dataclass(frozen=True)
class VaeConfig:
    latent_dim: int = 16
    conv_channels: tuple = (16, 32, 64)
    cheb_order: int = 6
    beta: float = 0.001
    epochs: int = 250
    batch_size: int = 8
    learning_rate: float = 0.001

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1")
        if len(self.conv_channels) < 1:
            raise ConfigError("need at least one conv level")
        if self.cheb_order < 1 or self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("cheb_order, batch_size, epochs must be >= 1")
        if self.learning_rate <= 0 or self.beta < 0:
            raise ConfigError("learning_rate > 0 and beta >= 0 required")

    @property
    def n_levels(self):
        return len(self.conv_channels)

    def to_dict(self):
        return {"latent_dim": self.latent_dim,
                "conv_channels": list(self.conv_channels),
                "cheb_order": self.cheb_order, "beta": self.beta,
                "epochs": self.epochs, "batch_size": self.batch_size,
                "learning_rate": self.learning_rate}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["conv_channels"] = tuple(d.get("conv_channels", (16, 32, 64)))
        return cls(**d)


@dataclass
class LatentGaussian:
    """Variational posterior q(z|x) = N(mu, diag(exp(logvar)))."""

    mu: np.ndarray
    logvar: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.logvar = np.asarray(self.logvar, dtype=np.float64)
        if self.mu.shape != self.logvar.shape:
            raise ValidationError("mu/logvar shape mismatch")
        if not (np.isfinite(self.mu).all() and np.isfinite(self.logvar).all()):
            raise ValidationError("non-finite latent gaussian")
        if self.logvar.size and (self.logvar.min() < LOGVAR_MIN - 1e-12 or
                                 self.logvar.max() > LOGVAR_MAX + 1e-12):
            raise ValidationError("logvar outside clamp range")


def reparameterize(g, rng):
    eps = rng.standard_normal(g.mu.shape)
    return g.mu + np.exp(0.5 * g.logvar) * eps


def kl_divergence(mu, logvar):
    """KL(q || N(0, I)) per sample, summed over latent dims."""
    terms = 1.0 + logvar - mu ** 2 - np.exp(logvar)
    return -0.5 * terms.sum(axis=-1)


class MeshVae:
    def __init__(self, config, topology, rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.config = config
        self.topology = topology
        self.hierarchy = MeshHierarchy(topology, config.n_levels)

        ch = (3,) + tuple(config.conv_channels)
        K = config.cheb_order
        hier = self.hierarchy
        self.enc_convs = [ChebConv(ch[l], ch[l + 1], K, hier.laplacians[l], rng)
                          for l in range(config.n_levels)]
        self.enc_acts = [Swish1() for _ in range(config.n_levels)]
        self.pools = [GraphPool(P) for P in hier.pools]

        flat = hier.vertex_counts[-1] * ch[-1]
        self.head_mu = Dense(flat, config.latent_dim, rng)
        self.head_logvar = Dense(flat, config.latent_dim, rng)

        self.dec_dense = Dense(config.latent_dim, flat, rng)
        self.dec_act_in = Swish1()
        self.unpools = [GraphUnpool(P) for P in reversed(hier.pools)]
        self.dec_convs = [ChebConv(ch[l + 1], ch[l], K, hier.laplacians[l], rng)
                          for l in reversed(range(config.n_levels))]
        self.dec_acts = [Swish1() for _ in range(config.n_levels - 1)]
        self._flat = flat

    def _named_layers(self):
        for l, conv in enumerate(self.enc_convs):
            yield f"enc.conv{l}", conv
        yield "enc.mu", self.head_mu
        yield "enc.logvar", self.head_logvar
        yield "dec.dense", self.dec_dense
        for l, conv in enumerate(self.dec_convs):
            yield f"dec.conv{l}", conv

    @property
    def params(self):
        return {f"{name}.{k}": v for name, layer in self._named_layers()
                for k, v in layer.params.items()}

    @property
    def grads(self):
        return {f"{name}.{k}": v for name, layer in self._named_layers()
                for k, v in layer.grads.items()}

    def zero_grads(self):
        for _, layer in self._named_layers():
            layer.zero_grads()

    def load_params(self, tensors):
        own = self.params
        if set(tensors) != set(own):
            raise ValidationError("checkpoint parameter names do not match")
        for k, v in tensors.items():
            if v.shape != own[k].shape:
                raise ValidationError(f"checkpoint shape mismatch for {k}")
            own[k][...] = v

    def _check_input(self, x):
        V = self.topology.vertex_count
        if not ((x.ndim == 2 and x.shape == (V, 3)) or
                (x.ndim == 3 and x.shape[1:] == (V, 3))):
            raise ValidationError(
                f"expected standardized [*, {V}, 3] vertices, got {x.shape}")

    # -- forward passes -------------------------------------------------

    def _encode_raw(self, x):
        """Conv stack to (mu, raw logvar); caches stay armed for backward."""
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x)
        single = x.ndim == 2
        h = x[None] if single else x
        for conv, act, pool in zip(self.enc_convs, self.enc_acts, self.pools):
            h = pool.forward(act.forward(conv.forward(h)))
        flat = h.reshape(h.shape[0], self._flat)
        mu = self.head_mu.forward(flat)
        logvar = self.head_logvar.forward(flat)
        return mu, logvar, single

    def encode(self, x):
        mu, logvar, single = self._encode_raw(x)
        logvar = np.clip(logvar, LOGVAR_MIN, LOGVAR_MAX)
        if single:
            mu, logvar = mu[0], logvar[0]
        return LatentGaussian(mu, logvar)

    def decode(self, z):
        z = np.asarray(z, dtype=np.float64)
        single = z.ndim == 1
        zb = z[None] if single else z
        if zb.ndim != 2 or zb.shape[1] != self.config.latent_dim:
            raise ValidationError(
                f"latent dim {zb.shape[-1]} != {self.config.latent_dim}")
        h = self.dec_act_in.forward(self.dec_dense.forward(zb))
        h = h.reshape(zb.shape[0], self.hierarchy.vertex_counts[-1], -1)
        n = len(self.dec_convs)
        for l, (unpool, conv) in enumerate(zip(self.unpools, self.dec_convs)):
            h = conv.forward(unpool.forward(h))
            if l < n - 1:
                h = self.dec_acts[l].forward(h)
        return h[0] if single else h

    # -- training-mode loss with hand-derived backward -------------------

    def _forward_loss(self, x, eps):
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x)
        if x.ndim == 2:
            x = x[None]
        B = x.shape[0]
        eps = np.asarray(eps, dtype=np.float64)
        if eps.shape != (B, self.config.latent_dim):
            raise ValidationError("eps shape must be [batch, latent_dim]")

        mu, logvar_raw, _ = self._encode_raw(x)
        clip_mask = ((logvar_raw > LOGVAR_MIN) &
                     (logvar_raw < LOGVAR_MAX)).astype(np.float64)
        logvar = np.clip(logvar_raw, LOGVAR_MIN, LOGVAR_MAX)
        sigma = np.exp(0.5 * logvar)
        z = mu + sigma * eps
        x_hat = self.decode(z)

        resid = x_hat - x
        mse = float((resid ** 2).mean())
        kl = float(kl_divergence(mu, logvar).mean())
        loss = mse + self.config.beta * kl
        if not np.isfinite(loss):
            raise NumericalError("non-finite VAE loss")
        aux = (resid, mu, logvar, sigma, eps, clip_mask, B, x.shape[1])
        return loss, mse, kl, aux

    def loss_only(self, x, eps):
        """Forward loss without gradient work (finite differences, eval)."""
        loss, mse, kl, _ = self._forward_loss(x, eps)
        return loss, mse, kl

    def loss_and_grads(self, x, eps):
        """Mean over the batch of MSE(x_hat, x) + beta * KL; fills grads.

        eps is the batch of reparameterization draws, fixed by the
        caller so the loss is a deterministic function of parameters
        (finite differences rely on that).
        """
        loss, mse, kl, aux = self._forward_loss(x, eps)
        resid, mu, logvar, sigma, eps, clip_mask, B, V = aux
        beta = self.config.beta

        # d(mean mse)/dx_hat
        d_xhat = (2.0 / (B * V * 3)) * resid
        d_z = self._decode_backward(d_xhat)
        # z = mu + exp(logvar/2) eps; KL grads: d/dmu = mu, d/dlogvar =
        # (exp(logvar) - 1)/2, averaged over the batch
        d_mu = d_z + (beta / B) * mu
        d_logvar = d_z * 0.5 * sigma * eps \
            + (beta / (2.0 * B)) * (np.exp(logvar) - 1.0)
        d_logvar *= clip_mask
        self._encode_backward(d_mu, d_logvar)
        return loss, mse, kl

    def _decode_backward(self, d_out):
        g = d_out
        n = len(self.dec_convs)
        for l in range(n - 1, -1, -1):
            if l < n - 1:
                g = self.dec_acts[l].backward(g)
            g = self.unpools[l].backward(self.dec_convs[l].backward(g))
        g = g.reshape(g.shape[0], self._flat)
        return self.dec_dense.backward(self.dec_act_in.backward(g))

    def _encode_backward(self, d_mu, d_logvar):
        g = self.head_mu.backward(d_mu) + self.head_logvar.backward(d_logvar)
        g = g.reshape(g.shape[0], self.hierarchy.vertex_counts[-1], -1)
        for conv, act, pool in zip(reversed(self.enc_convs),
                                   reversed(self.enc_acts),
                                   reversed(self.pools)):
            g = conv.backward(act.backward(pool.backward(g)))
        return g


def sample_from_vae_prior(model, stats, n, rng, batch_size=32):
    """Draw z ~ N(0, I), decode, destandardize to mm vertices (n, V, 3)."""
    z = rng.standard_normal((n, model.config.latent_dim))
    out = []
    for i in range(0, n, batch_size):
        out.append(model.decode(z[i:i + batch_size]))
    return destandardize(np.concatenate(out, axis=0), stats)


# -- checkpoint io -------------------------------------------------------

def save_vae(path, model, stats, seed, phase):
    path = str(path)
    write_tensors(path, model.params)
    meta = {
        "kind": "mesh-vae",
        "phase": phase,
        "seed": int(seed),
        "config": model.config.to_dict(),
        "grid_dims": list(model.topology.grid_dims),
        "vertex_count": model.topology.vertex_count,
        "standardization": stats.to_dict(),
    }
    with open(path + ".json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def load_vae(path, topology):
    path = str(path)
    with open(path + ".json") as fh:
        meta = json.load(fh)
    if meta.get("kind") != "mesh-vae":
        raise ValidationError(f"{path} is not a mesh-vae checkpoint")
    if (meta["vertex_count"] != topology.vertex_count or
            tuple(meta["grid_dims"]) != tuple(topology.grid_dims or ())):
        raise ValidationError(
            "checkpoint was trained on a different template topology")
    config = VaeConfig.from_dict(meta["config"])
    model = MeshVae(config, topology)
    model.load_params(read_tensors(path))
    stats = StandardizationStats.from_dict(meta["standardization"])
    return model, stats, meta
