"""VAE training loop: Adam, constant learning rate, per-epoch curves."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalError, ValidationError
from ..nn import Adam
from .model import MeshVae


@dataclass
class VaeTrainResult:
    model: MeshVae
    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)
    train_mse: list = field(default_factory=list)
    train_kl: list = field(default_factory=list)
    seed: int = 0


def _epoch_eval(model, x, batch_size):
    """Deterministic validation loss: eps = 0, so z = mu."""
    total, n = 0.0, x.shape[0]
    for i in range(0, n, batch_size):
        xb = x[i:i + batch_size]
        eps = np.zeros((xb.shape[0], model.config.latent_dim))
        loss, _, _ = model.loss_and_grads(xb, eps)
        model.zero_grads()
        total += loss * xb.shape[0]
    return total / n


def train_vae(train_x, val_x, config, seed, topology, progress=None):
    """Fit a MeshVae on standardized vertex arrays (n, V, 3).

    Deterministic for a given seed: init, batch shuffling and the
    reparameterization draws all come from one PRNG stream. A non-finite
    loss aborts with a diagnostic pointing at the learning rate or init.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    if train_x.ndim != 3 or train_x.shape[0] < 1:
        raise ValidationError("train_x must be (n, V, 3) with n >= 1")
    rng = np.random.default_rng(seed)
    model = MeshVae(config, topology, rng)
    opt = Adam(model.params, lr=config.learning_rate)

    result = VaeTrainResult(model=model, seed=seed)
    n = train_x.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        ep_loss = ep_mse = ep_kl = 0.0
        for i in range(0, n, config.batch_size):
            xb = train_x[order[i:i + config.batch_size]]
            eps = rng.standard_normal((xb.shape[0], config.latent_dim))
            model.zero_grads()
            try:
                loss, mse, kl = model.loss_and_grads(xb, eps)
            except NumericalError as exc:
                raise NumericalError(
                    f"VAE training diverged at epoch {epoch + 1}: {exc}; "
                    "lower the learning rate or re-seed the init") from exc
            opt.step(model.grads)
            ep_loss += loss * xb.shape[0]
            ep_mse += mse * xb.shape[0]
            ep_kl += kl * xb.shape[0]
        result.train_losses.append(ep_loss / n)
        result.train_mse.append(ep_mse / n)
        result.train_kl.append(ep_kl / n)
        if val_x is not None and len(val_x):
            result.val_losses.append(
                _epoch_eval(model, val_x, config.batch_size))
        if progress is not None:
            progress(epoch, result)
    return result
