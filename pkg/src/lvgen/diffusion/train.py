"""Denoiser training: eps-prediction objective with early stopping.

A non-finite loss does not raise: the run aborts and returns the best
checkpoint seen so far, because a mostly-trained denoiser is still
useful for diagnosis while a traceback is not.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalError, ValidationError
from ..nn import Adam, linear_decay_lr, read_tensors, write_tensors
from .denoiser import Denoiser, DenoiserConfig
from .schedule import NoiseSchedule, ScheduleConfig, build_schedule, q_sample
from .stats import LatentStats


@dataclass
class DdpmTrainResult:
    denoiser: Denoiser
    schedule: NoiseSchedule
    stats: LatentStats
    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)
    best_epoch: int = 0
    aborted: bool = False
    abort_reason: str = ""
    seed: int = 0


def _val_loss(den, schedule, z_val, t_val, eps_val, batch=1024):
    """Validation loss on draws fixed once, so epochs are comparable."""
    total = 0.0
    for i in range(0, len(z_val), batch):
        zb, tb, eb = z_val[i:i + batch], t_val[i:i + batch], \
            eps_val[i:i + batch]
        total += den.loss_only(q_sample(schedule, zb, tb, eb), tb, eb) \
            * len(zb)
    return total / len(z_val)


def train_denoiser(latents, config=None, *, schedule_config=None, seed=0,
                   val_latents=None, stats=None, progress=None):
    """Fit the noise predictor on raw (unnormalized) latent vectors.

    Latents are normalized per dimension internally; the returned stats
    travel with the checkpoint so sampling can undo the scaling. When no
    validation set is given, a tenth of the data is held out. Early
    stopping restores the best-validation parameters in every exit path.
    """
    cfg = config or DenoiserConfig()
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim != 2 or latents.shape[1] != cfg.width:
        raise ValidationError(
            f"expected (n, {cfg.width}) latents, got {latents.shape}")
    if not np.isfinite(latents).all():
        raise ValidationError("latents contain non-finite values")

    schedule = build_schedule(schedule_config or ScheduleConfig())
    stats = stats or LatentStats.from_latents(latents)
    z_all = stats.normalize(latents)

    rng = np.random.default_rng(seed)
    den = Denoiser(cfg, rng)

    if val_latents is not None:
        z_train = z_all
        z_val = stats.normalize(np.asarray(val_latents, dtype=np.float64))
        if z_val.ndim != 2 or z_val.shape[1] != cfg.width:
            raise ValidationError("val_latents shape mismatch")
    else:
        if z_all.shape[0] < 2:
            raise ValidationError("need at least 2 latents to hold out "
                                  "a validation split")
        k = max(1, z_all.shape[0] // 10)
        order = rng.permutation(z_all.shape[0])
        z_val, z_train = z_all[order[:k]], z_all[order[k:]]
    t_val = rng.integers(0, schedule.timesteps, size=z_val.shape[0])
    eps_val = rng.standard_normal(z_val.shape)

    n, B = z_train.shape[0], cfg.batch_size
    steps_per_epoch = (n + B - 1) // B
    lr_at = linear_decay_lr(cfg.learning_rate, cfg.epochs * steps_per_epoch)
    # one flat parameter vector: the optimizer update is a handful of
    # whole-array operations instead of a dict walk every step
    opt = Adam({"theta": den.param_vector}, lr=cfg.learning_rate)
    flat_grads = {"theta": den.grad_vector}

    result = DdpmTrainResult(denoiser=den, schedule=schedule, stats=stats,
                             seed=seed)
    best = math.inf
    best_epoch = 0
    snapshot = den.param_vector.copy()
    since_best = 0
    step = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        running = 0.0
        try:
            for s0 in range(0, n, B):
                idx = perm[s0:s0 + B]
                zb = z_train[idx]
                tb = rng.integers(0, schedule.timesteps, size=len(idx))
                eb = rng.standard_normal(zb.shape)
                den.zero_grads()
                loss = den.loss_and_grads(q_sample(schedule, zb, tb, eb),
                                          tb, eb)
                if not math.isfinite(loss):
                    raise NumericalError(f"non-finite training loss {loss}")
                opt.step(flat_grads, lr=lr_at(step))
                step += 1
                running += loss * len(idx)
            val = _val_loss(den, schedule, z_val, t_val, eps_val)
            if not math.isfinite(val):
                raise NumericalError("non-finite validation loss")
        except NumericalError as exc:
            den.param_vector[...] = snapshot
            result.aborted = True
            result.abort_reason = (
                f"training aborted at epoch {epoch}: {exc}; restored the "
                f"best checkpoint (epoch {best_epoch})")
            break
        result.train_losses.append(running / n)
        result.val_losses.append(val)
        if progress is not None:
            progress(epoch, running / n, val)
        if val < best:
            best, best_epoch, since_best = val, epoch, 0
            snapshot = den.param_vector.copy()
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    result.best_epoch = best_epoch
    den.param_vector[...] = snapshot
    return result


# -- checkpoint io -------------------------------------------------------

def save_denoiser(path, denoiser, schedule, stats, seed, phase):
    path = str(path)
    write_tensors(path, denoiser.params)
    meta = {
        "kind": "latent-ddpm",
        "phase": phase,
        "seed": int(seed),
        "config": denoiser.config.to_dict(),
        "schedule": schedule.config.to_dict(),
        "stats": stats.to_dict(),
    }
    with open(path + ".json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def load_denoiser(path):
    path = str(path)
    with open(path + ".json") as fh:
        meta = json.load(fh)
    if meta.get("kind") != "latent-ddpm":
        raise ValidationError(f"{path} is not a latent-ddpm checkpoint")
    den = Denoiser(DenoiserConfig.from_dict(meta["config"]),
                   np.random.default_rng(0))
    den.load_params(read_tensors(path))
    schedule = build_schedule(ScheduleConfig.from_dict(meta["schedule"]))
    stats = LatentStats.from_dict(meta["stats"])
    return den, schedule, stats, meta
