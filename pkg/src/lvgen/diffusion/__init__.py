from .schedule import NoiseSchedule, ScheduleConfig, build_schedule, q_sample
from .denoiser import Denoiser, DenoiserConfig
from .stats import LatentStats
from .train import (DdpmTrainResult, load_denoiser, save_denoiser,
                    train_denoiser)
from .sample import generate_meshes, sample_latents

__all__ = [
    "NoiseSchedule", "ScheduleConfig", "build_schedule", "q_sample",
    "Denoiser", "DenoiserConfig", "LatentStats", "DdpmTrainResult",
    "train_denoiser", "save_denoiser", "load_denoiser",
    "sample_latents", "generate_meshes",
]
