from .config import DEFAULTS, RunConfig
from .seeds import stage_seed
from .manifest import RunManifest, file_sha256, load_manifest, save_manifest
from .stages import (PIPELINE, STAGE_PRODUCES, gradient_suite,
                     replay_manifest, run_pipeline, run_stage)
from .main import build_parser, main

__all__ = [
    "DEFAULTS", "RunConfig", "stage_seed",
    "RunManifest", "file_sha256", "load_manifest", "save_manifest",
    "PIPELINE", "STAGE_PRODUCES", "gradient_suite",
    "replay_manifest", "run_pipeline", "run_stage",
    "build_parser", "main",
]
