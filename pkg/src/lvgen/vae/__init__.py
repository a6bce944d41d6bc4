from .hierarchy import (MeshHierarchy, coarse_grid_dims,
                        grid_patch_assignment, grid_vertex_count,
                        pooling_matrix)
from .model import (LOGVAR_MAX, LOGVAR_MIN, LatentGaussian, MeshVae,
                    VaeConfig, kl_divergence, load_vae, reparameterize,
                    sample_from_vae_prior, save_vae)
from .train import VaeTrainResult, train_vae

__all__ = [
    "MeshHierarchy", "coarse_grid_dims", "grid_patch_assignment",
    "grid_vertex_count", "pooling_matrix",
    "LOGVAR_MAX", "LOGVAR_MIN", "LatentGaussian", "MeshVae", "VaeConfig",
    "kl_divergence", "load_vae", "reparameterize", "sample_from_vae_prior",
    "save_vae",
    "VaeTrainResult", "train_vae",
]
