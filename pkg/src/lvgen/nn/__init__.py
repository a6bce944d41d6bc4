from .layers import (Layer, Dense, Swish1, ChebConv, GraphPool, GraphUnpool,
                     Sequential, sigmoid, glorot_uniform)
from .graph import (adjacency_from_faces, normalized_laplacian,
                    estimate_lambda_max, scaled_laplacian,
                    laplacian_for_topology)
from .embedding import sinusoidal_embedding
from .optim import Adam, constant_lr, linear_decay_lr
from .gradcheck import (GradCheckReport, finite_difference_gradients,
                        compare_gradients, check_model)
from .checkpoint import read_tensors, write_tensors

__all__ = [
    "Layer", "Dense", "Swish1", "ChebConv", "GraphPool", "GraphUnpool",
    "Sequential", "sigmoid", "glorot_uniform",
    "adjacency_from_faces", "normalized_laplacian", "estimate_lambda_max",
    "scaled_laplacian", "laplacian_for_topology",
    "sinusoidal_embedding",
    "Adam", "constant_lr", "linear_decay_lr",
    "GradCheckReport", "finite_difference_gradients", "compare_gradients",
    "check_model",
    "read_tensors", "write_tensors",
]
