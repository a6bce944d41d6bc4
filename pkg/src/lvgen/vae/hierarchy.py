"""Multi-resolution hierarchy over the shell template grid.

Each pooling level merges 2x2 patches in (ring, segment) space, on both
sheets and the rim simultaneously; apex vertices map to apex vertices.
Coarse connectivity is the patch graph P A P^T (binarized, no self
loops), so coarse levels need no template of their own. Scaled
Laplacians and their power-iteration lambda_max are computed once here
and cached for every conv layer built on top.
"""

import numpy as np
from scipy import sparse

from ..errors import ConfigError
from ..nn.graph import (adjacency_from_faces, estimate_lambda_max,
                        normalized_laplacian, scaled_laplacian)


def grid_vertex_count(rings, segments):
    return 2 * (rings * segments + 1) + segments


def coarse_grid_dims(rings, segments):
    return (rings + 1) // 2, (segments + 1) // 2


def grid_patch_assignment(rings, segments):
    """Coarse vertex index for every fine vertex of an (R, S) template.

    Rings pair up 1-based (r -> ceil(r/2)), segments 0-based
    (s -> s // 2); the two apexes and the rim mid-ring follow the same
    scheme within their own blocks.
    """
    R, S = rings, segments
    Rc, Sc = coarse_grid_dims(R, S)

    def fine_grid(base, r, s):
        return base + (r - 1) * S + s

    def coarse_grid(base, r, s):
        return base + (r - 1) * Sc + s

    assign = np.empty(grid_vertex_count(R, S), dtype=np.int64)
    assign[0] = 0
    assign[R * S + 1] = Rc * Sc + 1
    for r in range(1, R + 1):
        rc = (r + 1) // 2
        for s in range(S):
            sc = s // 2
            assign[fine_grid(1, r, s)] = coarse_grid(1, rc, sc)
            assign[fine_grid(R * S + 2, r, s)] = coarse_grid(Rc * Sc + 2, rc, sc)
    rim0, rim0_c = 2 * R * S + 2, 2 * Rc * Sc + 2
    for s in range(S):
        assign[rim0 + s] = rim0_c + s // 2
    return assign


def pooling_matrix(rings, segments):
    """Row-stochastic patch-averaging map, coarse x fine."""
    assign = grid_patch_assignment(rings, segments)
    Rc, Sc = coarse_grid_dims(rings, segments)
    n_fine = assign.size
    n_coarse = grid_vertex_count(Rc, Sc)
    P = sparse.csr_matrix(
        (np.ones(n_fine), (assign, np.arange(n_fine))),
        shape=(n_coarse, n_fine))
    scale = np.asarray(P.sum(axis=1)).ravel()
    if (scale <= 0).any():
        raise ConfigError("pooling produced an empty patch")
    return (sparse.diags(1.0 / scale) @ P).tocsr()


def coarsen_adjacency(A, P):
    C = (P @ A @ P.T).tocsr()
    C.setdiag(0.0)
    C.eliminate_zeros()
    C.data[:] = 1.0
    return C


class MeshHierarchy:
    """Graphs, pooling maps and scaled Laplacians for n_levels pools.

    laplacians[l] covers the graph *before* pool l (n_levels entries,
    the coarsest level carries no convolution); pools[l] maps level l to
    level l+1. vertex_counts has n_levels + 1 entries.
    """

    def __init__(self, topology, n_levels):
        if topology.grid_dims is None:
            raise ConfigError("hierarchy requires a template with grid dims")
        R, S = topology.grid_dims
        dims = [(R, S)]
        for _ in range(n_levels):
            dims.append(coarse_grid_dims(*dims[-1]))

        self.grid_dims = dims
        self.vertex_counts = [grid_vertex_count(*d) for d in dims]
        for l in range(n_levels):
            if self.vertex_counts[l + 1] >= self.vertex_counts[l]:
                raise ConfigError(
                    f"grid {R}x{S} cannot pool {n_levels} levels: level "
                    f"{l} no longer shrinks")
        self.pools = [pooling_matrix(*dims[l]) for l in range(n_levels)]

        A = adjacency_from_faces(topology.vertex_count, topology.faces)
        self.laplacians = []
        self.lambda_max = []
        for l in range(n_levels):
            L = normalized_laplacian(A)
            lam = estimate_lambda_max(L)
            self.laplacians.append(scaled_laplacian(L, lam))
            self.lambda_max.append(lam)
            A = coarsen_adjacency(A, self.pools[l])

    @property
    def n_levels(self):
        return len(self.pools)
