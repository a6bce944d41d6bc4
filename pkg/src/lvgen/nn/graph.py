"""Graph operators derived from mesh connectivity.

The convolution layers want the symmetric normalized Laplacian rescaled
to spectrum [-1, 1]. The largest eigenvalue is estimated once per graph
by power iteration and cached by the callers that build hierarchies.
"""

import numpy as np
from scipy import sparse

from ..errors import ValidationError


def adjacency_from_faces(n_vertices, faces):
    """Symmetric 0/1 adjacency from triangle edges."""
    faces = np.asarray(faces, dtype=np.int64)
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise ValidationError("faces must be (F, 3)")
    if faces.size and (faces.min() < 0 or faces.max() >= n_vertices):
        raise ValidationError("face index out of range")
    i = faces[:, [0, 1, 2]].ravel()
    j = faces[:, [1, 2, 0]].ravel()
    data = np.ones(i.size)
    A = sparse.coo_matrix((data, (i, j)), shape=(n_vertices, n_vertices))
    A = A + A.T
    A.data[:] = 1.0
    A = A.tocsr()
    A.setdiag(0.0)
    A.eliminate_zeros()
    A.sum_duplicates()
    return A


def normalized_laplacian(A):
    """L = I - D^{-1/2} A D^{-1/2}; isolated vertices are rejected."""
    A = A.tocsr()
    deg = np.asarray(A.sum(axis=1)).ravel()
    if (deg <= 0).any():
        raise ValidationError("graph has isolated vertices")
    d = 1.0 / np.sqrt(deg)
    D = sparse.diags(d)
    L = sparse.identity(A.shape[0], format="csr") - D @ A @ D
    L = L.tocsr()
    L.sort_indices()
    return L


def estimate_lambda_max(L, n_iter=50):
    """Largest eigenvalue of a symmetric PSD operator by power iteration.

    Deterministic start vector so repeated runs agree bit for bit. For
    the normalized Laplacian the result sits in (0, 2].
    """
    n = L.shape[0]
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(n_iter):
        w = L @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            raise ValidationError("power iteration collapsed to zero vector")
        v = w / norm
        lam = float(v @ (L @ v))
    return lam


def scaled_laplacian(L, lam_max=None, n_iter=50):
    """Rescale so the spectrum lands in [-1, 1]: 2 L / lambda_max - I."""
    if lam_max is None:
        lam_max = estimate_lambda_max(L, n_iter=n_iter)
    if lam_max <= 0:
        raise ValidationError("lambda_max must be positive")
    S = (2.0 / lam_max) * L - sparse.identity(L.shape[0], format="csr")
    S = S.tocsr()
    S.sort_indices()
    return S


def laplacian_for_topology(topology):
    """Scaled Laplacian for a template mesh, plus the raw lambda_max."""
    A = adjacency_from_faces(topology.vertex_count, topology.faces)
    L = normalized_laplacian(A)
    lam = estimate_lambda_max(L)
    return scaled_laplacian(L, lam), lam
