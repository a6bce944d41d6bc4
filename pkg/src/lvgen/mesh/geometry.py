"""Signed volumes and clinical measurements on shell meshes.

Coordinates are millimetres throughout; volumes are reported in ml
(1 ml = 1000 mm^3) and masses in grams only at these reporting functions.
"""

import numpy as np

from ..errors import GeometryError, ValidationError
from .core import Mesh
from .topology import ENDO, EPI, _edge_usage

MYOCARDIUM_DENSITY_G_PER_ML = 1.05

MM3_PER_ML = 1000.0


def signed_volume(faces, vertices):
    """Signed enclosed volume of a closed oriented triangle surface, in ml.

    Divergence-theorem sum (1/6) * sum_f v0 . (v1 x v2); positive when face
    normals point outward.
    """
    faces = np.asarray(faces, dtype=np.int64)
    vertices = np.asarray(vertices, dtype=np.float64)
    if not np.isfinite(vertices).all():
        raise ValidationError("vertices contain non-finite coordinates")
    n_boundary, n_nonmanifold, oriented = _edge_usage(faces)
    if n_boundary or n_nonmanifold:
        raise ValidationError(
            f"surface not closed: {n_boundary} boundary, {n_nonmanifold} non-manifold edges"
        )
    if not oriented:
        raise ValidationError("surface orientation is not consistent")
    v0 = vertices[faces[:, 0]]
    v1 = vertices[faces[:, 1]]
    v2 = vertices[faces[:, 2]]
    vol_mm3 = np.einsum("ij,ij->", v0, np.cross(v1, v2)) / 6.0
    return vol_mm3 / MM3_PER_ML


def capped_surface(mesh: Mesh, label):
    """Close the open sheet `label` with a triangle fan over its rim centroid.

    Returns (faces, vertices): the sheet faces plus fan faces, and the mesh
    vertices with the centroid appended as the last row. Fan winding follows
    the sheet boundary orientation, so the capped surface is consistently
    oriented.
    """
    topo = mesh.topology
    sheet = topo.surface_faces(label)
    loop = topo.surface_boundary_loop(label)
    rim_pts = mesh.vertices[loop]
    centroid = rim_pts.mean(axis=0)
    # degenerate rim: all points collinear -> fan has ~zero total area
    spans = rim_pts - centroid
    cross = np.cross(spans, np.roll(spans, -1, axis=0))
    fan_area = 0.5 * np.linalg.norm(cross, axis=1).sum()
    rim_extent = np.abs(spans).max()
    if rim_extent <= 0 or fan_area < 1e-9 * rim_extent**2:
        raise GeometryError("basal rim is degenerate (collinear points)")
    c_idx = mesh.vertex_count
    nxt = np.roll(loop, -1)
    # boundary edges run a->b in sheet orientation; cap faces must traverse
    # b->a so each rim edge is used once in each direction
    fan = np.stack(
        [nxt, loop, np.full(len(loop), c_idx, dtype=loop.dtype)], axis=1
    )
    faces = np.concatenate([sheet, fan]).astype(np.int64)
    vertices = np.vstack([mesh.vertices, centroid])
    return faces, vertices


def lv_cavity_volume(mesh: Mesh) -> float:
    """Blood-pool volume inside the endocardial sheet, in ml (always >= 0)."""
    faces, vertices = capped_surface(mesh, ENDO)
    return abs(signed_volume(faces, vertices))


def _shell_volumes(mesh: Mesh):
    v_endo = lv_cavity_volume(mesh)
    faces, vertices = capped_surface(mesh, EPI)
    v_epi = abs(signed_volume(faces, vertices))
    return v_endo, v_epi


def lv_mass(mesh: Mesh) -> float:
    """Myocardial mass in grams: (V_epi - V_endo) in ml times 1.05 g/ml."""
    v_endo, v_epi = _shell_volumes(mesh)
    # tolerate rounding at exactly-zero wall thickness
    if v_epi - v_endo < -1e-9 * max(v_endo, 1.0):
        raise GeometryError(
            f"epicardial volume {v_epi:.3f} ml smaller than endocardial {v_endo:.3f} ml"
        )
    return max(v_epi - v_endo, 0.0) * MYOCARDIUM_DENSITY_G_PER_ML
