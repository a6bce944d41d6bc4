"""Mesh and point-cloud value types."""

import numpy as np

from ..errors import ValidationError
from .topology import TemplateTopology


class Mesh:
    """One ventricle instance: a shared topology plus vertex coordinates in mm."""

    def __init__(self, topology: TemplateTopology, vertices):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ValidationError(f"vertices must be (V, 3), got {vertices.shape}")
        if vertices.shape[0] != topology.vertex_count:
            raise ValidationError(
                f"vertex count {vertices.shape[0]} does not match topology "
                f"({topology.vertex_count})"
            )
        if not np.isfinite(vertices).all():
            raise ValidationError("vertices contain non-finite coordinates")
        self.topology = topology
        self.vertices = vertices
        self.vertices.setflags(write=False)

    @property
    def vertex_count(self):
        return self.topology.vertex_count

    def translated(self, offset):
        return Mesh(self.topology, self.vertices + np.asarray(offset, dtype=np.float64))

    def scaled(self, factor):
        return Mesh(self.topology, self.vertices * float(factor))


class PointCloud:
    """Unordered-geometry view of a mesh: the vertices with edges dropped."""

    def __init__(self, points):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] == 0:
            raise ValidationError(f"points must be (N, 3) with N > 0, got {points.shape}")
        if not np.isfinite(points).all():
            raise ValidationError("points contain non-finite coordinates")
        self.points = points
        self.points.setflags(write=False)

    def __len__(self):
        return len(self.points)


def to_point_cloud(mesh: Mesh) -> PointCloud:
    """Vertex set of the mesh, order preserved, connectivity discarded."""
    return PointCloud(mesh.vertices)


def validate_mesh(mesh: Mesh):
    """Full structural validation: finite coordinates and closed oriented shell.

    Raises ValidationError on any defect; returns the mesh for chaining.
    """
    mesh.topology.validate()
    if not np.isfinite(mesh.vertices).all():
        raise ValidationError("vertices contain non-finite coordinates")
    return mesh
