"""Mesh file I/O.

Two formats:

* OBJ text (``v``/``f`` records only, 1-based indices) for single-mesh
  interchange. Coordinates are printed with %.17g so a write/read cycle
  reproduces float64 values exactly.
* A binary dataset container (".mdt") for batches of meshes sharing one
  topology: little-endian, magic ``MDT1``, u32 mesh_count, u32 vertex_count,
  u32 face_count, u32 face indices (face_count x 3), one label byte per
  vertex, then mesh_count blocks of float64 vertex data (vertex_count x 3,
  row-major). Round trips are bit-exact.
"""

import struct

import numpy as np

from ..errors import ParseError
from .core import Mesh
from .topology import BASAL_RIM, ENDO, EPI, TemplateTopology

_MDT_MAGIC = b"MDT1"


def write_obj(path, mesh: Mesh) -> None:
    """Write a mesh as OBJ text (v/f records, 1-based face indices)."""
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
        for a, b, c in mesh.topology.faces:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def _parse_obj(path):
    vertices = []
    faces = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "v":
                if len(parts) != 4:
                    raise ParseError(
                        f"vertex record needs 3 coordinates, got {len(parts) - 1}",
                        path=path, line=lineno,
                    )
                try:
                    vertices.append([float(p) for p in parts[1:]])
                except ValueError:
                    raise ParseError(
                        f"bad vertex coordinate in {line!r}", path=path, line=lineno
                    ) from None
                continue
            if parts[0] == "f":
                if len(parts) != 4:
                    raise ParseError(
                        f"face record needs 3 indices, got {len(parts) - 1}",
                        path=path, line=lineno,
                    )
                try:
                    idx = [int(p) for p in parts[1:]]
                except ValueError:
                    raise ParseError(
                        f"bad face index in {line!r}", path=path, line=lineno
                    ) from None
                for i in idx:
                    if i < 1:
                        raise ParseError(
                            f"face index {i} out of range (OBJ indices are 1-based)",
                            path=path, line=lineno,
                        )
                faces.append([i - 1 for i in idx])
                continue
            raise ParseError(
                f"unsupported record {parts[0]!r} (only v/f accepted)",
                path=path, line=lineno,
            )
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(f) and f.max() >= len(v):
        raise ParseError(
            f"face references vertex {f.max() + 1} but file has {len(v)} vertices",
            path=path,
        )
    return v, f


def read_obj(path, topology: TemplateTopology) -> Mesh:
    """Read an OBJ file against a declared template topology.

    The file's face list must match the template exactly (same triangles,
    same order, same winding); vertex labels come from the template.
    """
    vertices, faces = _parse_obj(path)
    if len(vertices) != topology.vertex_count:
        raise ParseError(
            f"vertex count {len(vertices)} does not match template "
            f"({topology.vertex_count})", path=path,
        )
    if faces.shape != topology.faces.shape or not (faces == topology.faces).all():
        raise ParseError("face list does not match template topology", path=path)
    return Mesh(topology, vertices)


def _infer_grid_dims(labels):
    # shell templates place one ring of segments vertices on the basal rim
    # and rings*segments + 1 (apex) vertices on each of endo/epi
    segments = int((labels == BASAL_RIM).sum())
    n_endo = int((labels == ENDO).sum())
    n_epi = int((labels == EPI).sum())
    if segments > 0 and n_endo == n_epi and (n_endo - 1) % segments == 0:
        return ((n_endo - 1) // segments, segments)
    return None


def write_mdt(path, topology: TemplateTopology, vertex_blocks) -> None:
    """Write a batch of meshes sharing one topology to a .mdt container.

    vertex_blocks: float64 array of shape (mesh_count, vertex_count, 3).
    """
    blocks = np.ascontiguousarray(vertex_blocks, dtype=np.float64)
    if blocks.ndim != 3 or blocks.shape[1:] != (topology.vertex_count, 3):
        raise ValueError(
            f"expected (n, {topology.vertex_count}, 3) vertex blocks, "
            f"got {blocks.shape}"
        )
    with open(path, "wb") as fh:
        fh.write(_MDT_MAGIC)
        fh.write(struct.pack("<III", blocks.shape[0], topology.vertex_count,
                             topology.face_count))
        fh.write(topology.faces.astype("<u4").tobytes())
        if topology.surface_labels is None:
            raise ValueError("dataset container requires surface labels")
        fh.write(topology.surface_labels.astype(np.uint8).tobytes())
        fh.write(blocks.astype("<f8").tobytes())


def read_mdt(path):
    """Read a .mdt container.

    Returns (topology, vertex_blocks) with vertex_blocks of shape
    (mesh_count, vertex_count, 3).
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MDT_MAGIC:
        raise ParseError(f"bad magic {data[:4]!r} (expected {_MDT_MAGIC!r})",
                         path=path)
    if len(data) < 16:
        raise ParseError("truncated header", path=path)
    mesh_count, vertex_count, face_count = struct.unpack_from("<III", data, 4)
    off = 16
    need_faces = face_count * 3 * 4
    need_labels = vertex_count
    need_vertices = mesh_count * vertex_count * 3 * 8
    expected = off + need_faces + need_labels + need_vertices
    if len(data) != expected:
        raise ParseError(
            f"size mismatch: file is {len(data)} bytes, header implies {expected}",
            path=path,
        )
    faces = np.frombuffer(data, dtype="<u4", count=face_count * 3, offset=off)
    faces = faces.reshape(face_count, 3).astype(np.int32)
    off += need_faces
    labels = np.frombuffer(data, dtype=np.uint8, count=vertex_count, offset=off).copy()
    off += need_labels
    if faces.size and int(faces.max()) >= vertex_count:
        raise ParseError(
            f"face references vertex {int(faces.max())} of {vertex_count}", path=path
        )
    if not np.isin(labels, (ENDO, EPI, BASAL_RIM)).all():
        raise ParseError("unknown vertex label byte", path=path)
    blocks = np.frombuffer(data, dtype="<f8", count=mesh_count * vertex_count * 3,
                           offset=off)
    blocks = blocks.reshape(mesh_count, vertex_count, 3).copy()
    topo = TemplateTopology(vertex_count, faces, labels,
                            grid_dims=_infer_grid_dims(labels))
    return topo, blocks
