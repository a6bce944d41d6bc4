"""Shared fixed topology for the two-surface ventricular shell template.

All meshes in a dataset reference one TemplateTopology: a closed triangle
surface made of an endocardial sheet, an epicardial sheet, and a basal-rim
band joining their open base rings. Both sheets share a structured
parameterization of `rings` latitude rings times `segments` meridians plus
an apex pole vertex; the rim band carries one extra mid-ring.

Vertex index layout (R = rings, S = segments):

    0                      endo apex
    1 .. R*S               endo rings, ring-major (ring 1 nearest the apex)
    R*S + 1                epi apex
    R*S + 2 .. 2*R*S + 1   epi rings, ring-major
    2*R*S + 2 .. +S        basal rim mid-ring
"""

import numpy as np

from ..errors import ValidationError

ENDO = 0
EPI = 1
BASAL_RIM = 2

_LABEL_NAMES = {ENDO: "endo", EPI: "epi", BASAL_RIM: "basal_rim"}


class TemplateTopology:
    """Immutable face/label structure shared by every mesh of a dataset.

    Parameters
    ----------
    vertex_count : int
        Number of vertices V.
    faces : (F, 3) int array
        Vertex-index triples, counter-clockwise seen from outside the
        enclosed myocardial shell.
    surface_labels : (V,) int array
        Per-vertex tag: ENDO, EPI or BASAL_RIM. May be None for meshes
        imported from plain interchange files; label-dependent operations
        then raise.
    grid_dims : (rings, segments) or None
        Structured parameterization of each sheet; None when unknown.
    """

    def __init__(self, vertex_count, faces, surface_labels=None, grid_dims=None):
        faces = np.ascontiguousarray(faces, dtype=np.int32)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValidationError(f"faces must be (F, 3), got {faces.shape}")
        if vertex_count <= 0:
            raise ValidationError("vertex_count must be positive")
        if faces.size and (faces.min() < 0 or faces.max() >= vertex_count):
            raise ValidationError("face index out of range")
        self.vertex_count = int(vertex_count)
        self.faces = faces
        if surface_labels is not None:
            surface_labels = np.ascontiguousarray(surface_labels, dtype=np.uint8)
            if surface_labels.shape != (vertex_count,):
                raise ValidationError("surface_labels length must equal vertex_count")
            bad = ~np.isin(surface_labels, list(_LABEL_NAMES))
            if bad.any():
                raise ValidationError("surface_labels contains unknown tag")
        self.surface_labels = surface_labels
        self.grid_dims = tuple(int(d) for d in grid_dims) if grid_dims is not None else None
        self.faces.setflags(write=False)
        if self.surface_labels is not None:
            self.surface_labels.setflags(write=False)
        self._surface_face_cache = {}
        self._rim_cache = {}

    def __eq__(self, other):
        if not isinstance(other, TemplateTopology):
            return NotImplemented
        if self.vertex_count != other.vertex_count:
            return False
        if not np.array_equal(self.faces, other.faces):
            return False
        a, b = self.surface_labels, other.surface_labels
        if (a is None) != (b is None):
            return False
        return a is None or np.array_equal(a, b)

    def surface_faces(self, label):
        """Faces whose three vertices all carry `label`."""
        if self.surface_labels is None:
            raise ValidationError("topology has no surface labels")
        if label not in self._surface_face_cache:
            mask = np.all(self.surface_labels[self.faces] == label, axis=1)
            sub = self.faces[mask]
            sub.setflags(write=False)
            self._surface_face_cache[label] = sub
        return self._surface_face_cache[label]

    def surface_boundary_loop(self, label):
        """Ordered vertex loop bounding the open sheet labelled `label`.

        The loop follows the orientation of the sheet's boundary edges
        (each appears in exactly one face of the sheet).
        """
        if label not in self._rim_cache:
            faces = self.surface_faces(label)
            loop = _boundary_loop(faces)
            loop.setflags(write=False)
            self._rim_cache[label] = loop
        return self._rim_cache[label]

    def edge_usage(self):
        """(undirected edge -> use count, oriented-consistency flag) summary.

        Returns (n_boundary, n_nonmanifold, oriented) where n_boundary is the
        number of undirected edges used once, n_nonmanifold used more than
        twice or twice in the same direction.
        """
        return _edge_usage(self.faces)

    def validate(self):
        """Check global closure and consistent orientation of the full shell.

        Every undirected edge must be used exactly twice, in opposite
        directions. With labels present, also checks each sheet caps to a
        closed surface (Euler characteristic 2).
        """
        n_boundary, n_nonmanifold, oriented = self.edge_usage()
        if n_boundary or n_nonmanifold:
            raise ValidationError(
                f"shell not closed-manifold: {n_boundary} boundary, "
                f"{n_nonmanifold} non-manifold edges"
            )
        if not oriented:
            raise ValidationError("face orientation is not globally consistent")
        if self.surface_labels is not None:
            for label in (ENDO, EPI):
                loop = self.surface_boundary_loop(label)
                faces = self.surface_faces(label)
                v_used = np.unique(faces)
                # capped sheet: one fan vertex, len(loop) fan faces
                v = len(v_used) + 1
                f = len(faces) + len(loop)
                edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
                edges = np.sort(edges, axis=1).astype(np.int64)
                keys = edges[:, 0] * self.vertex_count + edges[:, 1]
                e = len(np.unique(keys)) + len(loop)
                if v - e + f != 2:
                    raise ValidationError(
                        f"capped {_LABEL_NAMES[label]} sheet has Euler characteristic "
                        f"{v - e + f}, expected 2"
                    )

    @property
    def face_count(self):
        return len(self.faces)


def _edge_usage(faces):
    if len(faces) == 0:
        return 0, 0, True
    f = faces.astype(np.int64)
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    n = int(directed.max()) + 1
    keys_dir = directed[:, 0] * n + directed[:, 1]
    lo = np.minimum(directed[:, 0], directed[:, 1])
    hi = np.maximum(directed[:, 0], directed[:, 1])
    keys_und = lo * n + hi
    und, counts = np.unique(keys_und, return_counts=True)
    n_boundary = int((counts == 1).sum())
    n_nonmanifold = int((counts > 2).sum())
    # orientation: each directed edge must be unique (a repeat means two
    # faces traverse the edge the same way)
    oriented = len(np.unique(keys_dir)) == len(keys_dir) and n_nonmanifold == 0
    return n_boundary, n_nonmanifold, oriented


def _boundary_loop(faces):
    """Ordered boundary loop of an open oriented sheet (single loop expected)."""
    if len(faces) == 0:
        raise ValidationError("empty face set has no boundary")
    f = faces.astype(np.int64)
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    n = int(directed.max()) + 1
    lo = np.minimum(directed[:, 0], directed[:, 1])
    hi = np.maximum(directed[:, 0], directed[:, 1])
    und = lo * n + hi
    uniq, inv, counts = np.unique(und, return_inverse=True, return_counts=True)
    boundary_mask = counts[inv] == 1
    boundary = directed[boundary_mask]
    if len(boundary) == 0:
        raise ValidationError("sheet is closed; no boundary loop")
    nxt = {int(a): int(b) for a, b in boundary}
    if len(nxt) != len(boundary):
        raise ValidationError("boundary is not a simple loop")
    start = int(boundary[0, 0])
    loop = [start]
    cur = nxt[start]
    while cur != start:
        loop.append(cur)
        if len(loop) > len(boundary):
            raise ValidationError("boundary does not close into one loop")
        cur = nxt[cur]
    if len(loop) != len(boundary):
        raise ValidationError("sheet has more than one boundary loop")
    return np.asarray(loop, dtype=np.int32)


def _sheet_faces(apex, ring_index, rings, segments, flip):
    faces = []
    for s in range(segments):
        s1 = (s + 1) % segments
        faces.append((apex, ring_index(1, s1), ring_index(1, s)))
    for r in range(1, rings):
        for s in range(segments):
            s1 = (s + 1) % segments
            a = ring_index(r, s)
            b = ring_index(r, s1)
            c = ring_index(r + 1, s1)
            d = ring_index(r + 1, s)
            faces.append((a, b, c))
            faces.append((a, c, d))
    faces = np.asarray(faces, dtype=np.int32)
    if flip:
        faces = faces[:, ::-1]
    return faces


def build_shell_template(rings, segments):
    """Build the closed two-sheet shell topology for an R x S grid.

    Windings are fixed so that, for the canonical generator geometry (apex
    at negative z, base in the z=0 plane), the whole shell is outward
    oriented: positive signed volume equal to the myocardial volume.
    """
    if rings < 2 or segments < 3:
        raise ValidationError("need rings >= 2 and segments >= 3")
    R, S = int(rings), int(segments)
    endo_apex = 0

    def endo_ri(r, s):
        return 1 + (r - 1) * S + (s % S)

    epi_apex = R * S + 1

    def epi_ri(r, s):
        return R * S + 2 + (r - 1) * S + (s % S)

    rim0 = 2 * R * S + 2

    def rim_ri(s):
        return rim0 + (s % S)

    v = rim0 + S
    labels = np.empty(v, dtype=np.uint8)
    labels[0 : R * S + 1] = ENDO
    labels[R * S + 1 : 2 * R * S + 2] = EPI
    labels[rim0:] = BASAL_RIM

    # endo sheet: normals point into the cavity (outward from the shell)
    endo = _sheet_faces(endo_apex, endo_ri, R, S, flip=True)
    # epi sheet: normals point away from the heart
    epi = _sheet_faces(epi_apex, epi_ri, R, S, flip=False)

    lid = []
    for s in range(segments):
        s1 = (s + 1) % S
        a, b = endo_ri(R, s), endo_ri(R, s1)
        m, m1 = rim_ri(s), rim_ri(s1)
        e, e1 = epi_ri(R, s), epi_ri(R, s1)
        # inner band then outer band, wound so normals point along +z
        # (the wall solid lies below the base plane)
        lid.append((b, a, m))
        lid.append((b, m, m1))
        lid.append((m1, m, e))
        lid.append((m1, e, e1))
    lid = np.asarray(lid, dtype=np.int32)

    faces = np.concatenate([endo, epi, lid])
    return TemplateTopology(v, faces, labels, grid_dims=(R, S))
