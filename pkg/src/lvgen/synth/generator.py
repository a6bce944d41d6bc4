"""Parametric LV shell construction and seeded population sampling.

The endocardial surface is a half superellipsoid of revolution: in
normalized profile coordinates (rho, zeta) it satisfies rho^p + zeta^p = 1
with p = 4 / (1 + apex_sharpness), so sharpness 1 gives an ordinary
ellipsoid (p = 2) and larger sharpness a more conical apex. The epicardium
is the superellipsoid with semi-axes enlarged by the wall thicknesses
(base thickness on x/y, apex thickness on z), which makes shell volumes
analytic: V = pi*a*b*c * Gamma(1/p)Gamma(2/p+1) / (p*Gamma(3/p+1)).

Basal tilt is applied as a volume-preserving shear z += sx*x + sy*y
(unit Jacobian), so tilt never disturbs the volume calibration.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn

from ..errors import ConfigError, GeometryError, ValidationError
from ..mesh import Mesh, build_shell_template, validate_mesh
from .params import AnatomyParams, PopulationSpec

# minimum endo->epi clearance before a draw counts as self-intersecting
_MIN_WALL_GAP_MM = 0.3


def sharpness_to_exponent(sharpness: float) -> float:
    return 4.0 / (1.0 + sharpness)


def superellipsoid_volume_ml(a, b, c, p) -> float:
    """Closed-form volume of the half superellipsoid solid, in ml."""
    factor = gamma_fn(1 / p) * gamma_fn(2 / p + 1) / (p * gamma_fn(3 / p + 1))
    return math.pi * a * b * c * factor / 1000.0


def _sheet_points(a, b, c, p, R, S):
    """Apex + R x S ring vertices of one half superellipsoid, with outward
    unit normals. Ring r sits at phi = r/R * pi/2; apex is row 0."""
    phi = np.arange(1, R + 1) / R * (np.pi / 2)
    theta = 2 * np.pi * np.arange(S) / S
    e = 2.0 / p
    u = np.sin(phi) ** e          # normalized profile radius
    v = np.cos(phi) ** e          # normalized profile height
    ct, st = np.cos(theta), np.sin(theta)
    x = a * np.outer(u, ct)
    y = b * np.outer(u, st)
    z = -c * np.repeat(v[:, None], S, axis=1)
    pts = np.concatenate(
        [[[0.0, 0.0, -c]], np.stack([x, y, z], axis=-1).reshape(-1, 3)])

    # outward normal from the implicit form q^(p/2) + (-z/c)^p = 1,
    # q = (x/a)^2 + (y/b)^2; q > 0 away from the apex so the gradient is safe
    q = (x / a) ** 2 + (y / b) ** 2
    gx = p * q ** (p / 2 - 1) * x / a**2
    gy = p * q ** (p / 2 - 1) * y / b**2
    gz = -(p / c) * np.clip(-z / c, 0.0, None) ** (p - 1)
    n = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    normals = np.concatenate([[[0.0, 0.0, -1.0]], n])
    return pts, normals


def _noise_field(coeffs, R, S):
    """Smooth unit-scale displacement field over apex + R x S grid.

    Low-order harmonics in theta weighted by powers of the apex->base
    coordinate u, so the non-axisymmetric terms vanish at the pole.
    """
    u = (np.arange(1, R + 1) / R)[:, None]
    theta = 2 * np.pi * np.arange(S) / S
    k0, k1, k2, k3, k4, k5 = coeffs
    f = (k0 + k1 * u
         + u * (k2 * np.cos(theta) + k3 * np.sin(theta))
         + u**2 * (k4 * np.cos(2 * theta) + k5 * np.sin(2 * theta)))
    return np.concatenate([[k0], f.ravel()]) / math.sqrt(6.0)


def _check_no_fold(topology, nominal, displaced, name):
    """Reject displacement fields strong enough to invert sheet triangles
    (a flipped face normal means the surface folded through itself)."""
    from ..mesh.topology import ENDO, EPI

    label = ENDO if name == "endo" else EPI
    faces = topology.surface_faces(label)
    offset = 0 if name == "endo" else topology.grid_dims[0] * topology.grid_dims[1] + 1
    f = faces - offset
    n0 = np.cross(nominal[f[:, 1]] - nominal[f[:, 0]],
                  nominal[f[:, 2]] - nominal[f[:, 0]])
    n1 = np.cross(displaced[f[:, 1]] - displaced[f[:, 0]],
                  displaced[f[:, 2]] - displaced[f[:, 0]])
    if (np.einsum("ij,ij->i", n0, n1) <= 0).any():
        raise GeometryError(
            f"surface noise folds the {name} sheet (self-intersection)")


def build_mesh(params: AnatomyParams, topology=None) -> Mesh:
    """Deterministically construct one shell mesh from its parameters."""
    params.validate()
    if topology is None:
        topology = build_shell_template(24, 36)
    if topology.grid_dims is None:
        raise ValidationError("topology has no grid parameterization")
    R, S = topology.grid_dims
    p = sharpness_to_exponent(params.apex_sharpness)
    a, b = params.endo_a, params.endo_b
    tb, ta = params.wall_thickness_base, params.wall_thickness_apex
    c_endo = params.endo_c * params.elongation
    c_epi = (params.endo_c + ta) * params.elongation

    endo, n_endo = _sheet_points(a, b, c_endo, p, R, S)
    epi, n_epi = _sheet_points(a + tb, b + tb, c_epi, p, R, S)

    if params.surface_noise_amp > 0:
        rng = np.random.default_rng(np.random.SeedSequence(params.noise_seed))
        d = params.surface_noise_amp * _noise_field(rng.standard_normal(6), R, S)
        # same field on both surfaces: preserves wall thickness to 1st order
        endo_d = endo + d[:, None] * n_endo
        epi_d = epi + d[:, None] * n_epi
        _check_no_fold(topology, endo, endo_d, "endo")
        _check_no_fold(topology, epi, epi_d, "epi")
        endo, epi = endo_d, epi_d

    gap = np.einsum("ij,ij->i", epi - endo, n_endo)
    if gap.min() < _MIN_WALL_GAP_MM:
        raise GeometryError(
            f"wall collapses to {gap.min():.3f} mm clearance (self-intersection)")

    rim = 0.5 * (endo[1 + (R - 1) * S :] + epi[1 + (R - 1) * S :])
    vertices = np.concatenate([endo, epi, rim])

    sx = math.tan(math.radians(params.basal_tilt[1]))
    sy = math.tan(math.radians(params.basal_tilt[0]))
    vertices[:, 2] += sx * vertices[:, 0] + sy * vertices[:, 1]
    return Mesh(topology, vertices)


@dataclass
class SynthDataset:
    """A generated population: shared topology, stacked vertices, provenance."""

    topology: object
    vertices: np.ndarray           # (n, V, 3)
    params: list                   # AnatomyParams per mesh
    manifest: dict

    def __len__(self):
        return len(self.vertices)

    def mesh(self, i) -> Mesh:
        return Mesh(self.topology, self.vertices[i])

    def meshes(self):
        return [self.mesh(i) for i in range(len(self))]


def generate_dataset(spec: PopulationSpec, n: int, seed: int,
                     topology=None) -> SynthDataset:
    """Sample n meshes i.i.d. from the population spec.

    Mesh i draws from its own PRNG stream spawned as (seed, i), so the
    result is independent of evaluation order and bit-reproducible.
    Invalid geometry is rejected and redrawn from the same stream; more
    than 1% rejections means the spec is too wide.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    if topology is None:
        topology = build_shell_template(24, 36)
    topology.validate()

    reject_budget = max(1, int(math.ceil(0.01 * n)))
    rejected = 0
    vertices = np.empty((n, topology.vertex_count, 3))
    params_list = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        while True:
            params = spec.draw(rng)
            try:
                mesh = build_mesh(params, topology)
            except ValidationError:
                rejected += 1
                if rejected > reject_budget:
                    raise ConfigError(
                        f"rejected {rejected} draws for n={n}: population "
                        "distributions too wide") from None
                continue
            break
        vertices[i] = mesh.vertices
        params_list.append(params)

    manifest = {
        "phase": spec.phase,
        "n": n,
        "seed": int(seed),
        "spec_hash": spec.content_hash(),
        "grid_dims": list(topology.grid_dims),
        "rejected": rejected,
        "params": [q.to_dict() for q in params_list],
    }
    return SynthDataset(topology, vertices, params_list, manifest)
