import numpy as np
import pytest

from lvgen.mesh import Mesh, build_shell_template, lv_cavity_volume, lv_mass


def ellipsoid_shell_vertices(topo, endo_abc, epi_abc, rim_z=0.0):
    """Canonical shell vertices: half-ellipsoid endo/epi, rim ring between.

    Apex at -z, base rings in the z = rim_z plane. Ring r sits at polar angle
    phi = r/R * pi/2.
    """
    R, S = topo.grid_dims
    v = np.zeros((topo.vertex_count, 3))

    def fill(apex_idx, base, abc):
        a, b, c = abc
        v[apex_idx] = (0.0, 0.0, rim_z - c)
        r = np.arange(1, R + 1)
        phi = r / R * (np.pi / 2)
        th = 2 * np.pi * np.arange(S) / S
        x = a * np.outer(np.sin(phi), np.cos(th))
        y = b * np.outer(np.sin(phi), np.sin(th))
        z = rim_z - c * np.outer(np.cos(phi), np.ones(S))
        v[base : base + R * S] = np.stack([x, y, z], axis=-1).reshape(-1, 3)

    fill(0, 1, endo_abc)
    fill(R * S + 1, R * S + 2, epi_abc)
    th = 2 * np.pi * np.arange(S) / S
    ra = 0.5 * (endo_abc[0] + epi_abc[0])
    rb = 0.5 * (endo_abc[1] + epi_abc[1])
    v[2 * R * S + 2 :] = np.stack(
        [ra * np.cos(th), rb * np.sin(th), np.full(S, rim_z)], axis=-1
    )
    return v


def make_shell_mesh(rings=12, segments=18, endo=(30.0, 30.0, 30.0),
                    epi=(40.0, 40.0, 40.0)):
    topo = build_shell_template(rings, segments)
    return Mesh(topo, ellipsoid_shell_vertices(topo, endo, epi))


@pytest.fixture(scope="session")
def small_template():
    return build_shell_template(6, 9)


@pytest.fixture()
def shell_mesh():
    return make_shell_mesh()


def _population_with_stats(phase, n=1034, seed=777):
    from lvgen.synth import default_population, generate_dataset

    ds = generate_dataset(default_population(phase), n, seed=seed)
    vols = np.array([lv_cavity_volume(ds.mesh(i)) for i in range(len(ds))])
    masses = np.array([lv_mass(ds.mesh(i)) for i in range(len(ds))])
    return ds, vols, masses


@pytest.fixture(scope="session")
def ed_population():
    """Calibrated ED population at the clinical-dataset scale: (dataset,
    cavity volumes ml, masses g). Session-scoped, it is expensive."""
    return _population_with_stats("ed")


@pytest.fixture(scope="session")
def es_population():
    return _population_with_stats("es")
