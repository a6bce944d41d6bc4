"""Synthetic population generator: geometry oracles, sampling determinism,
calibration against the clinical targets, splitting, standardization."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lvgen.errors import ConfigError, GeometryError, ValidationError
from lvgen.mesh import build_shell_template, lv_cavity_volume, lv_mass, validate_mesh
from lvgen.synth import (
    AnatomyParams,
    ParamDist,
    PopulationSpec,
    StandardizationStats,
    build_mesh,
    calibrate_population,
    compute_standardization,
    default_population,
    destandardize,
    expected_cavity_volume,
    expected_mass,
    generate_dataset,
    load_population_spec,
    save_population_spec,
    sharpness_to_exponent,
    split_indices,
    split_sizes,
    standardize,
    superellipsoid_volume_ml,
)

TOPO = build_shell_template(24, 36)


def basic_params(**over):
    kw = dict(endo_a=30.5, endo_b=30.5, endo_c=80.0, wall_thickness_base=8.0,
              wall_thickness_apex=6.0, apex_sharpness=1.0)
    kw.update(over)
    return AnatomyParams(**kw)


class TestBuildMesh:
    def test_half_ellipsoid_cavity_oracle(self):
        m = build_mesh(basic_params(), TOPO)
        analytic = 2.0 / 3.0 * np.pi * 30.5 * 30.5 * 80.0 / 1000.0
        v = lv_cavity_volume(m)
        assert v == pytest.approx(analytic, rel=1e-2)
        assert v < analytic  # inscribed

    def test_refinement_converges(self):
        analytic = 2.0 / 3.0 * np.pi * 30.5 * 30.5 * 80.0 / 1000.0
        errs = []
        for rings, segs in [(12, 18), (24, 36), (48, 72)]:
            m = build_mesh(basic_params(), build_shell_template(rings, segs))
            errs.append(analytic - lv_cavity_volume(m))
        assert errs[0] > errs[1] > errs[2] > 0

    def test_constant_thickness_shell_mass_oracle(self):
        # equal base/apex thickness with a = b: epi is the (a+t, a+t, c+t)
        # half-ellipsoid, so the wall volume is analytic
        t = 7.0
        m = build_mesh(basic_params(wall_thickness_base=t, wall_thickness_apex=t),
                       TOPO)
        v_endo = superellipsoid_volume_ml(30.5, 30.5, 80.0, 2.0)
        v_epi = superellipsoid_volume_ml(30.5 + t, 30.5 + t, 80.0 + t, 2.0)
        assert lv_mass(m) == pytest.approx((v_epi - v_endo) * 1.05, rel=2e-2)

    def test_sharp_apex_volume_oracle(self):
        m = build_mesh(basic_params(apex_sharpness=2.0), TOPO)
        p = sharpness_to_exponent(2.0)
        assert p == pytest.approx(4.0 / 3.0)
        analytic = superellipsoid_volume_ml(30.5, 30.5, 80.0, p)
        assert lv_cavity_volume(m) == pytest.approx(analytic, rel=1.5e-2)

    def test_sharpness_one_is_ellipsoid(self):
        assert sharpness_to_exponent(1.0) == 2.0
        assert superellipsoid_volume_ml(30.5, 30.5, 80.0, 2.0) == pytest.approx(
            2.0 / 3.0 * np.pi * 30.5 * 30.5 * 80.0 / 1000.0, rel=1e-12)

    def test_tilt_preserves_volumes(self):
        flat = build_mesh(basic_params(surface_noise_amp=0.9, noise_seed=11), TOPO)
        tilted = build_mesh(basic_params(surface_noise_amp=0.9, noise_seed=11,
                                         basal_tilt=(14.0, -9.0)), TOPO)
        # shear has unit Jacobian: volumes identical, not just close
        assert lv_cavity_volume(tilted) == pytest.approx(
            lv_cavity_volume(flat), rel=1e-12)
        assert lv_mass(tilted) == pytest.approx(lv_mass(flat), rel=1e-12)

    def test_elongation_scales_volume_linearly(self):
        v1 = lv_cavity_volume(build_mesh(basic_params(), TOPO))
        v2 = lv_cavity_volume(build_mesh(basic_params(elongation=1.2), TOPO))
        assert v2 == pytest.approx(1.2 * v1, rel=1e-12)

    def test_deterministic(self):
        p = basic_params(surface_noise_amp=1.2, noise_seed=99,
                         basal_tilt=(5.0, 3.0), apex_sharpness=1.4)
        a = build_mesh(p, TOPO)
        b = build_mesh(p, TOPO)
        assert np.array_equal(a.vertices, b.vertices)

    def test_generated_mesh_validates(self):
        m = build_mesh(basic_params(surface_noise_amp=1.5, noise_seed=7,
                                    basal_tilt=(12.0, -10.0)), TOPO)
        validate_mesh(m)

    def test_extreme_noise_rejected(self):
        p = basic_params(surface_noise_amp=30.0, noise_seed=2)
        with pytest.raises(GeometryError):
            build_mesh(p, TOPO)

    def test_param_invariants(self):
        with pytest.raises(ValidationError):
            basic_params(wall_thickness_base=0.4).validate()
        with pytest.raises(ValidationError):
            basic_params(apex_sharpness=3.5).validate()
        with pytest.raises(ValidationError):
            basic_params(basal_tilt=(30.0, 0.0)).validate()
        with pytest.raises(ValidationError):
            basic_params(endo_a=-1.0).validate()


class TestParamDist:
    def test_bounds_respected(self):
        d = ParamDist(10.0, 5.0, 8.0, 12.0)
        rng = np.random.default_rng(0)
        xs = np.array([d.sample(rng) for _ in range(500)])
        assert xs.min() >= 8.0 and xs.max() <= 12.0

    def test_moments_match_sampling(self):
        d = ParamDist(10.0, 2.0, 7.0, 16.0)
        rng = np.random.default_rng(1)
        xs = np.array([d.sample(rng) for _ in range(20000)])
        m, v = d.moments()
        assert xs.mean() == pytest.approx(m, abs=0.03)
        assert xs.var() == pytest.approx(v, rel=0.05)

    def test_degenerate_constant(self):
        d = ParamDist(3.0, 0.0, 3.0, 3.0)
        rng = np.random.default_rng(2)
        assert d.sample(rng) == 3.0
        assert d.moments() == (3.0, 0.0)

    def test_mean_outside_bounds_rejected(self):
        with pytest.raises(ConfigError):
            ParamDist(5.0, 1.0, 6.0, 8.0)


class TestPopulationSpec:
    def test_ini_round_trip(self, tmp_path):
        spec = default_population("ed")
        p = tmp_path / "pop.ini"
        save_population_spec(p, spec)
        back = load_population_spec(p)
        assert back.content_hash() == spec.content_hash()
        assert back.phase == "ed"

    def test_missing_section_rejected(self, tmp_path):
        p = tmp_path / "bad.ini"
        p.write_text("[population]\nphase = ed\n")
        with pytest.raises(ConfigError):
            load_population_spec(p)

    def test_expected_volume_matches_monte_carlo(self):
        spec = default_population("ed")
        rng = np.random.default_rng(3)
        vols = []
        for _ in range(4000):
            q = spec.draw(rng)
            p = sharpness_to_exponent(q.apex_sharpness)
            vols.append(superellipsoid_volume_ml(
                q.endo_a, q.endo_b, q.endo_c * q.elongation, p))
        assert np.mean(vols) == pytest.approx(expected_cavity_volume(spec), rel=0.03)

    def test_calibration_solver_hits_targets(self):
        base = default_population("es")
        spec = calibrate_population(base, 90.0, 120.0)
        assert expected_cavity_volume(spec) == pytest.approx(90.0, abs=1e-6)
        assert expected_mass(spec) == pytest.approx(120.0, abs=1e-6)


class TestGenerateDataset:
    def test_deterministic(self):
        spec = default_population("ed")
        a = generate_dataset(spec, 6, seed=5)
        b = generate_dataset(spec, 6, seed=5)
        assert np.array_equal(a.vertices, b.vertices)
        assert a.manifest == b.manifest

    def test_per_mesh_streams_independent_of_n(self):
        spec = default_population("ed")
        a = generate_dataset(spec, 4, seed=5)
        b = generate_dataset(spec, 8, seed=5)
        assert np.array_equal(a.vertices, b.vertices[:4])

    def test_all_meshes_validate(self):
        spec = default_population("es")
        ds = generate_dataset(spec, 20, seed=1)
        for i in range(20):
            validate_mesh(ds.mesh(i))

    def test_manifest_contents(self):
        spec = default_population("ed")
        ds = generate_dataset(spec, 3, seed=9)
        man = ds.manifest
        assert man["n"] == 3 and man["seed"] == 9 and man["phase"] == "ed"
        assert man["spec_hash"] == spec.content_hash()
        assert len(man["params"]) == 3

    def test_rejection_budget(self):
        params = dict(default_population("ed").params)
        params["noise_amp"] = ParamDist(60.0, 0.0, 60.0, 60.0)
        params["wall_base"] = ParamDist(8.0, 0.0, 8.0, 8.0)
        bad = PopulationSpec(phase="ed", params=params)
        with pytest.raises(ConfigError, match="too wide"):
            generate_dataset(bad, 50, seed=0)


@pytest.mark.slow
class TestCalibratedPopulations:
    """Clinical-scale statistics of the shipped population specs."""

    def test_ed_targets(self, ed_population):
        _, vols, masses = ed_population
        assert abs(vols.mean() - 156.3) <= 5.0
        assert abs(masses.mean() - 123.0) / 123.0 <= 0.05

    def test_es_targets(self, es_population):
        _, vols, masses = es_population
        assert abs(vols.mean() - 83.9) <= 5.0
        assert abs(masses.mean() - 130.7) / 130.7 <= 0.05

    def test_phase_contrast(self, ed_population, es_population):
        ed_ds, ed_vols, _ = ed_population
        es_ds, es_vols, _ = es_population
        assert ed_vols.mean() > es_vols.mean()
        ed_wall = np.mean([p.wall_thickness_base for p in ed_ds.params])
        es_wall = np.mean([p.wall_thickness_base for p in es_ds.params])
        assert ed_wall < es_wall


class TestSplit:
    def test_reference_sizes(self):
        assert split_sizes(1034) == (724, 52, 258)
        assert split_sizes(20) == (14, 1, 5)

    @given(st.integers(min_value=20, max_value=5000))
    @settings(max_examples=60, deadline=None)
    def test_partition_property(self, n):
        tr, va, te = split_indices(n, seed=123)
        allidx = np.concatenate([tr, va, te])
        assert len(allidx) == n
        assert len(np.unique(allidx)) == n
        assert (len(tr), len(va), len(te)) == split_sizes(n)

    def test_too_small(self):
        with pytest.raises(ConfigError):
            split_indices(19, seed=0)

    def test_deterministic(self):
        a = split_indices(100, seed=4)
        b = split_indices(100, seed=4)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))


class TestStandardization:
    def _stack(self, n=30, seed=0):
        rng = np.random.default_rng(seed)
        return rng.normal([10.0, -4.0, 2.0], [3.0, 1.5, 7.0],
                          size=(n, 50, 3))

    def test_defining_property(self):
        arr = self._stack()
        stats = compute_standardization(arr)
        z = standardize(arr, stats)
        flat = z.reshape(-1, 3)
        assert np.allclose(flat.mean(axis=0), 0.0, atol=1e-9)
        assert np.allclose(flat.std(axis=0), 1.0, atol=1e-9)

    def test_round_trip(self):
        arr = self._stack(100, seed=5)
        stats = compute_standardization(arr)
        back = destandardize(standardize(arr, stats), stats)
        assert np.abs(back - arr).max() < 1e-9

    def test_constant_dataset_degenerate(self):
        arr = np.ones((10, 20, 3))
        with pytest.raises(ValidationError):
            compute_standardization(arr)

    def test_vertex_mode(self):
        arr = self._stack(40, seed=7)
        stats = compute_standardization(arr, mode="vertex")
        assert stats.mean.shape == (50, 3)
        z = standardize(arr, stats)
        assert np.allclose(z.mean(axis=0), 0.0, atol=1e-9)
        back = destandardize(z, stats)
        assert np.abs(back - arr).max() < 1e-9

    def test_serialization(self):
        stats = compute_standardization(self._stack())
        back = StandardizationStats.from_dict(stats.to_dict())
        assert np.array_equal(back.mean, stats.mean)
        assert np.array_equal(back.std, stats.std)
