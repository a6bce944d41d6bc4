"""beta-VAE over the shell template: architecture, gradients, training.

Gradient claims are vetted by the central-difference oracle; KL values
against the closed form and a Monte-Carlo estimate; the training recipe
against the loss-curve properties it must satisfy.
"""

import numpy as np
import pytest

from lvgen.errors import ConfigError, NumericalError, ValidationError
from lvgen.mesh import Mesh, build_shell_template
from lvgen.mesh.topology import TemplateTopology
from lvgen.nn import compare_gradients
from lvgen.synth import (compute_standardization, default_population,
                         destandardize, generate_dataset, standardize)
from lvgen.vae import (LatentGaussian, MeshHierarchy, MeshVae, VaeConfig,
                       grid_patch_assignment, grid_vertex_count,
                       kl_divergence, load_vae, pooling_matrix,
                       reparameterize, sample_from_vae_prior, save_vae,
                       train_vae)


@pytest.fixture(scope="module")
def toy_setup():
    """32 standardized meshes on the (6, 9) template."""
    topo = build_shell_template(6, 9)
    ds = generate_dataset(default_population("ed"), 32, seed=123,
                          topology=topo)
    stats = compute_standardization(ds.vertices)
    return topo, ds, stats, standardize(ds.vertices, stats)


@pytest.fixture(scope="module")
def desk_model(toy_setup):
    topo, _, _, xs = toy_setup
    return train_vae(xs, xs[:8], VaeConfig(epochs=60), seed=6, topology=topo)


class ZeroRng:
    def standard_normal(self, shape):
        return np.zeros(shape)


class TestVaeConfig:
    def test_defaults_match_recipe(self):
        cfg = VaeConfig()
        assert cfg.latent_dim == 16
        assert cfg.conv_channels == (16, 32, 64)
        assert cfg.cheb_order == 6
        assert cfg.beta == 0.001
        assert cfg.epochs == 250
        assert cfg.batch_size == 8
        assert cfg.learning_rate == 0.001

    def test_validation(self):
        with pytest.raises(ConfigError):
            VaeConfig(latent_dim=0)
        with pytest.raises(ConfigError):
            VaeConfig(conv_channels=())
        with pytest.raises(ConfigError):
            VaeConfig(learning_rate=0.0)
        with pytest.raises(ConfigError):
            VaeConfig(beta=-0.1)

    def test_dict_round_trip(self):
        cfg = VaeConfig(latent_dim=8, conv_channels=(4, 8), epochs=10)
        assert VaeConfig.from_dict(cfg.to_dict()) == cfg


class TestLatentGaussian:
    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            LatentGaussian(np.zeros(16), np.zeros(8))

    def test_non_finite(self):
        lv = np.zeros(16)
        lv[3] = np.nan
        with pytest.raises(ValidationError):
            LatentGaussian(np.zeros(16), lv)

    def test_clamp_range_enforced(self):
        with pytest.raises(ValidationError):
            LatentGaussian(np.zeros(4), np.full(4, 11.0))
        LatentGaussian(np.zeros(4), np.full(4, 10.0))


class TestHierarchy:
    def test_patch_assignment_hand_checked(self):
        # (4, 6) grid coarsens to (2, 3); indices worked out by hand
        # from the template layout (apex, ring-major grids, rim)
        a = grid_patch_assignment(4, 6)
        assert a.size == 56
        assert a[0] == 0                   # endo apex
        assert a[25] == 7                  # epi apex -> coarse Rc*Sc+1
        assert a[1] == 1                   # endo (r=1, s=0) -> (1, 0)
        assert a[8] == 1                   # endo (r=2, s=1) -> (1, 0)
        assert a[17] == 6                  # endo (r=3, s=4) -> (2, 2)
        assert a[42] == 13                 # epi (r=3, s=4)
        assert a[55] == 16                 # rim s=5 -> coarse rim s=2

    def test_pooling_matrix_row_stochastic(self):
        P = pooling_matrix(4, 6)
        assert P.shape == (17, 56)
        np.testing.assert_allclose(
            np.asarray(P.sum(axis=1)).ravel(), 1.0, atol=1e-12)
        x = np.full((56, 3), 7.25)
        np.testing.assert_allclose(P @ x, 7.25)

    def test_full_template_level_sizes(self):
        topo = build_shell_template(24, 36)
        h = MeshHierarchy(topo, 3)
        assert h.vertex_counts == [1766, 452, 119, 37]
        assert h.grid_dims == [(24, 36), (12, 18), (6, 9), (3, 5)]

    def test_laplacian_invariants(self, small_template):
        h = MeshHierarchy(small_template, 3)
        assert len(h.laplacians) == 3
        for L, lam in zip(h.laplacians, h.lambda_max):
            assert L.has_sorted_indices
            assert np.all(L.data != 0)
            assert 0 < lam <= 2.0

    def test_requires_grid_dims(self, small_template):
        bare = TemplateTopology(small_template.vertex_count,
                                small_template.faces,
                                small_template.surface_labels)
        with pytest.raises(ConfigError):
            MeshHierarchy(bare, 3)

    def test_over_pooling_rejected(self):
        topo = build_shell_template(2, 3)
        with pytest.raises(ConfigError, match="no longer shrinks"):
            MeshHierarchy(topo, 3)

    def test_deterministic(self, small_template):
        h1 = MeshHierarchy(small_template, 2)
        h2 = MeshHierarchy(small_template, 2)
        assert h1.lambda_max == h2.lambda_max
        assert (h1.laplacians[0] != h2.laplacians[0]).nnz == 0


@pytest.fixture(scope="module")
def untrained_model(toy_setup):
    topo, _, _, _ = toy_setup
    return MeshVae(VaeConfig(), topo, np.random.default_rng(3))


class TestEncodeDecode:
    @pytest.fixture()
    def model(self, untrained_model):
        return untrained_model

    def test_encode_deterministic_and_16_dim(self, model, toy_setup):
        _, _, _, xs = toy_setup
        g1, g2 = model.encode(xs[0]), model.encode(xs[0])
        assert g1.mu.shape == (16,)
        assert g1.logvar.shape == (16,)
        assert np.array_equal(g1.mu, g2.mu)
        assert np.array_equal(g1.logvar, g2.logvar)

    def test_batched_matches_single(self, model, toy_setup):
        _, _, _, xs = toy_setup
        gb = model.encode(xs[:4])
        for i in range(4):
            gi = model.encode(xs[i])
            np.testing.assert_allclose(gb.mu[i], gi.mu, atol=1e-12)
            np.testing.assert_allclose(gb.logvar[i], gi.logvar, atol=1e-12)
        z = np.random.default_rng(0).standard_normal((4, 16))
        yb = model.decode(z)
        for i in range(4):
            np.testing.assert_allclose(yb[i], model.decode(z[i]), atol=1e-12)

    def test_decode_shape_and_determinism(self, model, toy_setup):
        topo = toy_setup[0]
        z = np.random.default_rng(1).standard_normal(16)
        y = model.decode(z)
        assert y.shape == (topo.vertex_count, 3)
        assert np.array_equal(y, model.decode(z))

    def test_wrong_latent_dim(self, model):
        with pytest.raises(ValidationError):
            model.decode(np.zeros(15))

    def test_wrong_vertex_count(self, model):
        with pytest.raises(ValidationError):
            model.encode(np.zeros((50, 3)))

    def test_logvar_within_clamp(self, model, toy_setup):
        _, _, _, xs = toy_setup
        g = model.encode(xs[:8])
        assert g.logvar.min() >= -20.0 and g.logvar.max() <= 10.0


class TestReparameterize:
    def test_zero_eps_returns_mu(self):
        g = LatentGaussian(np.arange(16.0), np.zeros(16))
        assert np.array_equal(reparameterize(g, ZeroRng()), g.mu)

    def test_unit_logvar_statistics(self):
        # logvar = 0 means unit sigma: check MC moments at n = 1e5
        mu = np.array([0.7, -1.2, 0.0, 3.0])
        g = LatentGaussian(np.tile(mu, (10 ** 5, 1)),
                           np.zeros((10 ** 5, 4)))
        z = reparameterize(g, np.random.default_rng(12345))
        assert np.all(np.abs(z.mean(axis=0) - mu) < 0.01)
        assert np.all((z.std(axis=0) > 0.99) & (z.std(axis=0) < 1.01))


class TestKlDivergence:
    def test_posterior_equals_prior(self):
        assert kl_divergence(np.zeros(16), np.zeros(16)) == 0.0

    def test_unit_mean_one_dim(self):
        assert kl_divergence(np.array([1.0]), np.array([0.0])) == \
            pytest.approx(0.5, abs=1e-15)

    def test_matches_monte_carlo(self):
        # KL(q||p) = E_q[log q(z) - log p(z)] by direct sampling
        rng = np.random.default_rng(77)
        mu = rng.uniform(-1.5, 1.5, size=3)
        logvar = rng.uniform(-1.0, 1.0, size=3)
        sigma = np.exp(0.5 * logvar)
        z = mu + sigma * rng.standard_normal((10 ** 6, 3))
        log_q = -0.5 * (((z - mu) / sigma) ** 2 + logvar + np.log(2 * np.pi))
        log_p = -0.5 * (z ** 2 + np.log(2 * np.pi))
        mc = (log_q - log_p).sum(axis=1).mean()
        closed = kl_divergence(mu, logvar)
        assert closed == pytest.approx(mc, rel=0.02)

    def test_batch_shape(self):
        out = kl_divergence(np.zeros((5, 16)), np.zeros((5, 16)))
        assert out.shape == (5,)


def _spot_check_gradients(model, x, eps, n_per_tensor=24, h=1e-5, seed=0):
    """FD on a deterministic subset of components of every tensor.

    Same per-tensor metric as the gradcheck tool: max|a - f| over the
    probed components against the sum of their magnitude scales.
    """
    model.zero_grads()
    model.loss_and_grads(x, eps)
    analytic = {k: v.copy() for k, v in model.grads.items()}

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, arr in model.params.items():
        flat = arr.ravel()
        idx = rng.permutation(flat.size)[:n_per_tensor]
        diffs, a_mag, f_mag = [], [], []
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            lp = model.loss_only(x, eps)[0]
            flat[i] = orig - h
            lm = model.loss_only(x, eps)[0]
            flat[i] = orig
            fd = (lp - lm) / (2 * h)
            a = analytic[name].ravel()[i]
            diffs.append(abs(a - fd))
            a_mag.append(abs(a))
            f_mag.append(abs(fd))
        scale = max(a_mag) + max(f_mag)
        worst = max(worst, max(diffs) / scale if scale > 0 else max(diffs))
    return worst


class TestFullNetworkGradients:
    def test_joint_encoder_decoder_fd(self):
        # complete production architecture on a reduced (4, 6) grid;
        # the exhaustive sweep runs in the acceptance suite
        topo = build_shell_template(4, 6)
        rng = np.random.default_rng(7)
        model = MeshVae(VaeConfig(), topo, rng)
        x = rng.standard_normal((2, topo.vertex_count, 3)) * 0.5
        eps = rng.standard_normal((2, 16))
        worst = _spot_check_gradients(model, x, eps)
        assert worst < 1e-5

    def test_loss_only_matches_loss_and_grads(self):
        topo = build_shell_template(4, 6)
        rng = np.random.default_rng(8)
        model = MeshVae(VaeConfig(), topo, rng)
        x = rng.standard_normal((3, topo.vertex_count, 3)) * 0.5
        eps = rng.standard_normal((3, 16))
        l1 = model.loss_only(x, eps)
        model.zero_grads()
        l2 = model.loss_and_grads(x, eps)
        assert l1 == l2


class TestTraining:
    def test_loss_halves_and_moving_average_non_increasing(self, desk_model):
        l = np.asarray(desk_model.train_losses)
        assert len(l) == 60
        assert l[-1] <= 0.5 * l[0]
        ma = np.convolve(l, np.ones(10) / 10, mode="valid")
        assert np.all(np.diff(ma) <= 1e-3 * ma[0])

    def test_val_curve_recorded(self, desk_model):
        assert len(desk_model.val_losses) == 60
        assert all(np.isfinite(v) for v in desk_model.val_losses)

    def test_deterministic_replay(self, toy_setup):
        topo, _, _, xs = toy_setup
        cfg = VaeConfig(epochs=3)
        r1 = train_vae(xs[:8], None, cfg, seed=11, topology=topo)
        r2 = train_vae(xs[:8], None, cfg, seed=11, topology=topo)
        assert r1.train_losses == r2.train_losses
        for k, v in r1.model.params.items():
            assert np.array_equal(v, r2.model.params[k])

    def test_nan_data_aborts_with_diagnostic(self, toy_setup):
        topo, _, _, xs = toy_setup
        poisoned = xs[:8].copy()
        poisoned[2, 10, 1] = np.nan
        with pytest.raises(NumericalError, match="diverged at epoch"):
            train_vae(poisoned, None, VaeConfig(epochs=2), seed=1,
                      topology=topo)

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_divergent_learning_rate_aborts(self, toy_setup):
        topo, _, _, xs = toy_setup
        with pytest.raises(NumericalError, match="diverged"):
            train_vae(xs[:8], None,
                      VaeConfig(epochs=40, learning_rate=1e100),
                      seed=1, topology=topo)

    def test_overfit_single_mesh_below_1mm(self, toy_setup):
        topo, ds, stats, xs = toy_setup
        cfg = VaeConfig(epochs=600, batch_size=1, learning_rate=0.003)
        res = train_vae(xs[:1], None, cfg, seed=5, topology=topo)
        mu = res.model.encode(xs[0]).mu
        rec = destandardize(res.model.decode(mu), stats)
        rmse = np.sqrt(((rec - ds.vertices[0]) ** 2).mean())
        assert rmse < 1.0

    def test_posterior_means_bounded(self, desk_model, toy_setup):
        _, _, _, xs = toy_setup
        mus = desk_model.model.encode(xs).mu
        assert np.abs(mus).max() < 10.0


class TestPriorSampling:
    def test_shape_and_determinism(self, desk_model, toy_setup):
        _, _, stats, _ = toy_setup
        model = desk_model.model
        v1 = sample_from_vae_prior(model, stats, 6,
                                   np.random.default_rng(42))
        v2 = sample_from_vae_prior(model, stats, 6,
                                   np.random.default_rng(42))
        assert v1.shape == (6, model.topology.vertex_count, 3)
        assert np.array_equal(v1, v2)
        assert np.isfinite(v1).all()

    def test_batching_does_not_change_draws(self, desk_model, toy_setup):
        _, _, stats, _ = toy_setup
        model = desk_model.model
        a = sample_from_vae_prior(model, stats, 6,
                                  np.random.default_rng(9), batch_size=2)
        b = sample_from_vae_prior(model, stats, 6,
                                  np.random.default_rng(9), batch_size=6)
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestCheckpoint:
    def test_round_trip(self, desk_model, toy_setup, tmp_path):
        topo, _, stats, xs = toy_setup
        model = desk_model.model
        p = tmp_path / "vae_ed.mldm"
        save_vae(p, model, stats, seed=6, phase="ed")
        assert p.exists() and (tmp_path / "vae_ed.mldm.json").exists()

        m2, stats2, meta = load_vae(p, topo)
        assert meta["phase"] == "ed"
        assert meta["seed"] == 6
        assert m2.config == model.config
        np.testing.assert_array_equal(np.asarray(stats2.mean),
                                      np.asarray(stats.mean))
        z = np.random.default_rng(2).standard_normal((3, 16))
        assert np.array_equal(m2.decode(z), model.decode(z))
        g1, g2 = model.encode(xs[0]), m2.encode(xs[0])
        assert np.array_equal(g1.mu, g2.mu)

    def test_topology_mismatch_rejected(self, desk_model, toy_setup,
                                        tmp_path):
        _, _, stats, _ = toy_setup
        p = tmp_path / "vae.mldm"
        save_vae(p, desk_model.model, stats, seed=6, phase="ed")
        other = build_shell_template(8, 12)
        with pytest.raises(ValidationError, match="different template"):
            load_vae(p, other)

    def test_wrong_kind_rejected(self, desk_model, toy_setup, tmp_path):
        topo, _, stats, _ = toy_setup
        p = tmp_path / "vae.mldm"
        save_vae(p, desk_model.model, stats, seed=6, phase="ed")
        import json
        meta = json.loads((tmp_path / "vae.mldm.json").read_text())
        meta["kind"] = "other"
        (tmp_path / "vae.mldm.json").write_text(json.dumps(meta))
        with pytest.raises(ValidationError, match="not a mesh-vae"):
            load_vae(p, topo)

    def test_load_params_name_mismatch(self, toy_setup):
        topo = toy_setup[0]
        model = MeshVae(VaeConfig(), topo, np.random.default_rng(0))
        good = model.params
        bad = {k: v for k, v in list(good.items())[:-1]}
        with pytest.raises(ValidationError, match="names"):
            model.load_params(bad)
