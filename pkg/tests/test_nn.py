"""Layer kernels: hand-derived backward passes vs finite differences.

Every gradient claim is checked against the central-difference oracle in
lvgen.nn.gradcheck; closed-form values (swish at 1, Chebyshev identities)
come from independent evaluation, not from the code under test.
"""

import math

import numpy as np
import pytest
from scipy import sparse

from lvgen.errors import NumericalError, ParseError, ValidationError
from lvgen.mesh import build_shell_template
from lvgen.nn import (Adam, ChebConv, Dense, GraphPool, GraphUnpool,
                      Sequential, Swish1, adjacency_from_faces, check_model,
                      constant_lr, estimate_lambda_max,
                      finite_difference_gradients, laplacian_for_topology,
                      linear_decay_lr, normalized_laplacian, read_tensors,
                      scaled_laplacian, sigmoid, sinusoidal_embedding,
                      write_tensors)


def random_graph(n=20, p=0.25, seed=5):
    """Connected-ish undirected 0/1 adjacency, no isolated vertices."""
    rng = np.random.default_rng(seed)
    M = np.triu(rng.random((n, n)) < p, 1)
    M = (M | M.T).astype(float)
    for i in np.where(M.sum(1) == 0)[0]:
        M[i, (i + 1) % n] = M[(i + 1) % n, i] = 1.0
    return sparse.csr_matrix(M)


def patch_pool_matrix(n, patch):
    # disjoint contiguous patches, uniform weights
    idx = np.arange(n)
    rows = idx // patch
    n_coarse = int(rows.max()) + 1
    P = sparse.csr_matrix((np.ones(n), (rows, idx)), shape=(n_coarse, n))
    scale = np.asarray(P.sum(axis=1)).ravel()
    return (sparse.diags(1.0 / scale) @ P).tocsr()


@pytest.fixture(scope="module")
def graph20():
    A = random_graph(20)
    return A, scaled_laplacian(normalized_laplacian(A))


class TestDense:
    def test_identity_weights(self):
        rng = np.random.default_rng(0)
        d = Dense(5, 5, rng)
        d.params["W"][:] = np.eye(5)
        d.params["b"][:] = 0.0
        x = rng.standard_normal((3, 5))
        assert np.array_equal(d.forward(x), x)

    def test_zero_input_gives_bias(self):
        d = Dense(4, 6, np.random.default_rng(1))
        d.params["b"][:] = np.arange(6.0)
        y = d.forward(np.zeros((2, 4)))
        assert np.array_equal(y, np.tile(np.arange(6.0), (2, 1)))

    def test_gradient_16x16(self):
        rng = np.random.default_rng(2)
        d = Dense(16, 16, rng)
        rep = check_model(d, rng.standard_normal((4, 16)), h=1e-5)
        assert rep.max_rel_error < 1e-6

    def test_shape_mismatch(self):
        d = Dense(4, 3, np.random.default_rng(0))
        with pytest.raises(ValidationError):
            d.forward(np.zeros((2, 5)))
        with pytest.raises(ValidationError):
            d.forward(np.zeros(4))

    def test_nan_input_rejected(self):
        d = Dense(3, 3, np.random.default_rng(0))
        x = np.zeros((1, 3))
        x[0, 1] = np.nan
        with pytest.raises(NumericalError):
            d.forward(x)

    def test_backward_requires_forward(self):
        d = Dense(3, 2, np.random.default_rng(0))
        with pytest.raises(ValidationError):
            d.backward(np.zeros((1, 2)))
        d.forward(np.zeros((1, 3)))
        d.backward(np.zeros((1, 2)))
        with pytest.raises(ValidationError):
            d.backward(np.zeros((1, 2)))

    def test_forward_is_pure(self):
        rng = np.random.default_rng(3)
        d = Dense(8, 8, rng)
        x = rng.standard_normal((2, 8))
        assert np.array_equal(d.forward(x), d.forward(x))


class TestSwish1:
    def test_zero(self):
        assert Swish1().forward(np.array([0.0]))[0] == 0.0

    def test_value_at_one(self):
        # independent evaluation of 1 * (1 / (1 + e^-1))
        want = 1.0 / (1.0 + math.exp(-1.0))
        got = Swish1().forward(np.array([1.0]))[0]
        assert got == pytest.approx(want, abs=1e-12)
        assert got == pytest.approx(0.731059, abs=1e-6)

    def test_derivative_finite_differences(self):
        x = np.random.default_rng(11).standard_normal(1000) * 3.0
        s = sigmoid(x)
        analytic = s + x * s * (1.0 - s)
        h = 1e-5
        fd = ((x + h) * sigmoid(x + h) - (x - h) * sigmoid(x - h)) / (2 * h)
        rel = np.abs(analytic - fd) / np.maximum(
            np.maximum(np.abs(analytic), np.abs(fd)), 1.0)
        assert rel.max() < 1e-7

    def test_backward_matches_fd(self):
        rng = np.random.default_rng(4)
        rep = check_model(Swish1(), rng.standard_normal((5, 7)))
        assert rep.max_rel_error < 1e-6


class TestChebConv:
    def test_k1_is_pointwise_dense(self, graph20):
        _, S = graph20
        rng = np.random.default_rng(5)
        c = ChebConv(3, 4, 1, S, rng)
        x = rng.standard_normal((20, 3))
        want = x @ c.params["W"][0] + c.params["b"]
        np.testing.assert_allclose(c.forward(x), want, rtol=0, atol=1e-14)

    def test_identity_laplacian_sums_weights(self):
        # T_k(I) = I for every k, so filters collapse to x (sum_k W_k) + b
        S = sparse.identity(9, format="csr")
        rng = np.random.default_rng(6)
        c = ChebConv(2, 3, 4, S, rng)
        x = rng.standard_normal((9, 2))
        want = x @ c.params["W"].sum(axis=0) + c.params["b"]
        np.testing.assert_allclose(c.forward(x), want, atol=1e-12)

    def test_recurrence_matches_explicit_polynomials(self):
        # dense oracle: T_k(M) from explicit Chebyshev coefficients and
        # matrix powers, entirely outside the layer's recurrence
        rng = np.random.default_rng(7)
        V, K = 8, 6
        M = rng.standard_normal((V, V))
        M = (M + M.T) / 2
        M /= np.abs(np.linalg.eigvalsh(M)).max()   # spectrum in [-1, 1]
        c = ChebConv(2, 3, K, sparse.csr_matrix(M), rng)
        x = rng.standard_normal((V, 2))

        powers = [np.eye(V)]
        for _ in range(K - 1):
            powers.append(powers[-1] @ M)
        want = np.tile(c.params["b"], (V, 1))
        for k in range(K):
            coeffs = np.polynomial.chebyshev.cheb2poly(
                [0.0] * k + [1.0])       # T_k in the monomial basis
            Tk = sum(a * P for a, P in zip(coeffs, powers))
            want = want + Tk @ x @ c.params["W"][k]
        np.testing.assert_allclose(c.forward(x), want, atol=1e-10)

    def test_gradient_k3(self, graph20):
        _, S = graph20
        rng = np.random.default_rng(8)
        c = ChebConv(3, 4, 3, S, rng)
        rep = check_model(c, rng.standard_normal((20, 3)), h=1e-5)
        assert rep.max_rel_error < 1e-6

    def test_gradient_k6(self, graph20):
        _, S = graph20
        rng = np.random.default_rng(9)
        c = ChebConv(2, 2, 6, S, rng)
        rep = check_model(c, rng.standard_normal((20, 2)))
        assert rep.max_rel_error < 1e-6

    def test_dimension_mismatch(self, graph20):
        _, S = graph20
        c = ChebConv(3, 4, 3, S, np.random.default_rng(0))
        with pytest.raises(ValidationError):
            c.forward(np.zeros((19, 3)))

    def test_forward_is_pure(self, graph20):
        _, S = graph20
        rng = np.random.default_rng(10)
        c = ChebConv(2, 2, 4, S, rng)
        x = rng.standard_normal((20, 2))
        assert np.array_equal(c.forward(x), c.forward(x))


class TestPoolUnpool:
    def test_constant_field_preserved(self):
        P = patch_pool_matrix(20, 4)
        x = np.full((20, 3), 2.5)
        np.testing.assert_allclose(GraphPool(P).forward(x), 2.5)

    def test_identity_pool(self):
        P = sparse.identity(7, format="csr")
        x = np.random.default_rng(0).standard_normal((7, 2))
        assert np.array_equal(GraphPool(P).forward(x), x)

    def test_pool_unpool_identity_on_coarse(self):
        # disjoint patches: P @ U must be the exact identity matrix
        P = patch_pool_matrix(24, 4)
        U = GraphUnpool(P).U
        np.testing.assert_allclose((P @ U).toarray(), np.eye(6), atol=1e-12)
        xc = np.random.default_rng(1).standard_normal((6, 3))
        got = GraphPool(P).forward(GraphUnpool(P).forward(xc))
        np.testing.assert_allclose(got, xc, atol=1e-12)

    def test_non_row_stochastic_rejected(self):
        P = patch_pool_matrix(8, 2)
        bad = P * 1.5
        with pytest.raises(ValidationError):
            GraphPool(bad)
        with pytest.raises(ValidationError):
            GraphUnpool(bad)

    def test_unreachable_fine_vertex_rejected(self):
        # last fine vertex belongs to no patch: unpool cannot place it
        P = sparse.csr_matrix(np.array([[0.5, 0.5, 0.0]]))
        GraphPool(P)
        with pytest.raises(ValidationError):
            GraphUnpool(P)

    def test_gradients(self):
        P = patch_pool_matrix(12, 3)
        rng = np.random.default_rng(2)
        rep = check_model(GraphPool(P), rng.standard_normal((12, 2)))
        assert rep.max_rel_error < 1e-6
        rep = check_model(GraphUnpool(P), rng.standard_normal((4, 2)))
        assert rep.max_rel_error < 1e-6


class TestSinusoidalEmbedding:
    def test_t_zero(self):
        e = sinusoidal_embedding(0, 16)
        assert np.array_equal(e[:8], np.zeros(8))
        assert np.array_equal(e[8:], np.ones(8))

    def test_range_bounded(self):
        ts = np.unique(np.geomspace(1, 10 ** 6, 400).astype(int))
        E = sinusoidal_embedding(ts, 16)
        assert np.abs(E).max() <= 1.0

    def test_highest_frequency_separates_adjacent_steps(self):
        # component 0 carries frequency 1: sin(2) - sin(1)
        e1 = sinusoidal_embedding(1, 16)
        e2 = sinusoidal_embedding(2, 16)
        want = math.sin(2.0) - math.sin(1.0)
        assert e2[0] - e1[0] == pytest.approx(want, abs=1e-12)
        assert e2[0] - e1[0] == pytest.approx(0.0678, abs=1e-4)

    def test_odd_dim_rejected(self):
        with pytest.raises(ValidationError):
            sinusoidal_embedding(3, 15)

    def test_batch_shape(self):
        E = sinusoidal_embedding(np.array([0, 1, 2]), 8)
        assert E.shape == (3, 8)
        assert np.array_equal(E[1], sinusoidal_embedding(1, 8))


class TestAdam:
    def test_zero_gradient_no_update_and_moment_decay(self):
        w = np.ones(3)
        opt = Adam({"w": w}, lr=0.1)
        opt.step({"w": np.ones(3)})
        m_after_first = opt.m["w"].copy()
        w_snapshot = w.copy()
        opt.step({"w": np.zeros(3)})
        np.testing.assert_allclose(opt.m["w"], 0.9 * m_after_first)
        # moments persist, so the parameter still drifts; a fresh optimizer
        # with zero gradient must leave parameters untouched
        w2 = np.ones(3)
        opt2 = Adam({"w": w2}, lr=0.1)
        opt2.step({"w": np.zeros(3)})
        assert np.array_equal(w2, np.ones(3))
        assert not np.array_equal(w, w_snapshot)

    def test_first_step_magnitude_is_lr(self):
        # bias correction cancels: update = lr * g / (|g| + eps)
        w = np.array([5.0, -2.0, 0.3])
        opt = Adam({"w": w}, lr=0.01)
        opt.step({"w": np.array([3.0, -7.0, 0.5])})
        delta = np.array([5.0, -2.0, 0.3]) - w
        np.testing.assert_allclose(np.abs(delta), 0.01, rtol=1e-6)
        assert np.all(np.sign(delta) == np.sign([3.0, -7.0, 0.5]))

    def test_converges_on_quadratic(self):
        # f(w) = ||w||^2 from w0 = 1; lr 0.01 lets 200 steps traverse
        # the unit interval with room to settle
        w = np.ones(4)
        opt = Adam({"w": w}, lr=0.01)
        for _ in range(200):
            opt.step({"w": 2.0 * w})
        assert np.linalg.norm(w) < 0.1

    def test_key_and_shape_mismatch(self):
        opt = Adam({"w": np.ones(3)})
        with pytest.raises(ValidationError):
            opt.step({"v": np.ones(3)})
        with pytest.raises(ValidationError):
            opt.step({"w": np.ones(4)})

    def test_non_finite_gradient(self):
        opt = Adam({"w": np.ones(2)})
        with pytest.raises(NumericalError):
            opt.step({"w": np.array([1.0, np.inf])})

    def test_schedules(self):
        sched = linear_decay_lr(0.5, 100)
        assert sched(0) == 0.5
        assert sched(50) == pytest.approx(0.25)
        assert sched(100) == 0.0
        assert sched(250) == 0.0
        assert constant_lr(0.3)(12345) == 0.3
        with pytest.raises(ValidationError):
            linear_decay_lr(0.1, 0)


class BrokenDense(Dense):
    """Negative control: sign-flipped weight gradient."""

    def backward(self, gy):
        x = self._take_cache()
        self.grads["W"] += -(x.T @ gy)
        self.grads["b"] += gy.sum(axis=0)
        return gy @ self.params["W"].T


class TestGradientChecker:
    def test_linear_layer_passes(self):
        rng = np.random.default_rng(12)
        rep = check_model(Dense(6, 5, rng), rng.standard_normal((3, 6)))
        assert rep.passed(tol=1e-6)

    def test_corrupted_backward_fails(self):
        rng = np.random.default_rng(13)
        rep = check_model(BrokenDense(6, 5, rng), rng.standard_normal((3, 6)))
        assert not rep.passed(tol=1e-5)
        assert rep.max_rel_error > 0.5
        assert rep.worst_tensor == "W"

    def test_encoder_style_stack_passes(self, graph20):
        A, S = graph20
        P = patch_pool_matrix(20, 4)
        C = (P @ A @ P.T).toarray()
        np.fill_diagonal(C, 0.0)
        Sc = scaled_laplacian(normalized_laplacian(
            sparse.csr_matrix((C > 0).astype(float))))
        rng = np.random.default_rng(14)
        stack = Sequential([
            ChebConv(2, 3, 3, S, rng), Swish1(), GraphPool(P),
            ChebConv(3, 3, 2, Sc, rng), Swish1(), GraphUnpool(P),
        ])
        rep = check_model(stack, rng.standard_normal((20, 2)))
        assert rep.passed(tol=1e-5)
        assert rep.n_evaluations == 2 * rep.n_components

    def test_report_summary_names_worst(self):
        rng = np.random.default_rng(15)
        rep = check_model(BrokenDense(4, 3, rng), rng.standard_normal((2, 4)))
        assert "W" in rep.summary()
        assert "max" in rep.summary()

    def test_fd_primitive_on_quadratic(self):
        # d/dw sum(w^2) = 2w, exactly representable by central differences
        w = np.array([1.0, -2.0, 0.5])
        fd = finite_difference_gradients(
            lambda: float(np.sum(w ** 2)), {"w": w}, h=1e-5)
        np.testing.assert_allclose(fd["w"], 2.0 * w, atol=1e-9)
        assert np.array_equal(w, [1.0, -2.0, 0.5])   # restored exactly


class TestSequential:
    def test_param_namespacing(self):
        rng = np.random.default_rng(16)
        seq = Sequential([Dense(3, 4, rng), Swish1(), Dense(4, 2, rng)])
        assert set(seq.params) == {"0.W", "0.b", "2.W", "2.b"}
        assert seq.params["0.W"] is seq.layers[0].params["W"]

    def test_zero_grads(self):
        rng = np.random.default_rng(17)
        seq = Sequential([Dense(3, 3, rng)])
        x = rng.standard_normal((2, 3))
        seq.forward(x)
        seq.backward(np.ones((2, 3)))
        assert np.abs(seq.grads["0.W"]).max() > 0
        seq.zero_grads()
        assert np.abs(seq.grads["0.W"]).max() == 0


class TestGraphOperators:
    def test_adjacency_from_template(self, small_template):
        A = adjacency_from_faces(small_template.vertex_count,
                                 small_template.faces)
        assert (A != A.T).nnz == 0
        assert A.diagonal().max() == 0.0
        # endo apex (vertex 0) touches exactly the S first-ring vertices
        assert A[0].nnz == 9

    def test_normalized_laplacian_spectrum(self):
        A = random_graph(16, seed=21)
        L = normalized_laplacian(A)
        dense = L.toarray()
        np.testing.assert_allclose(dense, dense.T, atol=1e-15)
        np.testing.assert_allclose(np.diag(dense), 1.0)
        eigs = np.linalg.eigvalsh(dense)
        assert eigs.min() > -1e-12
        assert eigs.max() <= 2.0 + 1e-12

    def test_isolated_vertex_rejected(self):
        A = sparse.csr_matrix(
            np.array([[0.0, 1, 0], [1, 0, 0], [0, 0, 0]]))
        with pytest.raises(ValidationError):
            normalized_laplacian(A)

    def test_power_iteration_accuracy(self):
        L = normalized_laplacian(random_graph(30, seed=3))
        est = estimate_lambda_max(L)
        true = np.linalg.eigvalsh(L.toarray()).max()
        assert est <= true + 1e-12          # Rayleigh quotient bound
        assert est > true * (1.0 - 1e-3)

    def test_power_iteration_on_template(self, small_template):
        # ring symmetry clusters the top of the spectrum; 50 steps land
        # within about a percent, which only loosens the [-1, 1] rescale
        S, lam = laplacian_for_topology(small_template)
        A = adjacency_from_faces(small_template.vertex_count,
                                 small_template.faces)
        true = np.linalg.eigvalsh(
            normalized_laplacian(A).toarray()).max()
        assert lam <= true + 1e-12
        assert lam > 0.97 * true
        eigs = np.linalg.eigvalsh(S.toarray())
        assert eigs.min() >= -1.0 - 1e-9
        assert eigs.max() <= 1.05

    def test_csr_invariants(self, small_template):
        S, _ = laplacian_for_topology(small_template)
        assert S.has_sorted_indices
        assert np.all(S.data != 0.0)

    def test_deterministic(self):
        L = normalized_laplacian(random_graph(25, seed=9))
        assert estimate_lambda_max(L) == estimate_lambda_max(L)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(30)
        tensors = {
            "encoder.W": rng.standard_normal((4, 3, 2)),
            "b": rng.standard_normal(5),
            "scalar": np.array(3.25),
        }
        p = tmp_path / "model.mldm"
        write_tensors(p, tensors)
        back = read_tensors(p)
        assert list(back) == list(tensors)   # insertion order preserved
        for k in tensors:
            assert np.array_equal(back[k], tensors[k])
            assert back[k].dtype == np.float64

    def test_rewrite_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(31)
        p1, p2 = tmp_path / "a.mldm", tmp_path / "b.mldm"
        write_tensors(p1, {"x": rng.standard_normal((3, 3)),
                           "y": rng.standard_normal(2)})
        write_tensors(p2, read_tensors(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.mldm"
        p.write_bytes(b"NOPE" + bytes(10))
        with pytest.raises(ParseError, match="magic"):
            read_tensors(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "t.mldm"
        write_tensors(p, {"w": np.ones((4, 4))})
        blob = p.read_bytes()
        p.write_bytes(blob[:-9])
        with pytest.raises(ParseError, match="truncated"):
            read_tensors(p)

    def test_trailing_bytes(self, tmp_path):
        p = tmp_path / "t.mldm"
        write_tensors(p, {"w": np.ones(2)})
        p.write_bytes(p.read_bytes() + b"\x00")
        with pytest.raises(ParseError, match="trailing"):
            read_tensors(p)

    def test_unsupported_version(self, tmp_path):
        p = tmp_path / "v.mldm"
        write_tensors(p, {"w": np.ones(1)})
        blob = bytearray(p.read_bytes())
        blob[4] = 99
        p.write_bytes(bytes(blob))
        with pytest.raises(ParseError, match="version"):
            read_tensors(p)

    def test_error_carries_path(self, tmp_path):
        p = tmp_path / "named.mldm"
        p.write_bytes(b"MLDM")
        with pytest.raises(ParseError, match="named.mldm"):
            read_tensors(p)
