import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairspec import tensor
from oracles import jacobi_spectral_norm, jacobi_svd


def rng(seed):
    return np.random.Generator(np.random.Philox(key=seed))


class TestSpectralNorm:
    def test_identity(self):
        assert tensor.spectral_norm(np.eye(2)) == pytest.approx(1.0, abs=1e-12)

    def test_diagonal(self):
        assert tensor.spectral_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0, abs=1e-10)

    def test_matches_jacobi_oracle_5x5(self):
        m = rng(42).normal(size=(5, 5))
        assert tensor.spectral_norm(m) == pytest.approx(jacobi_spectral_norm(m), abs=1e-8)

    def test_transpose_invariance(self):
        for seed in range(20):
            m = rng(seed).normal(size=(4, 6))
            assert abs(tensor.spectral_norm(m) - tensor.spectral_norm(m.T)) <= 1e-10

    def test_zero_matrix(self):
        assert tensor.spectral_norm(np.zeros((3, 3))) == 0.0

    def test_nonconvergence_error_carries_state(self):
        m = rng(0).normal(size=(5, 5))
        with pytest.raises(tensor.PowerIterationError) as exc:
            tensor.spectral_norm(m, tol=1e-10, max_iter=1)
        assert exc.value.sigma > 0.0
        assert exc.value.v.shape == (5,)
        assert np.isfinite(exc.value.residual)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            tensor.spectral_norm(np.array([[np.nan, 0.0], [0.0, 1.0]]))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            tensor.spectral_norm(np.zeros((0, 3)))

    def test_adversarial_start_vector(self):
        # the all-ones start lies in the null space of this matrix
        m = np.array([[1.0, -1.0], [-1.0, 1.0]])
        assert tensor.spectral_norm(m) == pytest.approx(2.0, abs=1e-9)


class TestTopSingularPair:
    def test_diagonal(self):
        t = tensor.top_singular_pair(np.diag([3.0, 1.0]))
        assert t.sigma == pytest.approx(3.0, abs=1e-10)
        assert np.allclose(t.u, [1.0, 0.0], atol=1e-9)
        assert np.allclose(t.v, [1.0, 0.0], atol=1e-9)

    def test_rank_one(self):
        a = np.array([2.0, 1.0, 2.0])
        b = np.array([3.0, 4.0])
        t = tensor.top_singular_pair(np.outer(a, b))
        assert t.sigma == pytest.approx(np.linalg.norm(a) * np.linalg.norm(b), rel=1e-10)
        assert np.allclose(t.u, a / np.linalg.norm(a), atol=1e-9)
        assert np.allclose(t.v, b / np.linalg.norm(b), atol=1e-9)

    def test_matches_jacobi_oracle_6x6(self):
        m = rng(7).normal(size=(6, 6))
        t = tensor.top_singular_pair(m)
        u_o, s_o, v_o = jacobi_svd(m)
        assert t.sigma == pytest.approx(s_o[0], abs=1e-8)
        assert abs(float(t.u @ u_o[:, 0])) >= 1.0 - 1e-8
        assert abs(float(t.v @ v_o[:, 0])) >= 1.0 - 1e-8

    def test_unit_vectors_and_residual(self):
        for seed in range(10):
            m = rng(seed).normal(size=(5, 4))
            t = tensor.top_singular_pair(m)
            assert abs(np.linalg.norm(t.u) - 1.0) <= 1e-10
            assert abs(np.linalg.norm(t.v) - 1.0) <= 1e-10
            assert np.linalg.norm(m @ t.v - t.sigma * t.u) <= 1e-10 * t.sigma

    def test_sign_convention(self):
        for seed in range(10):
            m = rng(seed + 100).normal(size=(4, 4))
            t = tensor.top_singular_pair(m)
            nz = np.nonzero(t.v)[0]
            assert t.v[nz[0]] > 0.0


class TestSpectralGrad:
    def test_diagonal(self):
        g = tensor.spectral_grad(np.diag([3.0, 1.0]))
        expected = np.zeros((2, 2))
        expected[0, 0] = 1.0
        assert np.allclose(g, expected, atol=1e-9)

    def test_finite_difference_nonnegative_4x4(self):
        m = rng(5).uniform(0.1, 1.0, size=(4, 4))
        g = tensor.spectral_grad(m)
        h = 1e-6
        for i in range(4):
            for j in range(4):
                bumped = m.copy()
                bumped[i, j] += h
                dropped = m.copy()
                dropped[i, j] -= h
                fd = (jacobi_spectral_norm(bumped) - jacobi_spectral_norm(dropped)) / (2 * h)
                assert abs(fd - g[i, j]) <= 1e-4

    def test_symmetric_positive_gradient_symmetric(self):
        a = rng(9).uniform(0.1, 1.0, size=(4, 4))
        m = a + a.T
        g = tensor.spectral_grad(m)
        assert np.abs(g - g.T).max() <= 1e-8

    def test_degenerate_is_error(self):
        with pytest.raises(tensor.DegenerateSpectrumError):
            tensor.spectral_grad(np.eye(3))

    def test_zero_matrix_is_degenerate(self):
        with pytest.raises(tensor.DegenerateSpectrumError):
            tensor.spectral_grad(np.zeros((3, 3)))

    def test_nonnegative_input_nonnegative_gradient(self):
        for seed in range(50):
            m = rng(seed).uniform(0.0, 1.0, size=(5, 5))
            np.fill_diagonal(m, 0.0)
            g = tensor.spectral_grad(m)
            assert g.min() >= -1e-10


class TestElementaryNorms:
    def test_frobenius_zero(self):
        assert tensor.frobenius_norm(np.zeros((2, 3))) == 0.0

    def test_frobenius_identity(self):
        assert tensor.frobenius_norm(np.eye(3)) == pytest.approx(np.sqrt(3.0), rel=1e-14)

    def test_frobenius_matches_summation_oracle(self):
        m = rng(3).normal(size=(4, 4))
        total = 0.0
        for i in range(4):
            for j in range(4):
                total += m[i, j] ** 2
        assert tensor.frobenius_norm(m) == pytest.approx(np.sqrt(total), abs=1e-12)

    def test_l1_zero(self):
        assert tensor.l1_matrix_norm(np.zeros((2, 2))) == 0.0

    def test_l1_permutation(self):
        assert tensor.l1_matrix_norm(np.array([[0.0, 1.0], [1.0, 0.0]])) == 1.0

    def test_l1_matches_column_loop_oracle(self):
        m = rng(11).normal(size=(5, 5))
        best = 0.0
        for j in range(5):
            col = 0.0
            for i in range(5):
                col += abs(m[i, j])
            best = max(best, col)
        assert tensor.l1_matrix_norm(m) == best


class TestNormInequalities:
    def test_l1_spectral_sandwich_square_matrices(self):
        # sqrt(cols) bounds hold in both directions for square matrices
        for seed in range(1000):
            g = rng(seed)
            n = int(g.integers(2, 8))
            m = g.normal(size=(n, n))
            l1 = tensor.l1_matrix_norm(m)
            spec = tensor.spectral_norm(m)
            root = np.sqrt(n)
            assert l1 <= root * spec + 1e-9
            assert spec <= root * l1 + 1e-9

    def test_spectral_grad_fd_on_gapped_matrices(self):
        checked = 0
        seed = 0
        while checked < 100:
            seed += 1
            g = rng(seed + 5000)
            n = int(g.integers(3, 6))
            m = g.normal(size=(n, n))
            u, s, v = jacobi_svd(m)
            if s[0] - s[1] <= 0.01:
                continue
            grad = tensor.spectral_grad(m)
            h = 1e-6
            direction = rng(seed).normal(size=(n, n))
            direction /= np.linalg.norm(direction)
            fd = (
                jacobi_spectral_norm(m + h * direction)
                - jacobi_spectral_norm(m - h * direction)
            ) / (2 * h)
            analytic = float((grad * direction).sum())
            assert abs(fd - analytic) <= 1e-4 * max(1.0, abs(analytic))
            checked += 1


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=2, max_value=6))
def test_power_iteration_agrees_with_jacobi(seed, n):
    m = rng(seed).normal(size=(n, n))
    assert tensor.spectral_norm(m) == pytest.approx(jacobi_spectral_norm(m), abs=1e-8)
