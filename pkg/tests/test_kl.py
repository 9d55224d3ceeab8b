import math

import numpy as np
import pytest

from nlrom.kl import (KL_MEAN, assemble_covariance_operator, evaluate_path, kl_spectrum,
                      solve_kl, sq_exp_kernel, stoch_poisson_solve, truncation_index)
from nlrom.mesh_fem import apply_dirichlet, assemble_advdiff, build_unit_square_mesh, solve
from nlrom.snapshots import sample_gaussian

# Leading eigenvalues of the continuous operator 10 exp(-4|x-y|^2) on the unit
# square. The kernel is separable, so these are 10 * l_i * l_j with l the
# spectrum of exp(-4(s-t)^2) on [0, 1], itself from a 401-point trapezoid
# Nystrom solve (frozen here).
SEPARABLE_EIGS = [4.2522819, 1.74747137, 1.74747137, 0.71812176, 0.43674856, 0.43674856]
SEPARABLE_K90 = 6  # cumulative fractions 0.8902 at 5, 0.9339 at 6


@pytest.fixture(scope="module")
def kl32():
    mesh = build_unit_square_mesh(32)
    C, M = assemble_covariance_operator(mesh)
    lam, Z = kl_spectrum(C, M)
    return mesh, C, M, lam, Z


class TestCovariance:
    def test_symmetric(self, kl32):
        _, C, *_ = kl32
        assert np.abs(C - C.T).max() <= 1e-12 * np.abs(C).max()

    def test_constant_kernel_rank_one(self):
        mesh = build_unit_square_mesh(8)
        C, M = assemble_covariance_operator(mesh, lambda x, y: np.full((len(x), len(y)), 3.0))
        w = np.asarray(M.sum(axis=1)).ravel()
        assert np.allclose(C, 3.0 * np.outer(w, w), rtol=0, atol=1e-14)
        s = np.linalg.svd(C, compute_uv=False)
        assert s[1] <= 1e-10 * s[0]

    def test_trace(self, kl32):
        _, _, _, lam, _ = kl32
        assert abs(lam.sum() - 10.0) <= 0.02 * 10.0

    def test_kernel_values(self):
        x = np.array([[0.0, 0.0], [0.5, 0.0]])
        K = sq_exp_kernel(x, x)
        assert K[0, 0] == 10.0
        assert K[0, 1] == pytest.approx(10 * math.exp(-1.0), rel=1e-14)


class TestSpectrum:
    def test_matches_separable_oracle(self, kl32):
        _, _, _, lam, _ = kl32
        assert np.allclose(lam[:6], SEPARABLE_EIGS, rtol=1e-2)

    @pytest.mark.parametrize("nx", [16, 32])
    def test_truncation_index_mesh_robust(self, nx):
        mesh = build_unit_square_mesh(nx)
        basis = solve_kl(*assemble_covariance_operator(mesh), 0.9)
        assert basis.k == SEPARABLE_K90

    def test_residuals_and_orthonormality(self, kl32):
        _, C, M, lam, Z = kl32
        k = 10
        R = C @ Z[:, :k] - (M @ Z[:, :k]) * lam[:k]
        assert np.abs(R).max() <= 1e-8 * lam[0]
        G = Z[:, :k].T @ (M @ Z[:, :k])
        assert np.abs(G - np.eye(k)).max() <= 1e-8

    def test_sign_convention(self, kl32):
        *_, Z = kl32
        for j in range(8):
            assert Z[np.argmax(np.abs(Z[:, j])), j] > 0

    def test_explained_fraction_monotone(self, kl32):
        _, _, _, lam, _ = kl32
        frac = np.cumsum(lam) / 10
        assert np.all(np.diff(frac[lam > 0]) >= 0)

    def test_first_mode_only(self, kl32):
        _, _, _, lam, _ = kl32
        assert truncation_index(lam, lam[0] / 10 - 1e-12) == 1

    def test_unreachable_target(self):
        with pytest.raises(ValueError):
            truncation_index(np.array([1.0, 0.5]), 0.9)
        with pytest.raises(ValueError):
            truncation_index(np.array([1.0]), 1.0)

    def test_basis_invariants(self, kl32):
        _, C, M, *_ = kl32
        b = solve_kl(C, M)
        assert np.all(b.eigenvalues > 0) and np.all(np.diff(b.eigenvalues) <= 0)
        assert 0.9 <= b.explained_fraction <= 1.0
        assert b.mean == -math.log(10)


class TestPaths:
    def test_zero_coefficients(self, kl32):
        mesh, C, M, *_ = kl32
        b = solve_kl(C, M)
        assert np.all(evaluate_path(b, np.zeros(b.k)) == KL_MEAN)

    def test_affine(self, kl32):
        _, C, M, *_ = kl32
        b = solve_kl(C, M)
        rng = np.random.default_rng(0)
        mu, nu = rng.standard_normal(b.k), rng.standard_normal(b.k)
        lhs = evaluate_path(b, mu + nu) - evaluate_path(b, nu)
        assert np.allclose(lhs, evaluate_path(b, mu) - KL_MEAN, atol=1e-12)

    def test_batch_columns(self, kl32):
        _, C, M, *_ = kl32
        b = solve_kl(C, M)
        mus = np.random.default_rng(1).standard_normal((b.k, 3))
        P = evaluate_path(b, mus)
        assert np.allclose(P[:, 1], evaluate_path(b, mus[:, 1]), atol=1e-13)

    def test_dimension_mismatch(self, kl32):
        _, C, M, *_ = kl32
        with pytest.raises(ValueError):
            evaluate_path(solve_kl(C, M), np.zeros(3))

    def test_monte_carlo_covariance(self, kl32):
        mesh, C, M, *_ = kl32
        b = solve_kl(C, M)
        N = 5000
        paths = evaluate_path(b, sample_gaussian(b.k, N, seed=17))
        i, j = 200, 700
        a, c = paths[i] - KL_MEAN, paths[j] - KL_MEAN
        prod = a * c
        est, se = prod.mean(), prod.std(ddof=1) / math.sqrt(N)
        exact = float(np.sum(b.eigenvalues * b.eigenfunctions[i] * b.eigenfunctions[j]))
        assert abs(est - exact) < 3 * se


class TestStochasticPoisson:
    def test_mean_field_is_scaled_poisson(self, kl32):
        mesh, C, M, *_ = kl32
        b = solve_kl(C, M)
        u = stoch_poisson_solve(b, np.zeros(b.k), mesh)
        rhs = np.sum(mesh.nodes**2, axis=1)
        unit = solve(apply_dirichlet(mesh, assemble_advdiff(mesh, 1.0, (0, 0), rhs), 0.0))
        assert np.allclose(u, 10 * unit, rtol=1e-9, atol=1e-14)

    def test_boundary_and_sign(self, kl32):
        mesh, C, M, *_ = kl32
        b = solve_kl(C, M)
        mus = sample_gaussian(b.k, 5, seed=3)
        for j in range(5):
            u = stoch_poisson_solve(b, mus[:, j], mesh)
            assert np.all(u[mesh.boundary_mask] == 0.0)
            assert u.min() >= -1e-12 * u.max()
