import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlrom.mesh_fem import build_interval_mesh
from nlrom.pod import (PodBasis, curve_to_csv, error_dof_curve, hat_width_lower_bound, pod_fit,
                       projection_errors)
from nlrom.problems import hat_snapshot, orthogonal_hat_params


def hat_sample(n, extra=200, seed=0):
    """Hats on a 512-cell grid: the 2n orthogonal ones plus random admissible ones."""
    grid = build_interval_mesh(-2, 2, 512)
    rng = np.random.default_rng(seed)
    params = list(orthogonal_hat_params(n))
    while len(params) < 2 * n + extra:
        m1, m2 = rng.uniform(-1, 1), rng.uniform(0, 1)
        if -1 <= m1 - m2 and m1 + m2 <= 1:
            params.append((m1, m2))
    return grid, np.column_stack([hat_snapshot(a, b, grid) for a, b in params])


class TestFit:
    def test_orthonormal(self):
        U = np.random.default_rng(0).standard_normal((50, 20))
        b = pod_fit(U, 8)
        assert np.abs(b.V.T @ b.V - np.eye(8)).max() <= 1e-10
        assert np.all(np.diff(b.singular_values) <= 0) and np.all(b.singular_values >= 0)

    def test_orthogonal_columns_exact(self):
        Q, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((30, 5)))
        U = Q * np.array([5.0, 4, 3, 2, 1])
        assert projection_errors(pod_fit(U, 5), U).sup <= 1e-12

    def test_rank_one(self):
        v = np.random.default_rng(2).standard_normal(40)
        U = np.outer(v, [1.0, -2.0, 0.5, 3.0])
        assert projection_errors(pod_fit(U, 1), U).sup <= 1e-12

    def test_rank_deficient_falls_back(self):
        # repeated columns make the Gram route lose accuracy in the tail
        v = np.random.default_rng(3).standard_normal((40, 2))
        U = np.hstack([v, v, v])
        b = pod_fit(U, 2)
        assert np.abs(b.V.T @ b.V - np.eye(2)).max() <= 1e-10
        b4 = pod_fit(U, 4)
        assert np.abs(b4.V.T @ b4.V - np.eye(4)).max() <= 1e-10

    def test_matches_svd(self):
        U = np.random.default_rng(4).standard_normal((60, 25))
        s = np.linalg.svd(U, compute_uv=False)
        assert np.allclose(pod_fit(U, 3).singular_values[:25], s, rtol=1e-10)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(5, 40), st.integers(2, 15), st.integers(0, 2**31))
    def test_eckart_young(self, n_h, N, seed):
        U = np.random.default_rng(seed).standard_normal((n_h, N))
        n = max(1, min(n_h, N) // 2)
        b = pod_fit(U, n)
        resid = np.linalg.norm(U - b.project(U)) ** 2
        tail = np.sum(b.singular_values[n:] ** 2)
        assert resid == pytest.approx(tail, rel=1e-8, abs=1e-8 * np.sum(U**2))
        # the residual is orthogonal to the basis
        assert np.abs(b.V.T @ (U - b.project(U))).max() <= 1e-10 * np.abs(U).max() * N

    def test_range_check(self):
        with pytest.raises(ValueError):
            pod_fit(np.ones((4, 3)), 4)
        with pytest.raises(ValueError):
            pod_fit(np.ones((4, 3)), 0)


class TestErrors:
    def test_scale_invariant(self):
        rng = np.random.default_rng(5)
        U = rng.standard_normal((30, 10))
        b = pod_fit(U, 3)
        E = rng.standard_normal((30, 4))
        assert np.allclose(projection_errors(b, E).per_column,
                           projection_errors(b, E * [1, 10, 0.1, -3]).per_column, rtol=1e-12)

    def test_monotone_in_n(self):
        rng = np.random.default_rng(6)
        U, E = rng.standard_normal((30, 12)), rng.standard_normal((30, 5))
        full = pod_fit(U, 12)
        means = [projection_errors(PodBasis(full.V[:, :n], full.singular_values), E).mean for n in range(1, 13)]
        assert np.all(np.diff(means) <= 1e-14)

    def test_zero_column(self):
        with pytest.raises(ValueError):
            projection_errors(pod_fit(np.eye(3), 1), np.zeros((3, 1)))

    def test_mass_norm(self):
        grid = build_interval_mesh(0, 1, 10)
        U = np.random.default_rng(7).standard_normal((11, 6))
        b = pod_fit(U, 2)
        e = projection_errors(b, U, grid.mass, relative=False).per_column
        r = U - b.project(U)
        assert np.allclose(e, np.sqrt(np.einsum("ij,ij->j", r, grid.mass @ r)), rtol=1e-12)


class TestCurve:
    def test_table(self):
        rng = np.random.default_rng(8)
        Ut, Us = rng.standard_normal((20, 15)), rng.standard_normal((20, 6))
        rows = error_dof_curve(Ut, Us, [1, 2, 5, 10], mass=np.eye(20))
        assert [r["n"] for r in rows] == [1, 2, 5, 10]
        assert [r["dof"] for r in rows] == [20, 40, 100, 200]
        assert np.all(np.diff([r["train_mre"] for r in rows]) <= 1e-14)
        assert all(r["test_mre"] >= 0 for r in rows)
        assert all(r["train_mre_l2"] == pytest.approx(r["train_mre"], rel=1e-12) for r in rows)

    def test_increasing_required(self):
        with pytest.raises(ValueError):
            error_dof_curve(np.eye(4), np.eye(4), [2, 2])

    def test_csv_lossless(self):
        rng = np.random.default_rng(9)
        rows = error_dof_curve(rng.standard_normal((12, 8)), rng.standard_normal((12, 3)), [1, 3])
        text = curve_to_csv(rows)
        parsed = list(csv.DictReader(io.StringIO(text)))
        assert text.splitlines()[0] == "n,dof,train_mre,test_mre"
        for r, p in zip(rows, parsed):
            assert int(p["n"]) == r["n"] and float(p["test_mre"]) == r["test_mre"]


class TestHatWidth:
    def test_values(self):
        assert hat_width_lower_bound(1) == pytest.approx(1 / (2 * math.sqrt(6)))
        assert hat_width_lower_bound(1) == pytest.approx(0.2041, abs=1e-4)
        assert hat_width_lower_bound(4) == pytest.approx(hat_width_lower_bound(1) / 8, rel=1e-15)
        with pytest.raises(ValueError):
            hat_width_lower_bound(0)

    @pytest.mark.parametrize("n", [2, 4, 8])
    def test_pod_respects_bound(self, n):
        grid, U = hat_sample(n)
        b = pod_fit(U, n)
        sup = projection_errors(b, U, grid.mass, relative=False).sup
        assert sup >= 0.9 * hat_width_lower_bound(n)
