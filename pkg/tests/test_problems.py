import math

import numpy as np
import pytest

from nlrom.mesh_fem import build_interval_mesh, build_unit_square_mesh, l2_norm
from nlrom.problems import (AdvDiffConfig, advdiff_conductivity, advdiff_solve,
                            circle_problem_solve, curve_coefficients, curve_snapshot,
                            hat_snapshot, orthogonal_hat_params, unit_circle_point)


@pytest.fixture(scope="module")
def mesh32():
    return build_unit_square_mesh(32)


def grid_of(mesh, u):
    return u.reshape(mesh.grid_shape)


class TestAdvDiff:
    def test_conductivity_baseline(self, mesh32):
        sigma = advdiff_conductivity(np.r_[0, 0, 0, 0, 1.0, 0.5, 0.5], AdvDiffConfig(nx=32), mesh32)
        assert np.all(sigma == 0.1)

    def test_conductivity_first_disk(self, mesh32):
        cfg = AdvDiffConfig(nx=32)
        sigma = advdiff_conductivity(np.r_[1.0, 0, 0, 0, 1.0, 0.5, 0.5], cfg, mesh32)
        (cx, cy), r = cfg.disks[0]
        inside = np.hypot(*(mesh32.centroids - [cx, cy]).T) < r
        assert inside.any()
        assert np.allclose(sigma[inside], 1.1)
        assert np.all(sigma[~inside] == 0.1)

    def test_conductivity_floor(self, mesh32):
        rng = np.random.default_rng(5)
        for _ in range(5):
            mu = np.r_[rng.random(4), 2 * math.pi * rng.random(), 0.1 + 0.8 * rng.random(2)]
            assert advdiff_conductivity(mu, AdvDiffConfig(nx=32), mesh32).min() >= 0.1

    def test_rejects_out_of_range(self, mesh32):
        with pytest.raises(ValueError):
            advdiff_solve(np.r_[0, 0, 0, 0, 0, 0.05, 0.5], AdvDiffConfig(nx=32), mesh32)

    def test_bad_config(self):
        with pytest.raises(ValueError):
            AdvDiffConfig(disks=(((0.25, 0.25), 0.3), ((0.5, 0.25), 0.2)))
        with pytest.raises(ValueError):
            AdvDiffConfig(disks=(((0.05, 0.5), 0.1),))

    def test_config_json_round_trip(self):
        cfg = AdvDiffConfig(C=40.0, nx=64)
        again = AdvDiffConfig.from_dict(cfg.to_dict())
        assert again.to_dict() == cfg.to_dict()
        assert cfg.source_width == 1 / 128

    def test_lower_bound_mild_advection(self, mesh32):
        mu = np.r_[0.3, 0.7, 0.1, 0.9, 2.0, 0.35, 0.6]
        u = advdiff_solve(mu, AdvDiffConfig(C=0.5, nx=32), mesh32)
        assert u[~mesh32.boundary_mask].min() > 1 - 1e-10
        assert np.all(u[mesh32.boundary_mask] == 1.0)

    @pytest.mark.slow
    def test_lower_bound_strong_advection_undershoot_shrinks(self):
        # plain Galerkin has no discrete maximum principle when advection
        # dominates: the undershoot below 1 is a mesh artifact that fades
        # as the mesh Peclet number C h / (2 sigma) approaches 1
        mu = np.r_[0.3, 0.7, 0.1, 0.9, 2.0, 0.35, 0.6]
        under = []
        for nx in (64, 210):
            mesh = build_unit_square_mesh(nx)
            u = advdiff_solve(mu, AdvDiffConfig(C=40.0, nx=nx), mesh)
            under.append(1.0 - u[~mesh.boundary_mask].min())
        assert under[0] > 0.1
        assert under[1] < 1e-3

    def test_xy_swap_symmetry(self, mesh32):
        mu = np.r_[0.4, 0.4, 0.4, 0.4, 0.0, 0.5, 0.5]
        u = grid_of(mesh32, advdiff_solve(mu, AdvDiffConfig(C=0.0 + 1e-300, nx=32), mesh32))
        assert np.allclose(u, u.T, rtol=1e-9, atol=0)

    def test_plume_moves_downstream(self):
        mesh = build_unit_square_mesh(64)
        mu = np.r_[0.2, 0.2, 0.2, 0.2, 0.0, 0.4, 0.5]
        centres = []
        for C in (1e-300, 40.0):
            u = advdiff_solve(mu, AdvDiffConfig(C=C, nx=64), mesh)
            # weighted centroid of the excess over the boundary value
            w = np.maximum(u - 1.0, 0.0)
            centres.append(np.sum(w * mesh.nodes[:, 0]) / np.sum(w))
        assert centres[1] > centres[0] + 0.2

    def test_argmax_right_of_source_strong_advection(self):
        # with the default eps = h/2 the peak is pinned to the source node, so
        # use a source resolved by a few cells
        mesh = build_unit_square_mesh(64)
        mu = np.r_[0.2, 0.2, 0.2, 0.2, 0.0, 0.375, 0.5]
        u0 = advdiff_solve(mu, AdvDiffConfig(C=1e-300, nx=64, eps=1 / 32), mesh)
        u = advdiff_solve(mu, AdvDiffConfig(C=40.0, nx=64, eps=1 / 32), mesh)
        assert mesh.nodes[np.argmax(u0), 0] == 0.375
        assert mesh.nodes[np.argmax(u), 0] > 0.375

    def test_continuity_in_parameters(self, mesh32):
        cfg = AdvDiffConfig(C=0.5, nx=32)
        mu = np.r_[0.3, 0.6, 0.2, 0.8, 1.0, 0.45, 0.55]
        base = l2_norm(mesh32, advdiff_solve(mu, cfg, mesh32))
        for i in range(7):
            d = np.zeros(7)
            d[i] = 1e-6
            diff = abs(l2_norm(mesh32, advdiff_solve(mu + d, cfg, mesh32)) - base)
            assert diff < 1e-6 * 100


class TestCircleProblem:
    def test_zero_boundary(self, mesh32):
        u = circle_problem_solve(0.7, mesh32)
        assert np.all(u[mesh32.boundary_mask] == 0.0)
        assert u.max() > 0

    def test_periodic(self, mesh32):
        a = circle_problem_solve(1.3, mesh32)
        b = circle_problem_solve(1.3 + 2 * math.pi, mesh32)
        assert np.allclose(a, b, rtol=1e-9, atol=1e-12 * abs(a).max())

    def test_half_turn_is_point_reflection(self, mesh32):
        # the mesh is invariant under (x, y) -> (1-x, 1-y): exact up to solver tolerance
        u0 = grid_of(mesh32, circle_problem_solve(0.0, mesh32))
        upi = grid_of(mesh32, circle_problem_solve(math.pi, mesh32))
        assert np.allclose(upi, u0[::-1, ::-1], rtol=1e-8, atol=1e-12)

    def test_half_turn_is_x_reflection_up_to_discretisation(self, mesh32):
        u0 = grid_of(mesh32, circle_problem_solve(0.0, mesh32))
        upi = grid_of(mesh32, circle_problem_solve(math.pi, mesh32))
        assert np.abs(upi - u0[:, ::-1]).max() < 2e-2 * np.abs(u0).max()


class TestAnalyticManifolds:
    def test_hat_zero_height(self):
        grid = build_interval_mesh(-2, 2, 64)
        assert np.all(hat_snapshot(0.3, 0.0, grid) == 0)

    def test_hat_constraint(self):
        grid = build_interval_mesh(-2, 2, 64)
        with pytest.raises(ValueError):
            hat_snapshot(0.8, 0.5, grid)

    @pytest.mark.parametrize("mu1,mu2", [(0.0, 1.0), (0.25, 0.5), (-0.7, 0.2)])
    def test_hat_norm(self, mu1, mu2):
        grid = build_interval_mesh(-2, 2, 512)
        assert l2_norm(grid, hat_snapshot(mu1, mu2, grid)) == pytest.approx(
            math.sqrt(2 / 3 * mu2**3), abs=1e-3)

    @pytest.mark.parametrize("n", [1, 2, 4, 8])
    def test_orthogonal_hats(self, n):
        grid = build_interval_mesh(-2, 2, 512)
        V = np.column_stack([hat_snapshot(a, b, grid) for a, b in orthogonal_hat_params(n)])
        G = V.T @ (grid.mass @ V)
        assert np.abs(G - np.diag(np.diag(G))).max() < 1e-6
        assert len(orthogonal_hat_params(n)) == 2 * n

    def test_curve_endpoints(self):
        grid = build_interval_mesh(0, math.pi, 64)
        assert curve_coefficients(0.0) == (0.0, 1.0)
        assert np.allclose(curve_snapshot(0.0, grid), np.sin(grid.nodes))
        assert np.allclose(curve_snapshot(1.0, grid), np.sin(grid.nodes))

    def test_curve_midpoint_is_negated_sine(self):
        grid = build_interval_mesh(0, math.pi, 64)
        assert curve_coefficients(0.5) == (0.0, -1.0)
        assert np.array_equal(curve_snapshot(0.5, grid), -np.sin(grid.nodes))

    def test_curve_closes(self):
        grid = build_interval_mesh(0, math.pi, 64)
        assert np.array_equal(curve_snapshot(0.0, grid), curve_snapshot(1.0, grid))
        assert not np.allclose(curve_snapshot(0.0, grid), curve_snapshot(0.5, grid))

    def test_curve_distinct_on_grid(self):
        grid = build_interval_mesh(0, math.pi, 64)
        mus = np.linspace(0, 1, 101)
        S = np.column_stack([curve_snapshot(m, grid) for m in mus])
        D = np.linalg.norm(S[:, :, None] - S[:, None, :], axis=0)
        close = np.argwhere(np.triu(D < 1e-12, 1))
        assert [tuple(mus[c]) for c in close] == [(0.0, 1.0)]

    @pytest.mark.parametrize("theta,expected", [(0.0, (1, 0)), (math.pi / 2, (0, 1))])
    def test_unit_circle(self, theta, expected):
        assert np.allclose(unit_circle_point(theta), expected, atol=1e-15)

    def test_unit_circle_norm(self):
        for t in np.linspace(-7, 7, 31):
            assert np.linalg.norm(unit_circle_point(t)) == pytest.approx(1.0, abs=1e-15)
