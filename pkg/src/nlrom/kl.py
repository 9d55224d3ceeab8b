"""Karhunen-Loeve expansion of a Gaussian field on a P1 mesh."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .mesh_fem import (Mesh, apply_dirichlet, assemble_advdiff, mass_matrix,
                       solve)

KL_MEAN = -math.log(10.0)
KL_VARIANCE = 10.0


def sq_exp_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Cov(x, y) = 10 exp(-4 |x - y|^2) for all pairs of rows of x and y."""
    d2 = np.sum(x * x, 1)[:, None] + np.sum(y * y, 1)[None, :] - 2.0 * (x @ y.T)
    return KL_VARIANCE * np.exp(-4.0 * np.maximum(d2, 0.0))


@dataclass(frozen=True, eq=False)
class KLBasis:
    mean: float
    eigenvalues: np.ndarray  # (k,), nonincreasing
    eigenfunctions: np.ndarray  # (N_h, k), M-orthonormal columns
    total_variance: float = KL_VARIANCE

    @property
    def k(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def explained_fraction(self) -> float:
        return float(np.sum(self.eigenvalues) / self.total_variance)


def assemble_covariance_operator(mesh: Mesh, kernel=sq_exp_kernel):
    """Return (C, M): vertex-quadrature covariance matrix and the P1 mass matrix.

    C_ij = w_i Cov(x_i, x_j) w_j with lumped vertex weights w = M 1.
    """
    M = mass_matrix(mesh)
    w = np.asarray(M.sum(axis=1)).ravel()
    K = kernel(mesh.nodes, mesh.nodes)
    C = w[:, None] * K * w[None, :]
    C = 0.5 * (C + C.T)
    return C, M


def kl_spectrum(C: np.ndarray, M) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs of C z = lam M z, eigenvalues in decreasing order.

    Eigenvector signs are fixed so that the largest-magnitude entry is positive.
    """
    Md = M.toarray() if hasattr(M, "toarray") else np.asarray(M)
    lam, Z = sla.eigh(C, Md)
    lam, Z = lam[::-1], Z[:, ::-1]
    idx = np.argmax(np.abs(Z), axis=0)
    signs = np.sign(Z[idx, np.arange(Z.shape[1])])
    signs[signs == 0] = 1.0
    return lam, Z * signs


def truncation_index(eigenvalues: np.ndarray, target_fraction: float,
                     total: float = KL_VARIANCE) -> int:
    """Smallest k with sum_{i<=k} lambda_i >= target_fraction * total."""
    if not 0.0 < target_fraction < 1.0:
        raise ValueError("target fraction must lie in (0, 1)")
    cum = np.cumsum(np.clip(eigenvalues, 0.0, None))
    hit = np.nonzero(cum >= target_fraction * total)[0]
    if hit.size == 0:
        raise ValueError(f"spectrum explains only {cum[-1] / total:.4f} of the variance, "
                         f"below the target {target_fraction}")
    return int(hit[0]) + 1


def solve_kl(C: np.ndarray, M, target_fraction: float = 0.9) -> KLBasis:
    lam, Z = kl_spectrum(C, M)
    k = truncation_index(lam, target_fraction)
    return KLBasis(KL_MEAN, lam[:k].copy(), np.ascontiguousarray(Z[:, :k]))


def evaluate_path(basis: KLBasis, mu) -> np.ndarray:
    """w + sum_i sqrt(lambda_i) mu_i zeta_i; ``mu`` may hold one path per column."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape[0] != basis.k:
        raise ValueError(f"expected {basis.k} coefficients, got {mu.shape[0]}")
    scaled = np.sqrt(basis.eigenvalues).reshape((-1,) + (1,) * (mu.ndim - 1)) * mu
    return basis.mean + basis.eigenfunctions @ scaled


def stoch_poisson_solve(basis: KLBasis, mu, mesh: Mesh) -> np.ndarray:
    """-div(e^W grad u) = |x|^2 with u = 0 on the boundary.

    The nodal diffusivity e^W is averaged over each triangle's vertices.
    """
    diffusivity = np.exp(evaluate_path(basis, mu))
    rhs = np.sum(mesh.nodes**2, axis=1)
    system = assemble_advdiff(mesh, diffusivity, (0.0, 0.0), rhs)
    return solve(apply_dirichlet(mesh, system, 0.0))


def stoch_poisson_problem(nx: int, target_fraction: float = 0.9):
    """(Problem, KLBasis) for the stochastic Poisson equation on an nx-by-nx mesh."""
    from .mesh_fem import build_unit_square_mesh
    from .problems import Problem
    mesh = build_unit_square_mesh(nx)
    basis = solve_kl(*assemble_covariance_operator(mesh), target_fraction)
    config = {"nx": nx, "target_fraction": target_fraction, "k": basis.k}
    return Problem("stoch_poisson", basis.k, config, mesh,
                   lambda mu: stoch_poisson_solve(basis, mu, mesh)), basis
