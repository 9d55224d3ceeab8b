"""Proper orthogonal decomposition and projection-error diagnostics."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class PodBasis:
    V: np.ndarray  # (N_h, n), orthonormal columns
    singular_values: np.ndarray  # all of them, nonincreasing

    @property
    def n(self) -> int:
        return self.V.shape[1]

    def project(self, U: np.ndarray) -> np.ndarray:
        return self.V @ (self.V.T @ U)


def _left_singular(U: np.ndarray):
    """Thin left singular vectors and values of U, Gram-matrix route when N <= N_h."""
    n_h, N = U.shape
    if N <= n_h:
        G = U.T @ U
        lam, W = np.linalg.eigh(G)
        lam, W = lam[::-1], W[:, ::-1]
        s = np.sqrt(np.clip(lam, 0.0, None))
        return s, W
    Q, s, _ = np.linalg.svd(U, full_matrices=False)
    return s, Q


def pod_fit(U: np.ndarray, n: int) -> PodBasis:
    """First ``n`` left singular vectors of the snapshot matrix (Euclidean).

    The Gram route loses accuracy for singular values near round-off; if the
    resulting columns are not orthonormal to 1e-10 the thin SVD is used.
    """
    U = np.asarray(U, dtype=float)
    n_h, N = U.shape
    if not 1 <= n <= min(n_h, N):
        raise ValueError(f"n={n} outside [1, {min(n_h, N)}]")
    s, W = _left_singular(U)
    if N <= n_h:
        keep = s[:n] > s[0] * 1e-7 if s[0] > 0 else np.zeros(n, bool)
        V = None
        if np.all(keep):
            V = (U @ W[:, :n]) / s[:n]
            if np.abs(V.T @ V - np.eye(n)).max() > 1e-10:
                V = None
        if V is None:
            Q, s_svd, _ = np.linalg.svd(U, full_matrices=False)
            V, s = Q[:, :n], s_svd
    else:
        V = W[:, :n]
    return PodBasis(np.ascontiguousarray(V), s)


def _norms(A: np.ndarray, M=None) -> np.ndarray:
    if M is None:
        return np.linalg.norm(A, axis=0)
    return np.sqrt(np.maximum(np.sum(A * (M @ A), axis=0), 0.0))


@dataclass(frozen=True)
class ProjectionErrors:
    per_column: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_column))

    @property
    def sup(self) -> float:
        return float(np.max(self.per_column))


def projection_errors(basis: PodBasis, U_eval: np.ndarray, mass=None,
                      relative: bool = True) -> ProjectionErrors:
    """||u - V V^T u|| (/ ||u||) per column, Euclidean or in the ``mass`` norm."""
    U_eval = np.asarray(U_eval, dtype=float)
    if U_eval.shape[0] != basis.V.shape[0]:
        raise ValueError("snapshot length does not match the basis")
    err = _norms(U_eval - basis.project(U_eval), mass)
    if relative:
        ref = _norms(U_eval, mass)
        if np.any(ref == 0):
            raise ValueError("relative error undefined for a zero snapshot")
        err = err / ref
    return ProjectionErrors(err)


def error_dof_curve(U_train: np.ndarray, U_test: np.ndarray, n_list, mass=None) -> list[dict]:
    """Rows (n, dof = n N_h, train MRE, test MRE), Euclidean norm.

    When ``mass`` is given, L2-norm MREs are added as ``train_mre_l2`` and
    ``test_mre_l2``.
    """
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")
    n_h = U_train.shape[0]
    full = pod_fit(U_train, n_list[-1])
    rows = []
    for n in n_list:
        basis = PodBasis(full.V[:, :n], full.singular_values)
        row = {"n": n, "dof": n * n_h,
               "train_mre": projection_errors(basis, U_train).mean,
               "test_mre": projection_errors(basis, U_test).mean}
        if mass is not None:
            row["train_mre_l2"] = projection_errors(basis, U_train, mass).mean
            row["test_mre_l2"] = projection_errors(basis, U_test, mass).mean
        rows.append(row)
    return rows


def format_float(x: float) -> str:
    return repr(float(x)) if math.isfinite(x) else str(x)


def curve_to_csv(rows: list[dict]) -> str:
    cols = ["n", "dof", "train_mre", "test_mre"]
    if rows and "train_mre_l2" in rows[0]:
        cols += ["train_mre_l2", "test_mre_l2"]
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([r[c] if c in ("n", "dof") else f"{r[c]:.17g}" for c in cols])
    return out.getvalue()


def hat_width_lower_bound(n: int) -> float:
    """Lower bound n^(-3/2) / (2 sqrt 6) on the n-width of the hat-function manifold."""
    if n < 1:
        raise ValueError("n must be positive")
    return n ** -1.5 / (2.0 * math.sqrt(6.0))
