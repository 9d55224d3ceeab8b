"""Structured triangular meshes and P1 finite elements on rectangles.

Node numbering is row-major: node ``j * (nx + 1) + i`` sits at
``(x0 + i * hx, y0 + j * hy)``. Every cell is split along its
lower-left to upper-right diagonal, which keeps the mesh invariant under
the swap ``x <-> y`` and under the point reflection about the centre.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    """Raised when a linear solve misses its residual contract."""


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray  # (N_h, 2)
    triangles: np.ndarray  # (T, 3), counterclockwise
    boundary_mask: np.ndarray  # (N_h,) bool
    nx: int
    ny: int

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def grid_shape(self) -> tuple[int, int]:
        """(rows, cols) of the nodal grid; rows run along y."""
        return (self.ny + 1, self.nx + 1)

    @cached_property
    def _geometry(self):
        p = self.nodes[self.triangles]  # (T, 3, 2)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        area = 0.5 * det
        # gradients of the barycentric coordinates, (T, 3, 2)
        grads = np.empty((len(det), 3, 2))
        grads[:, 1, 0] = d2[:, 1] / det
        grads[:, 1, 1] = -d2[:, 0] / det
        grads[:, 2, 0] = -d1[:, 1] / det
        grads[:, 2, 1] = d1[:, 0] / det
        grads[:, 0] = -grads[:, 1] - grads[:, 2]
        return area, grads

    @property
    def areas(self) -> np.ndarray:
        return self._geometry[0]

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    @cached_property
    def mass(self) -> sp.csr_matrix:
        return _p1_mass(self)

    def descriptor(self) -> dict:
        x0, y0 = self.nodes[0]
        x1, y1 = self.nodes[-1]
        return {"kind": "rectangle_p1", "nx": self.nx, "ny": self.ny,
                "bounds": [float(x0), float(y0), float(x1), float(y1)]}


@dataclass(frozen=True, eq=False)
class IntervalMesh:
    """Equispaced 1D grid. Its mass matrix is the trapezoidal (lumped) one."""
    nodes: np.ndarray
    n: int

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @cached_property
    def weights(self) -> np.ndarray:
        h = np.diff(self.nodes)
        w = np.zeros(self.num_nodes)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        return w

    @cached_property
    def mass(self) -> sp.csr_matrix:
        return sp.diags(self.weights, format="csr")

    def descriptor(self) -> dict:
        return {"kind": "interval", "n": self.n,
                "bounds": [float(self.nodes[0]), float(self.nodes[-1])]}


AnyMesh = Union[Mesh, IntervalMesh]


def build_rectangle_mesh(nx: int, ny: int | None = None,
                         bounds=(0.0, 0.0, 1.0, 1.0)) -> Mesh:
    if ny is None:
        ny = nx
    if nx < 1 or ny < 1:
        raise ValueError(f"need at least one subdivision per side, got nx={nx}, ny={ny}")
    x0, y0, x1, y1 = bounds
    if not (x0 < x1 and y0 < y1):
        raise ValueError(f"degenerate rectangle {bounds}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    n00 = (j * (nx + 1) + i).ravel()
    n10 = n00 + 1
    n01 = n00 + nx + 1
    n11 = n01 + 1
    lower = np.column_stack([n00, n10, n11])
    upper = np.column_stack([n00, n11, n01])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    boundary = ((ii == 0) | (ii == nx) | (jj == 0) | (jj == ny)).ravel()
    for arr in (nodes, triangles, boundary):
        arr.setflags(write=False)
    return Mesh(nodes, triangles, boundary, nx, ny)


def build_unit_square_mesh(nx: int) -> Mesh:
    """Uniform ``nx`` x ``nx`` triangulation of the unit square."""
    return build_rectangle_mesh(nx, nx)


def build_interval_mesh(a: float, b: float, n: int) -> IntervalMesh:
    if not a < b:
        raise ValueError(f"empty interval ({a}, {b})")
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    nodes = np.linspace(a, b, n + 1)
    nodes.setflags(write=False)
    return IntervalMesh(nodes, n)


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    """Sum per-triangle 3x3 blocks into a global CSR matrix."""
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.num_nodes
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _p1_mass(mesh: Mesh) -> sp.csr_matrix:
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _scatter(mesh, mesh.areas[:, None, None] * ref[None])


def mass_matrix(mesh: AnyMesh) -> sp.csr_matrix:
    """Exact P1 mass matrix (2D) or trapezoidal diagonal mass (1D)."""
    return mesh.mass


def _check_len(mesh: AnyMesh, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[0] != mesh.num_nodes:
        raise ValueError(f"expected {mesh.num_nodes} nodal values, got {v.shape[0]}")
    return v


def l2_norm(mesh: AnyMesh, coeffs: np.ndarray) -> np.ndarray | float:
    """L2 norm of a nodal vector, or of every column of a nodal matrix."""
    v = _check_len(mesh, coeffs)
    Mv = mesh.mass @ v
    sq = np.sum(v * Mv, axis=0)
    return np.sqrt(np.maximum(sq, 0.0))


def l2_error(mesh: AnyMesh, coeffs_a, coeffs_b):
    a = _check_len(mesh, coeffs_a)
    b = _check_len(mesh, coeffs_b)
    return l2_norm(mesh, a - b)


def cell_values(mesh: Mesh, field) -> np.ndarray:
    """Coerce a coefficient field to one value per triangle.

    Scalars broadcast, per-triangle arrays pass through and nodal arrays are
    averaged over the three vertices of each triangle.
    """
    arr = np.asarray(field, dtype=float)
    if arr.ndim == 0:
        return np.full(mesh.num_triangles, float(arr))
    if arr.shape == (mesh.num_triangles,):
        return arr
    if arr.shape == (mesh.num_nodes,):
        return arr[mesh.triangles].mean(axis=1)
    raise ValueError(f"coefficient field of shape {arr.shape} matches neither "
                     f"{mesh.num_triangles} triangles nor {mesh.num_nodes} nodes")


@dataclass(eq=False)
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dirichlet: np.ndarray | None = field(default=None)


def assemble_advdiff(mesh: Mesh, sigma, b=(0.0, 0.0),
                     source: np.ndarray | Callable | float | None = None) -> LinearSystem:
    """Assemble  int sigma grad u . grad w + int (b . grad u) w  and  int f w.

    ``sigma`` is cellwise (or nodal, averaged per cell), so one-point
    quadrature is exact for the diffusion block. The advection block is
    exact for P1 x P1 with constant ``b``. The load uses vertex quadrature.
    No boundary conditions are applied here.
    """
    sig = cell_values(mesh, sigma)
    if not np.all(np.isfinite(sig)) or np.any(sig <= 0):
        raise ValueError("conductivity must be strictly positive and finite")
    bvec = np.asarray(b, dtype=float).reshape(2)
    if not np.all(np.isfinite(bvec)):
        raise ValueError("advection field must be finite")

    area, grads = mesh._geometry
    local = (sig * area)[:, None, None] * np.einsum("tik,tjk->tij", grads, grads)
    if np.any(bvec != 0.0):
        bg = grads @ bvec  # (T, 3): b . grad phi_j
        local = local + (area / 3.0)[:, None, None] * bg[:, None, :]
    A = _scatter(mesh, local)

    if source is None:
        f = np.zeros(mesh.num_nodes)
    elif callable(source):
        f = np.asarray(source(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=float)
    else:
        f = np.broadcast_to(np.asarray(source, dtype=float), (mesh.num_nodes,))
    f = _check_len(mesh, f)
    rhs = np.zeros(mesh.num_nodes)
    np.add.at(rhs, mesh.triangles, (area / 3.0)[:, None] * f[mesh.triangles])
    return LinearSystem(A, rhs)


def apply_dirichlet(mesh: Mesh, system: LinearSystem, g: float,
                    symmetric: bool = False) -> LinearSystem:
    """Impose ``u = g`` on the boundary by row replacement.

    With ``symmetric=True`` the boundary columns are also eliminated and
    moved to the right-hand side, which keeps a symmetric operator
    symmetric. Either way the boundary values of the solution equal ``g``.
    """
    bnd = mesh.boundary_mask
    if system.matrix.shape[0] != mesh.num_nodes:
        raise ValueError("system was not assembled on this mesh")
    interior = (~bnd).astype(float)
    rhs = system.rhs.copy()
    A = system.matrix
    if symmetric:
        gvec = np.where(bnd, float(g), 0.0)
        rhs -= A @ gvec
        A = A @ sp.diags(interior)
    A = (sp.diags(interior) @ A + sp.diags(bnd.astype(float))).tocsr()
    A.eliminate_zeros()
    A.sort_indices()
    rhs[bnd] = g
    return LinearSystem(A, rhs, dirichlet=bnd.copy())


SOLVE_RTOL = 1e-10
MAX_REFINEMENT_STEPS = 4


def solve(system: LinearSystem, rtol: float = SOLVE_RTOL) -> np.ndarray:
    """Sparse LU with iterative refinement.

    Raises SolverError if the relative residual is still above ``rtol``
    after ``MAX_REFINEMENT_STEPS`` refinement sweeps.
    """
    A = system.matrix
    r0 = np.asarray(system.rhs, dtype=float)
    bnorm = np.linalg.norm(r0)
    if bnorm == 0.0:
        return np.zeros_like(r0)
    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as exc:  # singular factor
        raise SolverError(f"factorization failed: {exc}") from exc
    fixed = system.dirichlet
    u = lu.solve(r0)
    for _ in range(MAX_REFINEMENT_STEPS + 1):
        if fixed is not None:
            # identity rows: pin the values bit-exactly against LU round-off
            u[fixed] = r0[fixed]
        res = r0 - A @ u
        rel = np.linalg.norm(res) / bnorm
        if not np.isfinite(rel):
            break
        if rel <= rtol:
            return u
        u = u + lu.solve(res)
    raise SolverError(f"relative residual {rel:.3e} above {rtol:.1e} "
                      f"after {MAX_REFINEMENT_STEPS} refinement steps")


def gaussian_source(mesh: Mesh, center, eps: float) -> np.ndarray:
    """Nodal values of the normalised isotropic Gaussian of width ``eps``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    c = np.asarray(center, dtype=float).reshape(2)
    r2 = np.sum((mesh.nodes - c) ** 2, axis=1)
    return np.exp(-r2 / (2.0 * eps**2)) / (2.0 * np.pi * eps**2)


def nodal_integral(mesh: AnyMesh, values) -> float:
    """Integral of a P1 function (exact: sum of mass-matrix row sums times values)."""
    v = _check_len(mesh, values)
    return float(np.asarray(mesh.mass.sum(axis=0)).ravel() @ v)
