"""Parametric test problems: FOM solvers and closed-form manifolds."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .mesh_fem import (Mesh, apply_dirichlet, assemble_advdiff, gaussian_source,
                       solve)

TWO_PI = 2.0 * math.pi

# Theta = [0,1]^4 x [0, 2pi] x [0.1, 0.9]^2
ADVDIFF_BOUNDS = ((0.0, 1.0),) * 4 + ((0.0, TWO_PI),) + ((0.1, 0.9),) * 2

DEFAULT_DISKS = (
    ((0.25, 0.25), 0.15),
    ((0.75, 0.25), 0.15),
    ((0.25, 0.75), 0.15),
    ((0.75, 0.75), 0.15),
)


@dataclass(frozen=True)
class AdvDiffConfig:
    """Fixed data of the advection-diffusion family.

    ``eps`` defaults to half the mesh size, ``1 / (2 nx)``.
    """
    C: float = 0.5
    nx: int = 64
    eps: float | None = None
    disks: tuple = DEFAULT_DISKS

    def __post_init__(self):
        disks = tuple((tuple(float(c) for c in ctr), float(r)) for ctr, r in self.disks)
        object.__setattr__(self, "disks", disks)
        if self.nx < 1:
            raise ValueError("nx must be positive")
        if self.eps is not None and self.eps <= 0:
            raise ValueError("eps must be positive")
        for (cx, cy), r in disks:
            if r <= 0 or cx - r <= 0 or cx + r >= 1 or cy - r <= 0 or cy + r >= 1:
                raise ValueError(f"disk {(cx, cy), r} not strictly inside the unit square")
        for a in range(len(disks)):
            for b in range(a + 1, len(disks)):
                (ca, ra), (cb, rb) = disks[a], disks[b]
                if math.dist(ca, cb) <= ra + rb:
                    raise ValueError("subdomain disks must be pairwise disjoint")

    @property
    def source_width(self) -> float:
        return self.eps if self.eps is not None else 1.0 / (2 * self.nx)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eps"] = self.source_width
        d["disks"] = [{"center": list(c), "radius": r} for c, r in self.disks]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AdvDiffConfig":
        d = dict(d)
        if "disks" in d:
            d["disks"] = tuple((tuple(x["center"]), x["radius"]) for x in d["disks"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def check_advdiff_params(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if mu.shape != (7,):
        raise ValueError(f"expected 7 parameters, got {mu.shape[0]}")
    for i, (lo, hi) in enumerate(ADVDIFF_BOUNDS):
        if not lo <= mu[i] <= hi:
            raise ValueError(f"mu{i + 1}={mu[i]} outside [{lo}, {hi}]")
    return mu


def advdiff_conductivity(mu, config: AdvDiffConfig, mesh: Mesh) -> np.ndarray:
    """Cellwise 0.1 + sum_i mu_i 1{centroid in disk i}."""
    mu = check_advdiff_params(mu)
    cen = mesh.centroids
    sigma = np.full(mesh.num_triangles, 0.1)
    for i, (ctr, r) in enumerate(config.disks):
        inside = np.sum((cen - np.asarray(ctr)) ** 2, axis=1) < r * r
        sigma[inside] += mu[i]
    return sigma


def advdiff_solve(mu, config: AdvDiffConfig, mesh: Mesh) -> np.ndarray:
    mu = check_advdiff_params(mu)
    sigma = advdiff_conductivity(mu, config, mesh)
    b = (config.C * math.cos(mu[4]), config.C * math.sin(mu[4]))
    f = gaussian_source(mesh, (mu[5], mu[6]), config.source_width)
    system = assemble_advdiff(mesh, sigma, b, f)
    return solve(apply_dirichlet(mesh, system, 1.0))


CIRCLE_CENTER = (0.5, 0.5)


def circle_problem_solve(mu: float, mesh: Mesh) -> np.ndarray:
    """-lap u + 10 (cos mu, sin mu) . grad u = 10 exp(-100 |x - x0|),  u = 0 on the boundary."""
    mu = float(np.asarray(mu).reshape(-1)[0])
    if not np.isfinite(mu):
        raise ValueError("angle must be finite")
    r = np.hypot(mesh.nodes[:, 0] - CIRCLE_CENTER[0], mesh.nodes[:, 1] - CIRCLE_CENTER[1])
    f = 10.0 * np.exp(-100.0 * r)
    b = (10.0 * math.cos(mu), 10.0 * math.sin(mu))
    system = assemble_advdiff(mesh, 1.0, b, f)
    return solve(apply_dirichlet(mesh, system, 0.0))


def hat_snapshot(mu1: float, mu2: float, grid) -> np.ndarray:
    """Hat of height mu2 centred at mu1 with support [mu1 - mu2, mu1 + mu2]."""
    tol = 1e-12
    if not (0.0 - tol <= mu2 <= 1.0 + tol and -1.0 - tol <= mu1 - mu2
            and mu1 + mu2 <= 1.0 + tol):
        raise ValueError(f"(mu1, mu2)=({mu1}, {mu2}) outside the admissible triangle")
    x = np.asarray(getattr(grid, "nodes", grid), dtype=float)
    return np.maximum(mu2 - np.abs(x - mu1), 0.0)


def orthogonal_hat_params(n: int) -> list[tuple[float, float]]:
    """Parameters of the 2n hats with disjoint supports tiling [-1, 1]."""
    return [(-1.0 + i / n - 1.0 / (2 * n), 1.0 / (2 * n)) for i in range(1, 2 * n + 1)]


def curve_coefficients(mu: float) -> tuple[float, float]:
    return (10.0 * (2 * mu**3 - 3 * mu**2 + mu), 2.0 * abs(1.0 - 2.0 * mu) - 1.0)


def curve_snapshot(mu: float, grid) -> np.ndarray:
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu={mu} outside [0, 1]")
    x = np.asarray(getattr(grid, "nodes", grid), dtype=float)
    a, b = curve_coefficients(mu)
    return a * np.cos(x) + b * np.sin(x)


def unit_circle_point(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


@dataclass(frozen=True)
class Problem:
    """Uniform handle used by the snapshot generator and the CLI.

    ``solver(mu)`` maps one parameter vector to one state vector; ``config``
    is the JSON-able description that gets hashed.
    """
    tag: str
    p: int
    config: dict
    mesh: object
    solver: object = field(repr=False, compare=False)

    def solve(self, mu) -> np.ndarray:
        return self.solver(mu)


def advdiff_problem(config: AdvDiffConfig, mesh: Mesh | None = None) -> Problem:
    from .mesh_fem import build_unit_square_mesh
    mesh = mesh or build_unit_square_mesh(config.nx)
    return Problem("advdiff", 7, config.to_dict(), mesh,
                   lambda mu: advdiff_solve(mu, config, mesh))


def circle_problem(nx: int) -> Problem:
    from .mesh_fem import build_unit_square_mesh
    mesh = build_unit_square_mesh(nx)
    return Problem("circle_pde", 1, {"nx": nx}, mesh,
                   lambda mu: circle_problem_solve(mu, mesh))


def curve_problem(n: int) -> Problem:
    from .mesh_fem import build_interval_mesh
    grid = build_interval_mesh(0.0, math.pi, n)
    return Problem("curve", 1, {"n": n}, grid,
                   lambda mu: curve_snapshot(float(np.asarray(mu).reshape(-1)[0]), grid))


def unit_circle_problem() -> Problem:
    """Points on the unit circle, the state being the point itself."""
    return Problem("unit_circle", 1, {}, None,
                   lambda mu: unit_circle_point(float(np.asarray(mu).reshape(-1)[0])))
