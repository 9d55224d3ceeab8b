"""Parameter sampling, snapshot generation and the SNP1 container.

SNP1 layout (little-endian)::

    b"SNP1"  u32 version  u32 p  u32 N_h  u32 N  u64 seed  32-byte config hash
    params   p x N float64, column-major
    states   N_h x N float64, column-major
    u32 metadata length, UTF-8 JSON metadata
    32-byte SHA-256 of everything above
"""
from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import PRNG_NAME, make_rng

SNP_MAGIC = b"SNP1"
SNP_VERSION = 1
_HEADER = struct.Struct("<4sIIIIQ32s")


class SnapshotFormatError(ValueError):
    pass


class SnapshotIntegrityError(SnapshotFormatError):
    pass


class GenerationError(RuntimeError):
    def __init__(self, column: int, cause: Exception):
        super().__init__(f"FOM solve failed for parameter column {column}: {cause}")
        self.column = column


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False)


def config_hash(config: dict) -> bytes:
    """SHA-256 of the canonical JSON encoding."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).digest()


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    params: np.ndarray  # (p, N)
    states: np.ndarray  # (N_h, N)
    problem: str
    config: dict
    seed: int = 0
    mesh: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        params = np.ascontiguousarray(np.asarray(self.params, dtype=float))
        states = np.ascontiguousarray(np.asarray(self.states, dtype=float))
        if params.ndim != 2 or states.ndim != 2:
            raise ValueError("params and states must be matrices")
        if params.shape[1] != states.shape[1]:
            raise ValueError("params and states must have the same number of columns")
        if not (np.all(np.isfinite(params)) and np.all(np.isfinite(states))):
            raise ValueError("snapshot data contains NaN or Inf")
        params.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "states", states)

    @property
    def p(self) -> int:
        return self.params.shape[0]

    @property
    def n_h(self) -> int:
        return self.states.shape[0]

    @property
    def n(self) -> int:
        return self.params.shape[1]

    @property
    def config_hash(self) -> bytes:
        return config_hash(self.config)

    def subset(self, idx) -> "SnapshotSet":
        return SnapshotSet(self.params[:, idx], self.states[:, idx], self.problem,
                           self.config, self.seed, self.mesh, self.extra)


def _check_bounds(bounds):
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if np.any(~(bounds[:, 0] < bounds[:, 1])):
        raise ValueError("every sampling interval must be nonempty")
    return bounds


def sample_uniform(bounds, N: int, seed: int) -> np.ndarray:
    """p x N i.i.d. uniform samples; column j is drawn from stream (seed, j)."""
    bounds = _check_bounds(bounds)
    if N < 1:
        raise ValueError("need at least one sample")
    lo, hi = bounds[:, 0], bounds[:, 1]
    out = np.empty((bounds.shape[0], N))
    for j in range(N):
        out[:, j] = lo + (hi - lo) * make_rng(seed, j).random(bounds.shape[0])
    return out


def sample_gaussian(k: int, N: int, seed: int) -> np.ndarray:
    """k x N standard normal samples; column j is drawn from stream (seed, j)."""
    if k < 1 or N < 1:
        raise ValueError("dimension and count must be positive")
    out = np.empty((k, N))
    for j in range(N):
        out[:, j] = make_rng(seed, j).standard_normal(k)
    return out


def generate(problem, params: np.ndarray, seed: int = 0, threads: int = 1,
             extra: dict | None = None) -> SnapshotSet:
    """Solve the FOM for every parameter column.

    Columns are independent, so ``threads`` only changes throughput.
    """
    params = np.asarray(params, dtype=float)
    if params.ndim == 1:
        params = params[:, None]
    if params.shape[0] != problem.p:
        raise ValueError(f"{problem.tag} expects {problem.p} parameters, got {params.shape[0]}")

    def run(j):
        try:
            u = np.asarray(problem.solve(params[:, j]), dtype=float)
        except Exception as exc:  # re-raised with the column index
            raise GenerationError(j, exc) from exc
        return u

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cols = list(pool.map(run, range(params.shape[1])))
    else:
        cols = [run(j) for j in range(params.shape[1])]
    states = np.column_stack(cols)
    return SnapshotSet(params, states, problem.tag, dict(problem.config), seed,
                       problem.mesh.descriptor() if problem.mesh is not None else {},
                       dict(extra or {}))


def to_bytes(s: SnapshotSet) -> bytes:
    if s.n < 1:
        raise ValueError("refusing to save an empty snapshot set")
    meta = {"problem": s.problem, "config": s.config, "mesh": s.mesh, "extra": s.extra,
            "prng": PRNG_NAME}
    meta_b = canonical_json(meta).encode("utf-8")
    parts = [
        _HEADER.pack(SNP_MAGIC, SNP_VERSION, s.p, s.n_h, s.n, int(s.seed), s.config_hash),
        np.asarray(s.params, dtype="<f8").tobytes(order="F"),
        np.asarray(s.states, dtype="<f8").tobytes(order="F"),
        struct.pack("<I", len(meta_b)),
        meta_b,
    ]
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def from_bytes(data: bytes) -> SnapshotSet:
    if len(data) < _HEADER.size + 4 + 32:
        raise SnapshotFormatError("file too short for an SNP1 container")
    magic, version, p, n_h, n, seed, chash = _HEADER.unpack_from(data, 0)
    if magic != SNP_MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    if version != SNP_VERSION:
        raise SnapshotFormatError(f"unsupported SNP1 version {version}")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise SnapshotIntegrityError("SNP1 payload digest mismatch (file corrupted or truncated)")
    off = _HEADER.size
    np_bytes, ns_bytes = 8 * p * n, 8 * n_h * n
    if off + np_bytes + ns_bytes + 4 > len(body):
        raise SnapshotFormatError("SNP1 file truncated")
    params = np.frombuffer(body, "<f8", p * n, off).reshape((p, n), order="F")
    off += np_bytes
    states = np.frombuffer(body, "<f8", n_h * n, off).reshape((n_h, n), order="F")
    off += ns_bytes
    (mlen,) = struct.unpack_from("<I", body, off)
    off += 4
    if off + mlen != len(body):
        raise SnapshotFormatError("SNP1 metadata length mismatch")
    meta = json.loads(body[off:off + mlen].decode("utf-8"))
    s = SnapshotSet(params.astype(float), states.astype(float), meta["problem"],
                    meta["config"], seed, meta.get("mesh", {}), meta.get("extra", {}))
    if s.config_hash != chash:
        raise SnapshotIntegrityError("config hash does not match the stored config")
    return s


def save(s: SnapshotSet, path) -> None:
    Path(path).write_bytes(to_bytes(s))


def load(path) -> SnapshotSet:
    return from_bytes(Path(path).read_bytes())
