from __future__ import annotations

import copy
import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np

from ..rng import make_rng
from .layers import Dense, Layer, TransposedConv2d, layer_from_spec

NNW_MAGIC = b"NNW1"
NNW_VERSION = 1


class Network:
    """Feed-forward composition of layers, evaluated left to right."""

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def __call__(self, x):
        return self.forward(x)

    def __add__(self, other: "Network") -> "Network":
        # shares layer objects: training the sum trains both parts
        return Network(self.layers + other.layers)

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, gy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            gy = layer.backward(gy)
        return gy

    def parameters(self) -> list[np.ndarray]:
        return [layer.params[k] for layer in self.layers for k in sorted(layer.params)]

    def gradients(self) -> list[np.ndarray]:
        return [layer.grads[k] for layer in self.layers for k in sorted(layer.params)]

    @property
    def n_params(self) -> int:
        """Trainable scalars; a dense layer contributes (n_in + 1) n_out."""
        return sum(layer.n_params for layer in self.layers)

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def spec(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]

    def fingerprint(self) -> str:
        return hashlib.sha256(to_bytes(self)).hexdigest()


def he_init(net: Network, seed: int, *keys: int) -> Network:
    """Weights ~ N(0, 2 / fan_in), biases 0, in place; layer i draws from stream (seed, *keys, i)."""
    for i, layer in enumerate(net.layers):
        if isinstance(layer, (Dense, TransposedConv2d)):
            rng = make_rng(seed, *keys, i)
            key = "W" if isinstance(layer, Dense) else "K"
            shape = layer.params[key].shape
            layer.params[key] = rng.normal(0.0, np.sqrt(2.0 / layer.fan_in), size=shape)
            layer.params["b"] = np.zeros_like(layer.params["b"])
            layer.zero_grad()
    return net


def to_bytes(net: Network) -> bytes:
    """NNW1 layout: magic, u32 version, u32 descriptor length, JSON layer
    descriptors, float64 little-endian weights (layer order, sorted parameter
    names, C order), then a SHA-256 digest of everything before it."""
    desc = json.dumps(net.spec(), sort_keys=True, separators=(",", ":")).encode()
    buf = io.BytesIO()
    buf.write(NNW_MAGIC)
    buf.write(struct.pack("<II", NNW_VERSION, len(desc)))
    buf.write(desc)
    for p in net.parameters():
        buf.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
    body = buf.getvalue()
    return body + hashlib.sha256(body).digest()


def from_bytes(data: bytes) -> Network:
    if len(data) < 12 + 32 or data[:4] != NNW_MAGIC:
        raise ValueError("not an NNW1 network file")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ValueError("NNW1 integrity check failed")
    version, dlen = struct.unpack_from("<II", body, 4)
    if version != NNW_VERSION:
        raise ValueError(f"unsupported NNW1 version {version}")
    specs = json.loads(body[12:12 + dlen].decode())
    net = Network([layer_from_spec(s) for s in specs])
    off = 12 + dlen
    for layer in net.layers:
        for k in sorted(layer.params):
            p = layer.params[k]
            nbytes = p.size * 8
            if off + nbytes > len(body):
                raise ValueError("NNW1 file truncated")
            layer.params[k] = np.frombuffer(body, dtype="<f8", count=p.size,
                                            offset=off).reshape(p.shape).astype(float)
            off += nbytes
        layer.zero_grad()
    if off != len(body):
        raise ValueError("NNW1 file has trailing bytes")
    return net


def save_network(net: Network, path) -> None:
    Path(path).write_bytes(to_bytes(net))


def load_network(path) -> Network:
    return from_bytes(Path(path).read_bytes())
