"""Layers with explicit forward/backward passes (float64, batch-first).

Forward contractions go through stacked matmuls, one BLAS call per sample,
so a batch evaluates bitwise identically to its rows evaluated one by one.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _cached(self):
        if self._cache is None:
            raise RuntimeError(f"{self.kind}.backward called before forward")
        return self._cache

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def spec(self) -> dict:
        return {"kind": self.kind}

    def zero_grad(self):
        for k, p in self.params.items():
            self.grads[k] = np.zeros_like(p)


class Dense(Layer):
    """y = x W^T + b with W of shape (out, in)."""
    kind = "dense"

    def __init__(self, n_in: int, n_out: int):
        super().__init__()
        self.n_in, self.n_out = int(n_in), int(n_out)
        self.params = {"W": np.zeros((self.n_out, self.n_in)), "b": np.zeros(self.n_out)}
        self.zero_grad()

    @property
    def fan_in(self) -> int:
        return self.n_in

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"dense layer expects (batch, {self.n_in}), got {x.shape}")
        self._cache = x
        y = np.matmul(x[:, None, :], self.params["W"].T)[:, 0, :]
        return y + self.params["b"]

    def backward(self, gy):
        x = self._cached()
        self.grads["W"] = gy.T @ x
        self.grads["b"] = gy.sum(axis=0)
        return gy @ self.params["W"]

    def spec(self):
        return {"kind": self.kind, "n_in": self.n_in, "n_out": self.n_out}


class TransposedConv2d(Layer):
    """Transposed 2D convolution, kernel of shape (c_out, c_in, kh, kw).

    Output size per axis is (in - 1) * stride - 2 * padding + kernel.
    """
    kind = "tconv2d"

    def __init__(self, c_in: int, c_out: int, kernel: int | tuple = 4,
                 stride: int = 2, padding: int = 1):
        super().__init__()
        kh, kw = (kernel, kernel) if np.isscalar(kernel) else kernel
        self.c_in, self.c_out = int(c_in), int(c_out)
        self.kh, self.kw = int(kh), int(kw)
        self.stride, self.padding = int(stride), int(padding)
        if self.stride < 1 or self.padding < 0:
            raise ValueError("stride must be >= 1 and padding >= 0")
        self.params = {"K": np.zeros((self.c_out, self.c_in, self.kh, self.kw)),
                       "b": np.zeros(self.c_out)}
        self.zero_grad()

    @property
    def fan_in(self) -> int:
        # input taps reaching one output pixel
        return max(1, self.c_in * self.kh * self.kw // (self.stride * self.stride))

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        s, p = self.stride, self.padding
        return (h - 1) * s - 2 * p + self.kh, (w - 1) * s - 2 * p + self.kw

    def _kmat(self) -> np.ndarray:
        # rows ordered (o, a, b), columns c
        K = self.params["K"]
        return K.transpose(0, 2, 3, 1).reshape(self.c_out * self.kh * self.kw, self.c_in)

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise ShapeError(f"tconv expects (batch, {self.c_in}, H, W), got {x.shape}")
        n, _, h, w = x.shape
        s, p = self.stride, self.padding
        ho, wo = self.output_hw(h, w)
        if ho < 1 or wo < 1:
            raise ShapeError("padding too large for input size")
        cols = np.matmul(self._kmat(), x.reshape(n, self.c_in, h * w))
        cols = cols.reshape(n, self.c_out, self.kh, self.kw, h, w)
        full = np.zeros((n, self.c_out, (h - 1) * s + self.kh, (w - 1) * s + self.kw))
        for a in range(self.kh):
            for b in range(self.kw):
                full[:, :, a:a + (h - 1) * s + 1:s, b:b + (w - 1) * s + 1:s] += cols[:, :, a, b]
        self._cache = (x, full.shape)
        y = full[:, :, p:p + ho, p:p + wo]
        return y + self.params["b"][None, :, None, None]

    def backward(self, gy):
        x, full_shape = self._cached()
        n, _, h, w = x.shape
        s, p = self.stride, self.padding
        gfull = np.zeros(full_shape)
        gfull[:, :, p:p + gy.shape[2], p:p + gy.shape[3]] = gy
        G = np.empty((n, self.c_out, self.kh, self.kw, h, w))
        for a in range(self.kh):
            for b in range(self.kw):
                G[:, :, a, b] = gfull[:, :, a:a + (h - 1) * s + 1:s, b:b + (w - 1) * s + 1:s]
        G = G.reshape(n, self.c_out * self.kh * self.kw, h * w)
        X = x.reshape(n, self.c_in, h * w)
        gk = np.tensordot(G, X, axes=([0, 2], [0, 2]))  # (o*kh*kw, c)
        self.grads["K"] = gk.reshape(self.c_out, self.kh, self.kw, self.c_in).transpose(0, 3, 1, 2).copy()
        self.grads["b"] = gy.sum(axis=(0, 2, 3))
        gx = np.matmul(self._kmat().T, G)
        return gx.reshape(x.shape)

    def spec(self):
        return {"kind": self.kind, "c_in": self.c_in, "c_out": self.c_out,
                "kernel": [self.kh, self.kw], "stride": self.stride, "padding": self.padding}


class Activation(Layer):
    """ReLU (alpha = 0) or alpha-leaky ReLU."""
    kind = "activation"

    def __init__(self, name: str = "leaky_relu", alpha: float = 0.01):
        super().__init__()
        if name not in ("relu", "leaky_relu"):
            raise ValueError(f"unknown activation {name!r}")
        if name == "leaky_relu" and not alpha > 0:
            raise ValueError("leaky ReLU needs alpha > 0")
        self.name = name
        self.alpha = 0.0 if name == "relu" else float(alpha)

    def forward(self, x):
        pos = x >= 0
        self._cache = pos
        return np.where(pos, x, self.alpha * x)

    def backward(self, gy):
        pos = self._cached()
        return np.where(pos, gy, self.alpha * gy)

    def spec(self):
        return {"kind": self.kind, "name": self.name, "alpha": self.alpha}


def LeakyReLU(alpha: float = 0.01) -> Activation:
    return Activation("leaky_relu", alpha)


def ReLU() -> Activation:
    return Activation("relu")


class Reshape(Layer):
    """Reshape the non-batch axes."""
    kind = "reshape"

    def __init__(self, shape):
        super().__init__()
        self.shape = tuple(int(s) for s in shape)

    def forward(self, x):
        if int(np.prod(x.shape[1:])) != int(np.prod(self.shape)):
            raise ShapeError(f"cannot reshape {x.shape[1:]} to {self.shape}")
        self._cache = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, gy):
        return gy.reshape(self._cached())

    def spec(self):
        return {"kind": self.kind, "shape": list(self.shape)}


class EdgeFit2d(Layer):
    """Crop or edge-pad feature maps at the bottom/right to (height, width).

    Padding replicates the last row/column, so a 64x64 map covers a
    65x65 nodal grid.
    """
    kind = "edgefit2d"

    def __init__(self, height: int, width: int):
        super().__init__()
        self.height, self.width = int(height), int(width)

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeError(f"edgefit expects 4 axes, got {x.shape}")
        h, w = x.shape[2:]
        self._cache = (h, w)
        y = x[:, :, :min(h, self.height), :min(w, self.width)]
        ph, pw = max(0, self.height - h), max(0, self.width - w)
        if ph or pw:
            y = np.pad(y, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="edge")
        return y

    def backward(self, gy):
        h, w = self._cached()
        hk, wk = min(h, self.height), min(w, self.width)
        g = gy[:, :, :hk, :wk].copy()
        if self.height > h:
            g[:, :, -1, :] += gy[:, :, hk:, :wk].sum(axis=2)
        if self.width > w:
            g[:, :, :, -1] += gy[:, :, :hk, wk:].sum(axis=3)
            if self.height > h:
                g[:, :, -1, -1] += gy[:, :, hk:, wk:].sum(axis=(2, 3))
        out = np.zeros(gy.shape[:2] + (h, w))
        out[:, :, :hk, :wk] = g
        return out

    def spec(self):
        return {"kind": self.kind, "height": self.height, "width": self.width}


LAYER_KINDS = {cls.kind: cls for cls in (Dense, TransposedConv2d, Activation, Reshape, EdgeFit2d)}


def layer_from_spec(spec: dict) -> Layer:
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "dense":
        return Dense(spec["n_in"], spec["n_out"])
    if kind == "tconv2d":
        return TransposedConv2d(spec["c_in"], spec["c_out"], tuple(spec["kernel"]),
                                spec["stride"], spec["padding"])
    if kind == "activation":
        return Activation(spec["name"], spec["alpha"] if spec["name"] != "relu" else 0.01)
    if kind == "reshape":
        return Reshape(spec["shape"])
    if kind == "edgefit2d":
        return EdgeFit2d(spec["height"], spec["width"])
    raise ValueError(f"unknown layer kind {kind!r}")
