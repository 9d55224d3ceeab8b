from __future__ import annotations

import hashlib

import numpy as np

from ..rng import make_rng
from .losses import LOSSES
from .network import Network
from .optim import OptimizerConfig


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")
        self.epoch, self.batch = epoch, batch


def canonical_order(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Permutation sorting samples by a digest of their bytes.

    Shuffles are drawn on top of this order, which makes training
    independent of how the dataset happens to be stored.
    """
    keys = []
    for i in range(X.shape[0]):
        h = hashlib.blake2b(digest_size=16)
        h.update(np.ascontiguousarray(X[i]).tobytes())
        h.update(np.ascontiguousarray(Y[i]).tobytes())
        keys.append(h.digest())
    return np.array(sorted(range(len(keys)), key=lambda i: (keys[i], i)), dtype=np.int64)


def train(net: Network, X, Y, loss="squared", optimizer: OptimizerConfig | None = None,
          epochs: int = 1, batch_size: int = 50, seed: int = 0, callback=None) -> list[float]:
    """Minibatch training, in place. Returns the per-epoch mean loss.

    Epoch ``e`` visits the samples in the order given by a permutation drawn
    from stream ``(seed, e)``. The last batch may be smaller.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[0] == 0 or X.shape[0] != Y.shape[0]:
        raise ValueError("dataset must be nonempty with matching sample counts")
    loss_fn = LOSSES[loss] if isinstance(loss, str) else loss
    optimizer = optimizer or OptimizerConfig()
    opt = optimizer.build(net.parameters())
    base = canonical_order(X, Y)
    n = X.shape[0]
    history = []
    for epoch in range(epochs):
        order = base[make_rng(seed, epoch).permutation(n)]
        total = 0.0
        for bi, start in enumerate(range(0, n, batch_size)):
            idx = order[start:start + batch_size]
            pred = net.forward(X[idx])
            value, grad = loss_fn(Y[idx], pred)
            if not np.isfinite(value):
                raise TrainingDiverged(epoch, bi, value)
            net.backward(grad)
            opt.step(net.gradients())
            total += value * len(idx)
        history.append(total / n)
        if callback is not None:
            callback(epoch, history[-1])
    return history
