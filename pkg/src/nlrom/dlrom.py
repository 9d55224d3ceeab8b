"""Two-stage DL-ROM: dimensionality reduction, then a reduced map onto frozen codes."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .nn import (Dense, EdgeFit2d, LeakyReLU, Network, OptimizerConfig, Reshape,
                 TransposedConv2d, he_init, load_network, save_network, train)
from .snapshots import SnapshotSet, canonical_json

AUTOENCODER = "autoencoder"
TRANSCODER = "transcoder"
MODES = (AUTOENCODER, TRANSCODER)

SEED_DECODER, SEED_ENCODER, SEED_MAP = 1, 2, 3  # init streams under the config seed


@dataclass(frozen=True)
class ReductionConfig:
    """Architecture and training budget for the first stage.

    ``grid`` set to (rows, cols) selects the convolutional decoder (a dense
    layer onto an ``m x 8 x 8`` map followed by stride-2 transposed
    convolutions); otherwise the decoder is a dense network with hidden
    widths ``decoder_hidden``. The autoencoder's encoder is dense with
    widths ``encoder_hidden``. The transcoder is a single affine layer,
    started at the parameter projection.
    """
    mode: str
    p: int
    latent_dim: int
    state_dim: int
    grid: tuple | None = None
    channels: int = 4
    decoder_hidden: tuple = (32, 32)
    encoder_hidden: tuple = (32,)
    loss: str = "squared"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    epochs: int = 300
    batch_size: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.latent_dim < 1 or self.p < 1 or self.state_dim < 1:
            raise ValueError("dimensions must be positive")
        if self.mode == TRANSCODER and self.latent_dim != self.p:
            raise ValueError("a transcoder-decoder has latent dimension equal to p")
        if self.grid is not None:
            rows, cols = self.grid
            if rows * cols != self.state_dim:
                raise ValueError("grid does not match the state dimension")
            if self.channels < 1:
                raise ValueError("channel multiplier must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("bad training budget")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid) if self.grid is not None else None
        d["decoder_hidden"] = list(self.decoder_hidden)
        d["encoder_hidden"] = list(self.encoder_hidden)
        d["optimizer"] = self.optimizer.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ReductionConfig":
        d = dict(d)
        d["grid"] = tuple(d["grid"]) if d.get("grid") is not None else None
        for key in ("decoder_hidden", "encoder_hidden"):
            if key in d:
                d[key] = tuple(d[key])
        if "optimizer" in d:
            d["optimizer"] = OptimizerConfig(**d["optimizer"])
        return cls(**d)


@dataclass(frozen=True)
class MapConfig:
    hidden: tuple = (50, 50, 50)
    loss: str = "squared"
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(lr=1e-3))
    epochs: int = 300
    batch_size: int = 50
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["optimizer"] = self.optimizer.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MapConfig":
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        if "optimizer" in d:
            d["optimizer"] = OptimizerConfig(**d["optimizer"])
        return cls(**d)


def config_digest(d: dict) -> str:
    return hashlib.sha256(canonical_json(d).encode()).hexdigest()


# -- architectures -----------------------------------------------------------

def _dense_stack(widths, final_activation=False) -> list:
    layers = []
    for i, (a, b) in enumerate(zip(widths, widths[1:])):
        layers.append(Dense(a, b))
        if i < len(widths) - 2 or final_activation:
            layers.append(LeakyReLU())
    return layers


def conv_stages(grid) -> int:
    """Number of stride-2 upsamplings taking an 8x8 map to cover ``grid``."""
    side = max(grid) - 1
    return max(1, math.ceil(math.log2(max(side, 8) / 8)))


def build_decoder(cfg: ReductionConfig) -> Network:
    n = cfg.latent_dim
    if cfg.grid is None:
        return Network(_dense_stack((n, *cfg.decoder_hidden, cfg.state_dim)))
    stages = conv_stages(cfg.grid)
    chans = [max(cfg.channels // 2**i, 1) for i in range(stages)] + [1]
    layers = [Dense(n, chans[0] * 64), LeakyReLU(), Reshape((chans[0], 8, 8))]
    for i in range(stages):
        layers.append(TransposedConv2d(chans[i], chans[i + 1]))
        if i < stages - 1:
            layers.append(LeakyReLU())
    layers += [EdgeFit2d(*cfg.grid), Reshape((cfg.state_dim,))]
    return Network(layers)


def build_encoder(cfg: ReductionConfig) -> Network:
    if cfg.mode == TRANSCODER:
        return build_transcoder(cfg.p, cfg.state_dim)
    return Network(_dense_stack((cfg.state_dim, *cfg.encoder_hidden, cfg.latent_dim)))


def build_transcoder(p: int, state_dim: int) -> Network:
    """Affine map of (mu, u) that returns mu exactly until trained."""
    layer = Dense(p + state_dim, p)
    layer.params["W"][...] = 0.0
    layer.params["W"][:, :p] = np.eye(p)
    layer.params["b"][...] = 0.0
    return Network([layer])


def build_reduced_map(p: int, n: int, cfg: MapConfig) -> Network:
    return Network(_dense_stack((p, *cfg.hidden, n)))


def encoder_input(mode: str, params: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Row-per-sample encoder input from column-per-sample matrices."""
    if mode == TRANSCODER:
        return np.hstack([params.T, states.T])
    return np.ascontiguousarray(states.T)


# -- stage 1 -----------------------------------------------------------------

@dataclass
class Reduction:
    config: ReductionConfig
    encoder: Network
    decoder: Network
    history: list


def init_reduction(cfg: ReductionConfig) -> Reduction:
    decoder = he_init(build_decoder(cfg), cfg.seed, SEED_DECODER)
    encoder = build_encoder(cfg)
    if cfg.mode == AUTOENCODER:
        he_init(encoder, cfg.seed, SEED_ENCODER)
    return Reduction(cfg, encoder, decoder, [])


def train_reduction(cfg: ReductionConfig, data: SnapshotSet, callback=None) -> Reduction:
    """Fit decoder and encoder (or transcoder) jointly on the reconstruction loss."""
    if data.p != cfg.p or data.n_h != cfg.state_dim:
        raise ValueError(f"snapshots have p={data.p}, N_h={data.n_h}; "
                         f"config expects p={cfg.p}, N_h={cfg.state_dim}")
    red = init_reduction(cfg)
    X = encoder_input(cfg.mode, data.params, data.states)
    Y = np.ascontiguousarray(data.states.T)
    red.history = train(red.encoder + red.decoder, X, Y, cfg.loss, cfg.optimizer,
                        cfg.epochs, cfg.batch_size, seed=cfg.seed, callback=callback)
    return red


@dataclass(frozen=True, eq=False)
class LatentCodes:
    """Frozen stage-1 output: the only input stage 2 accepts."""
    codes: np.ndarray   # (n, N)
    params: np.ndarray  # (p, N)
    decoder_fingerprint: str

    def __post_init__(self):
        for name in ("codes", "params"):
            arr = np.array(getattr(self, name), dtype=float, order="C")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def encode_dataset(red: Reduction, data: SnapshotSet) -> LatentCodes:
    X = encoder_input(red.config.mode, data.params, data.states)
    if X.shape[1] != red.encoder.layers[0].params["W"].shape[1]:
        raise ValueError("snapshot dimensions do not match the encoder")
    return LatentCodes(red.encoder.forward(X).T, data.params, red.decoder.fingerprint())


# -- stage 2 -----------------------------------------------------------------

def train_reduced_map(latent: LatentCodes, cfg: MapConfig, callback=None):
    """Fit phi: mu -> latent code. Returns (phi, loss history).

    Only phi's parameters are handed to the optimizer; the codes are a
    read-only array, so nothing upstream can move.
    """
    if not isinstance(latent, LatentCodes):
        raise TypeError("train_reduced_map expects the output of encode_dataset")
    p, n = latent.params.shape[0], latent.codes.shape[0]
    phi = he_init(build_reduced_map(p, n, cfg), cfg.seed, SEED_MAP)
    hist = train(phi, latent.params.T, latent.codes.T, cfg.loss, cfg.optimizer,
                 cfg.epochs, cfg.batch_size, seed=cfg.seed, callback=callback)
    return phi, hist


@dataclass
class DlRom:
    decoder: Network
    reduced_map: Network
    mode: str
    latent_dim: int
    encoder: Network | None = None

    @property
    def p(self) -> int:
        return self.reduced_map.layers[0].params["W"].shape[1]

    def predict(self, params) -> np.ndarray:
        """States (N_h, l) for a parameter matrix (p, l); no FOM involved."""
        M = np.asarray(params, dtype=float)
        if M.ndim == 1:
            M = M[:, None]
        if M.shape[0] != self.p:
            raise ValueError(f"expected {self.p} parameters, got {M.shape[0]}")
        return self.decoder.forward(self.reduced_map.forward(M.T)).T

    def latent(self, params) -> np.ndarray:
        M = np.asarray(params, dtype=float).reshape(self.p, -1)
        return self.reduced_map.forward(M.T).T


def compose(decoder: Network, reduced_map: Network, mode: str = TRANSCODER,
            encoder: Network | None = None) -> DlRom:
    n_out = reduced_map.layers[-1].params["W"].shape[0]
    n_in = decoder.layers[0].params["W"].shape[1]
    if n_out != n_in:
        raise ValueError(f"reduced map outputs {n_out} values, decoder expects {n_in}")
    return DlRom(decoder, reduced_map, mode, n_in, encoder)


# -- evaluation --------------------------------------------------------------

def _norms(A: np.ndarray, mass) -> np.ndarray:
    if mass is None:
        return np.linalg.norm(A, axis=0)
    return np.sqrt(np.maximum(np.sum(A * (mass @ A), axis=0), 0.0))


@dataclass(frozen=True)
class SplitErrors:
    """Per-sample error terms on one split, norms as columns of length N."""
    total: np.ndarray        # ||u - Psi(phi(mu))||
    reference: np.ndarray    # ||u||
    recon: np.ndarray        # ||u - Psi(enc(u))||
    decoder_gap: np.ndarray  # ||Psi(enc(u)) - Psi(phi(mu))||
    latent: np.ndarray       # |enc(u) - phi(mu)|, Euclidean

    @property
    def relative(self) -> np.ndarray:
        return self.total / self.reference

    @property
    def recon_relative(self) -> np.ndarray:
        return self.recon / self.reference

    @property
    def slack(self) -> np.ndarray:
        return self.recon + self.decoder_gap - self.total

    @property
    def mre(self) -> float:
        return float(np.mean(self.relative))

    @property
    def recon_mre(self) -> float:
        return float(np.mean(self.recon_relative))


def split_errors(model: DlRom, encoder: Network, data: SnapshotSet, mass=None) -> SplitErrors:
    U = np.asarray(data.states)
    ref = _norms(U, mass)
    if np.any(ref == 0):
        raise ValueError("relative error undefined for a zero snapshot")
    codes = encoder.forward(encoder_input(model.mode, data.params, U)).T
    mapped = model.latent(data.params)
    recon = model.decoder.forward(codes.T).T
    pred = model.decoder.forward(mapped.T).T
    return SplitErrors(total=_norms(U - pred, mass), reference=ref,
                       recon=_norms(U - recon, mass), decoder_gap=_norms(recon - pred, mass),
                       latent=np.linalg.norm(codes - mapped, axis=0))


@dataclass(frozen=True)
class ErrorReport:
    train: SplitErrors
    test: SplitErrors
    norm: str

    @property
    def mre_train(self) -> float:
        return self.train.mre

    @property
    def mre_test(self) -> float:
        return self.test.mre

    def summary(self) -> dict:
        out = {"norm": self.norm}
        for name, s in (("train", self.train), ("test", self.test)):
            out[f"mre_{name}"] = s.mre
            out[f"recon_mre_{name}"] = s.recon_mre
            out[f"recon_sup_{name}"] = float(s.recon.max())
            out[f"latent_mean_{name}"] = float(s.latent.mean())
            out[f"latent_sup_{name}"] = float(s.latent.max())
            out[f"min_slack_{name}"] = float(s.slack.min())
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["split", "index", "relative", "total", "reference", "recon",
                    "decoder_gap", "latent", "slack"])
        for name, s in (("train", self.train), ("test", self.test)):
            for j in range(len(s.total)):
                w.writerow([name, j] + [f"{v:.17g}" for v in (
                    s.relative[j], s.total[j], s.reference[j], s.recon[j],
                    s.decoder_gap[j], s.latent[j], s.slack[j])])
        for key, value in self.summary().items():
            if key != "norm":
                w.writerow(["summary", key, f"{value:.17g}", "", "", "", "", "", ""])
        return buf.getvalue()


def evaluate(model: DlRom, encoder: Network, train_set: SnapshotSet, test_set: SnapshotSet,
             mass=None) -> ErrorReport:
    """MRE and the per-sample split of each error into reconstruction and map terms.

    ``mass`` selects the L2 norm of the FE space; without it the Euclidean
    norm of the coefficient vector is used.
    """
    return ErrorReport(split_errors(model, encoder, train_set, mass),
                       split_errors(model, encoder, test_set, mass),
                       "euclidean" if mass is None else "l2")


# -- latent export -----------------------------------------------------------

def export_latents(model: DlRom, params) -> str:
    M = np.asarray(params, dtype=float)
    if M.ndim == 1:
        M = M[None, :]
    Z = model.latent(M)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"mu{i + 1}" for i in range(M.shape[0])] + [f"z{i + 1}" for i in range(Z.shape[0])])
    for j in range(M.shape[1]):
        w.writerow([f"{v:.17g}" for v in M[:, j]] + [f"{v:.17g}" for v in Z[:, j]])
    return buf.getvalue()


# -- persistence -------------------------------------------------------------

class ManifestError(ValueError):
    pass


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_reduction(red: Reduction, directory, data_hash: str) -> dict:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_network(red.encoder, d / "encoder.nnw")
    save_network(red.decoder, d / "decoder.nnw")
    manifest = {"stage": "reduction", "config": red.config.to_dict(),
                "config_hash": config_digest(red.config.to_dict()), "data_hash": data_hash,
                "encoder_sha256": _file_digest(d / "encoder.nnw"),
                "decoder_sha256": _file_digest(d / "decoder.nnw")}
    (d / "reduction.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_reduction(directory, data_hash: str | None = None) -> Reduction:
    d = Path(directory)
    mpath = d / "reduction.json"
    if not mpath.exists():
        raise FileNotFoundError(f"no reduction model in {d}")
    manifest = json.loads(mpath.read_text())
    cfg = ReductionConfig.from_dict(manifest["config"])
    if config_digest(cfg.to_dict()) != manifest["config_hash"]:
        raise ManifestError("reduction config hash mismatch")
    if data_hash is not None and manifest["data_hash"] != data_hash:
        raise ManifestError("reduction model was trained on different snapshots")
    for part in ("encoder", "decoder"):
        if _file_digest(d / f"{part}.nnw") != manifest[f"{part}_sha256"]:
            raise ManifestError(f"{part}.nnw does not match the manifest")
    return Reduction(cfg, load_network(d / "encoder.nnw"), load_network(d / "decoder.nnw"), [])


def save_model(model: DlRom, map_cfg: MapConfig, directory, reduction_manifest: dict) -> dict:
    d = Path(directory)
    save_network(model.reduced_map, d / "reduced_map.nnw")
    manifest = {"stage": "model", "mode": model.mode, "latent_dim": model.latent_dim,
                "map_config": map_cfg.to_dict(),
                "map_config_hash": config_digest(map_cfg.to_dict()),
                "reduction_config_hash": reduction_manifest["config_hash"],
                "decoder_sha256": reduction_manifest["decoder_sha256"],
                "reduced_map_sha256": _file_digest(d / "reduced_map.nnw")}
    (d / "model.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_model(directory) -> tuple[DlRom, Reduction]:
    d = Path(directory)
    red = load_reduction(d)
    mpath = d / "model.json"
    if not mpath.exists():
        raise FileNotFoundError(f"no reduced map in {d}")
    manifest = json.loads(mpath.read_text())
    rman = json.loads((d / "reduction.json").read_text())
    if (manifest["reduction_config_hash"] != rman["config_hash"]
            or manifest["decoder_sha256"] != rman["decoder_sha256"]):
        raise ManifestError("reduced map was trained against a different reduction model")
    if _file_digest(d / "reduced_map.nnw") != manifest["reduced_map_sha256"]:
        raise ManifestError("reduced_map.nnw does not match the manifest")
    phi = load_network(d / "reduced_map.nnw")
    return compose(red.decoder, phi, red.config.mode, red.encoder), red


__all__ = [n for n in dir() if not n.startswith("_")] + ["replace"]
