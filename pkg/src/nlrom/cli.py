"""Command-line pipeline: generate -> train-reduction -> train-map -> eval.

All commands share one run directory (``--out``) and one JSON config.

Config schema::

    {
      "problem": "advdiff" | "stoch_poisson" | "circle_pde" | "curve" | "unit_circle",
      "problem_config": {...},      # advdiff: AdvDiffConfig fields; stoch_poisson:
                                    # {"nx", "target_fraction"}; circle_pde: {"nx"};
                                    # curve: {"n"}; unit_circle: {}
      "sampling": {"n_train": 1000, "n_test": 200, "seed": 0},
      "reduction": {"mode", "latent_dim", "channels", "decoder", "decoder_hidden",
                    "encoder_hidden", "loss", "optimizer", "epochs", "batch_size", "seed"},
      "map": {"hidden", "loss", "optimizer", "epochs", "batch_size", "seed"},
      "pod": {"n_list": [1, 3, 7]},
      "latents": {"grid": [lo, hi, count]} | {"source": "test"}
    }

Exit codes: 0 success, 2 configuration error, 3 missing or mismatched
stage artifacts, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import snapshots as snp
from .dlrom import (TRANSCODER, ManifestError, MapConfig, ReductionConfig,
                    compose, encode_dataset, evaluate, export_latents, load_model,
                    load_reduction, save_model, save_reduction, train_reduced_map,
                    train_reduction)
from .kl import stoch_poisson_problem
from .mesh_fem import SolverError
from .nn import OptimizerConfig, TrainingDiverged
from .pod import curve_to_csv, error_dof_curve
from .problems import (ADVDIFF_BOUNDS, TWO_PI, AdvDiffConfig, advdiff_problem, circle_problem,
                       curve_problem, unit_circle_problem)
from .rng import PRNG_NAME

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    pass


# -- problem setup -----------------------------------------------------------

class ProblemSetup:
    """Problem handle plus everything the later stages derive from the config."""

    def __init__(self, cfg: dict):
        name = cfg.get("problem")
        pc = dict(cfg.get("problem_config", {}))
        self.name, self.kl_basis, self.grid = name, None, None
        if name == "advdiff":
            conf = AdvDiffConfig.from_dict(pc)
            self.problem = advdiff_problem(conf)
            self.bounds = ADVDIFF_BOUNDS
            self.grid = self.problem.mesh.grid_shape
        elif name == "stoch_poisson":
            self.problem, self.kl_basis = stoch_poisson_problem(
                int(pc.get("nx", 32)), float(pc.get("target_fraction", 0.9)))
            self.bounds = None  # standard Gaussian
            self.grid = self.problem.mesh.grid_shape
        elif name == "circle_pde":
            self.problem = circle_problem(int(pc.get("nx", 64)))
            self.bounds = ((0.0, TWO_PI),)
            self.grid = self.problem.mesh.grid_shape
        elif name == "curve":
            self.problem = curve_problem(int(pc.get("n", 256)))
            self.bounds = ((0.0, 1.0),)
        elif name == "unit_circle":
            self.problem = unit_circle_problem()
            self.bounds = ((0.0, TWO_PI),)
        else:
            raise ConfigError(f"unknown problem {name!r}")

    @property
    def mass(self):
        mesh = self.problem.mesh
        return None if mesh is None else mesh.mass

    def sample(self, n: int, seed: int) -> np.ndarray:
        if self.bounds is None:
            return snp.sample_gaussian(self.problem.p, n, seed)
        return snp.sample_uniform(self.bounds, n, seed)


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict) or "problem" not in cfg:
        raise ConfigError("config must be an object with a 'problem' entry")
    return cfg


def _optimizer(d: dict | None, default: OptimizerConfig) -> OptimizerConfig:
    if d is None:
        return default
    try:
        return OptimizerConfig(**{**default.to_dict(), **d})
    except TypeError as exc:
        raise ConfigError(f"bad optimizer config: {exc}") from exc


def reduction_config(cfg: dict, setup: ProblemSetup, n_h: int, seed=None) -> ReductionConfig:
    r = dict(cfg.get("reduction", {}))
    mode = r.pop("mode", TRANSCODER)
    p = setup.problem.p
    latent = r.pop("latent_dim", p if mode == TRANSCODER else None)
    if latent is None:
        raise ConfigError("an autoencoder needs an explicit latent_dim")
    decoder = r.pop("decoder", "conv" if setup.grid is not None else "dense")
    grid = tuple(setup.grid) if decoder == "conv" else None
    if decoder == "conv" and setup.grid is None:
        raise ConfigError("convolutional decoder needs a 2D grid problem")
    opt = _optimizer(r.pop("optimizer", None), OptimizerConfig())
    if seed is not None:
        r["seed"] = seed
    for key in ("decoder_hidden", "encoder_hidden"):
        if key in r:
            r[key] = tuple(r[key])
    try:
        return ReductionConfig(mode=mode, p=p, latent_dim=int(latent), state_dim=n_h,
                               grid=grid, optimizer=opt, **r)
    except TypeError as exc:
        raise ConfigError(f"bad reduction config: {exc}") from exc


def map_config(cfg: dict, seed=None) -> MapConfig:
    m = dict(cfg.get("map", {}))
    opt = _optimizer(m.pop("optimizer", None), OptimizerConfig(lr=1e-3))
    if "hidden" in m:
        m["hidden"] = tuple(m["hidden"])
    if seed is not None:
        m["seed"] = seed
    try:
        return MapConfig(optimizer=opt, **m)
    except TypeError as exc:
        raise ConfigError(f"bad map config: {exc}") from exc


# -- helpers -----------------------------------------------------------------

def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise StageError(f"{path.name} missing: run '{stage}' first")
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _loss_csv(history) -> str:
    return "epoch,loss\n" + "".join(f"{i + 1},{v:.17g}\n" for i, v in enumerate(history))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_splits(out: Path):
    train = snp.load(_require(out / "train.snp1", "generate"))
    test = snp.load(_require(out / "test.snp1", "generate"))
    return train, test


# -- commands ----------------------------------------------------------------

def cmd_generate(cfg: dict, out: Path, seed=None, threads: int = 1) -> None:
    setup = ProblemSetup(cfg)
    s = dict(cfg.get("sampling", {}))
    n_train, n_test = int(s.get("n_train", 1000)), int(s.get("n_test", 200))
    seed = int(s.get("seed", 0) if seed is None else seed)
    if n_train < 1 or n_test < 1:
        raise ConfigError("n_train and n_test must be positive")
    # one stream per column over train+test, so the split never reuses a draw
    params = setup.sample(n_train + n_test, seed)
    full = snp.generate(setup.problem, params, seed=seed, threads=threads)
    out.mkdir(parents=True, exist_ok=True)
    snp.save(full.subset(slice(0, n_train)), out / "train.snp1")
    snp.save(full.subset(slice(n_train, None)), out / "test.snp1")
    meta = {"problem": setup.name, "problem_config": setup.problem.config, "seed": seed,
            "n_train": n_train, "n_test": n_test, "p": setup.problem.p, "n_h": full.n_h,
            "prng": PRNG_NAME, "train_sha256": _sha256(out / "train.snp1"),
            "test_sha256": _sha256(out / "test.snp1")}
    if setup.kl_basis is not None:
        b = setup.kl_basis
        kl_set = snp.SnapshotSet(b.eigenvalues[None, :], b.eigenfunctions, "kl_basis",
                                 setup.problem.config, 0, setup.problem.mesh.descriptor(),
                                 {"mean": b.mean, "total_variance": b.total_variance})
        snp.save(kl_set, out / "kl.snp1")
        meta["kl_sha256"] = _sha256(out / "kl.snp1")
        meta["kl_k"] = b.k
    _write_json(out / "meta.json", meta)


def cmd_train_reduction(cfg: dict, out: Path, seed=None) -> None:
    setup = ProblemSetup(cfg)
    train_set = snp.load(_require(out / "train.snp1", "generate"))
    rc = reduction_config(cfg, setup, train_set.n_h, seed)
    red = train_reduction(rc, train_set)
    save_reduction(red, out, _sha256(out / "train.snp1"))
    (out / "reduction_loss.csv").write_text(_loss_csv(red.history))


def cmd_train_map(cfg: dict, out: Path, seed=None) -> None:
    _require(out / "reduction.json", "train-reduction")
    train_set = snp.load(_require(out / "train.snp1", "generate"))
    red = load_reduction(out, data_hash=_sha256(out / "train.snp1"))
    mc = map_config(cfg, seed)
    before = red.decoder.fingerprint()
    phi, hist = train_reduced_map(encode_dataset(red, train_set), mc)
    if red.decoder.fingerprint() != before:
        raise StageError("decoder changed while fitting the reduced map")
    rman = json.loads((out / "reduction.json").read_text())
    save_model(compose(red.decoder, phi, red.config.mode, red.encoder), mc, out, rman)
    (out / "map_loss.csv").write_text(_loss_csv(hist))


def cmd_eval(cfg: dict, out: Path) -> dict:
    setup = ProblemSetup(cfg)
    _require(out / "model.json", "train-map")
    model, red = load_model(out)
    train_set, test_set = _load_splits(out)
    report = evaluate(model, red.encoder, train_set, test_set, setup.mass)
    (out / "errors.csv").write_text(report.to_csv())
    return report.summary()


def cmd_pod(cfg: dict, out: Path) -> None:
    setup = ProblemSetup(cfg)
    train_set, test_set = _load_splits(out)
    n_list = cfg.get("pod", {}).get("n_list", [1, 2, 4, 8, 16])
    rows = error_dof_curve(np.asarray(train_set.states), np.asarray(test_set.states),
                           n_list, setup.mass)
    (out / "pod_curve.csv").write_text(curve_to_csv(rows))


def cmd_export_latents(cfg: dict, out: Path) -> None:
    _require(out / "model.json", "train-map")
    model, _ = load_model(out)
    spec = cfg.get("latents", {"source": "test"})
    if "grid" in spec:
        lo, hi, count = spec["grid"]
        if model.p != 1:
            raise ConfigError("a latent grid needs a scalar parameter")
        params = np.linspace(float(lo), float(hi), int(count))[None, :]
    else:
        params = np.asarray(snp.load(_require(out / "test.snp1", "generate")).params)
    (out / "latents.csv").write_text(export_latents(model, params))


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlrom", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("generate", "train-reduction", "train-map", "eval", "pod", "export-latents"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="run directory")
        if name in ("generate", "train-reduction", "train-map"):
            p.add_argument("--seed", type=int, default=None, help="override the stage seed")
        if name == "generate":
            p.add_argument("--threads", type=int, default=1)
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        cfg = load_config(args.config)
        if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if args.command == "generate":
            cmd_generate(cfg, out, args.seed, max(1, args.threads))
        elif args.command == "train-reduction":
            cmd_train_reduction(cfg, out, args.seed)
        elif args.command == "train-map":
            cmd_train_map(cfg, out, args.seed)
        elif args.command == "eval":
            summary = cmd_eval(cfg, out)
            print(json.dumps(summary, sort_keys=True))
        elif args.command == "pod":
            cmd_pod(cfg, out)
        else:
            cmd_export_latents(cfg, out)
    except (StageError, ManifestError, snp.SnapshotFormatError, FileNotFoundError) as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (SolverError, snp.GenerationError, TrainingDiverged, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
