"""Experiment configs, the simulate/train/evaluate pipeline and the bundle file.

Config files are INI-style (``key = value`` under ``[section]`` headers)::

    [experiment]   kind, mode, n_frames, data_seed, init_seed, pca_k, output
    [simulator]    fields of PendulumParams or TileParams
    [model]        encoder_dims, feature_activation, order, predictor_dims,
                   pretrain_alpha, predictor_init_scale
    [optimizer]    memory, max_iters, grad_tol, c1, c2, max_line_search, full_bfgs

Every key is optional; missing keys take the defaults of the chosen kind.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import nn
from .autoencoder import Autoencoder, pretrain_pca, reconstruction_cost
from .evaluation import (
    annulus_ratio,
    decode_feature_grid,
    evaluate_table,
    fit_curve,
    naive_curve,
    rollout,
    rollout_strip,
    validation_origins,
    write_csv,
    write_pgm,
)
from .narx import NarxConfig, NarxPredictor, prediction_cost
from .nn import Activation, FeedforwardNet, LayerSpec
from .pca import PcaModel, project
from .simulators import (
    Dataset,
    PendulumParams,
    TileParams,
    dataset_from_bytes,
    dataset_to_bytes,
    reduce_with_pca,
    save_dataset,
    simulate_pendulum,
    simulate_tile,
)
from .trainer import OptimizerConfig, TrainingReport, train_joint, train_separate

SimParams = Union[PendulumParams, TileParams]
BUNDLE_MAGIC = b"PXBN1"
STRIP_FRAMES = 9


class ConfigError(ValueError):
    """Inconsistent experiment configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"[{key}] {message}")
        self.key = key


@dataclass
class ExperimentConfig:
    kind: str = "pendulum"
    mode: str = "joint"
    n_frames: int = 400
    data_seed: int = 4
    init_seed: int = 0
    pca_k: int = 50
    output: str = "runs/pendulum"
    simulator: SimParams = field(default_factory=PendulumParams)
    encoder_dims: tuple[int, ...] = (50, 25, 12, 6, 2)
    feature_activation: str = "tanh"
    order: int = 2
    predictor_dims: tuple[int, ...] = (6, 4, 2)
    pretrain_alpha: float = 0.5
    predictor_init_scale: float = 1.0
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(max_iters=20000))

    @property
    def control_dim(self) -> int:
        return 1 if self.kind == "pendulum" else 2

    @property
    def feature_dim(self) -> int:
        return self.encoder_dims[-1]

    def validate(self) -> None:
        if self.kind not in ("pendulum", "tile"):
            raise ConfigError("experiment.kind", f"unknown kind {self.kind!r}")
        expected = PendulumParams if self.kind == "pendulum" else TileParams
        if not isinstance(self.simulator, expected):
            raise ConfigError("simulator", f"{self.kind} needs {expected.__name__}")
        if self.mode not in ("joint", "separate"):
            raise ConfigError("experiment.mode", f"unknown mode {self.mode!r}")
        if self.n_frames < 2:
            raise ConfigError("experiment.n_frames", "need at least two frames")
        if self.encoder_dims[0] != self.pca_k:
            raise ConfigError(
                "model.encoder_dims",
                f"first encoder dim {self.encoder_dims[0]} must equal experiment.pca_k={self.pca_k}",
            )
        if list(self.encoder_dims) != sorted(set(self.encoder_dims), reverse=True):
            raise ConfigError("model.encoder_dims", "dims must be strictly decreasing")
        reg = self.order * (self.feature_dim + self.control_dim)
        if self.predictor_dims[0] != reg:
            raise ConfigError(
                "model.predictor_dims",
                f"predictor input {self.predictor_dims[0]} must be order*(features+controls)={reg}",
            )
        if self.predictor_dims[-1] != self.feature_dim:
            raise ConfigError(
                "model.predictor_dims",
                f"predictor output {self.predictor_dims[-1]} must equal the feature dim {self.feature_dim}",
            )
        try:
            Activation(self.feature_activation)
        except ValueError:
            raise ConfigError("model.feature_activation", f"unknown activation {self.feature_activation!r}")

    # -- INI round trip --------------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["experiment"] = {
            "kind": self.kind,
            "mode": self.mode,
            "n_frames": str(self.n_frames),
            "data_seed": str(self.data_seed),
            "init_seed": str(self.init_seed),
            "pca_k": str(self.pca_k),
            "output": self.output,
        }
        cp["simulator"] = {k: _fmt(v) for k, v in dataclasses.asdict(self.simulator).items()}
        cp["model"] = {
            "encoder_dims": ",".join(map(str, self.encoder_dims)),
            "feature_activation": self.feature_activation,
            "order": str(self.order),
            "predictor_dims": ",".join(map(str, self.predictor_dims)),
            "pretrain_alpha": _fmt(self.pretrain_alpha),
            "predictor_init_scale": _fmt(self.predictor_init_scale),
        }
        cp["optimizer"] = {k: _fmt(v) for k, v in dataclasses.asdict(self.optimizer).items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError("config", f"malformed INI: {exc}")
        kind = cp.get("experiment", "kind", fallback="pendulum")
        cfg = default_config(kind)
        exp = cp["experiment"] if cp.has_section("experiment") else {}
        for key in ("mode", "output"):
            if key in exp:
                setattr(cfg, key, exp[key])
        for key in ("n_frames", "data_seed", "init_seed", "pca_k"):
            if key in exp:
                setattr(cfg, key, _parse_int(exp[key], f"experiment.{key}"))
        if cp.has_section("simulator"):
            cfg.simulator = _update_dataclass(cfg.simulator, cp["simulator"], "simulator")
        if cp.has_section("model"):
            mdl = cp["model"]
            if "encoder_dims" in mdl:
                cfg.encoder_dims = _parse_dims(mdl["encoder_dims"], "model.encoder_dims")
            if "predictor_dims" in mdl:
                cfg.predictor_dims = _parse_dims(mdl["predictor_dims"], "model.predictor_dims")
            if "feature_activation" in mdl:
                cfg.feature_activation = mdl["feature_activation"]
            if "order" in mdl:
                cfg.order = _parse_int(mdl["order"], "model.order")
            for key in ("pretrain_alpha", "predictor_init_scale"):
                if key in mdl:
                    setattr(cfg, key, _parse_float(mdl[key], f"model.{key}"))
            unknown = set(mdl) - {
                "encoder_dims", "predictor_dims", "feature_activation", "order",
                "pretrain_alpha", "predictor_init_scale",
            }
            if unknown:
                raise ConfigError(f"model.{sorted(unknown)[0]}", "unknown key")
        if cp.has_section("optimizer"):
            cfg.optimizer = _update_dataclass(cfg.optimizer, cp["optimizer"], "optimizer")
        cfg.validate()
        return cfg


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _parse_int(text: str, key: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {text!r}")


def _parse_float(text: str, key: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {text!r}")


def _parse_dims(text: str, key: str) -> tuple[int, ...]:
    dims = tuple(_parse_int(p.strip(), key) for p in text.replace("-", ",").split(",") if p.strip())
    if len(dims) < 2 or min(dims) < 1:
        raise ConfigError(key, f"need at least two positive dims, got {text!r}")
    return dims


def _update_dataclass(obj, section, prefix: str):
    fields = {f.name: f for f in dataclasses.fields(obj)}
    changes = {}
    for key, text in section.items():
        if key not in fields:
            raise ConfigError(f"{prefix}.{key}", "unknown key")
        current = getattr(obj, key)
        if isinstance(current, bool):
            changes[key] = text.strip().lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int):
            changes[key] = _parse_int(text, f"{prefix}.{key}")
        else:
            changes[key] = _parse_float(text, f"{prefix}.{key}")
    try:
        return dataclasses.replace(obj, **changes)
    except ValueError as exc:
        raise ConfigError(prefix, str(exc))


def default_config(kind: str = "pendulum") -> ExperimentConfig:
    """Pendulum: 50-25-12-6-2 with a 6-4-2 predictor. Tile: 50-25-12-8-2 with 8-5-2."""
    if kind == "pendulum":
        return ExperimentConfig()
    if kind == "tile":
        return ExperimentConfig(
            kind="tile",
            n_frames=601,
            output="runs/tile",
            simulator=TileParams(),
            encoder_dims=(50, 25, 12, 8, 2),
            predictor_dims=(8, 5, 2),
        )
    raise ConfigError("experiment.kind", f"unknown kind {kind!r}")


def load_config(path: str | Path) -> ExperimentConfig:
    return ExperimentConfig.from_ini(Path(path).read_text())


# -- pipeline -------------------------------------------------------------------


def simulate(cfg: ExperimentConfig) -> Dataset:
    cfg.validate()
    if cfg.kind == "pendulum":
        return simulate_pendulum(cfg.simulator, cfg.data_seed, cfg.n_frames)
    return simulate_tile(cfg.simulator, cfg.data_seed, cfg.n_frames)


def with_pca(dataset: Dataset, model: PcaModel) -> Dataset:
    return dataclasses.replace(dataset, pca=model, reduced_frames=project(model, dataset.frames))


def initial_models(cfg: ExperimentConfig, dataset: Dataset) -> tuple[Autoencoder, NarxPredictor]:
    """PCA-pretrained auto-encoder and a seeded random predictor."""
    frames, _ = dataset.train()
    ae = pretrain_pca(
        cfg.encoder_dims, frames, seed=cfg.init_seed, alpha=cfg.pretrain_alpha,
        feature_activation=cfg.feature_activation,
    )
    ncfg = NarxConfig(cfg.order, cfg.feature_dim, dataset.control_dim)
    acts = [Activation.TANH] * (len(cfg.predictor_dims) - 2) + [Activation.LINEAR]
    specs = nn.chain_specs(cfg.predictor_dims, acts)
    pred = NarxPredictor(ncfg, nn.init_random(specs, cfg.init_seed, cfg.predictor_init_scale))
    return ae, pred


@dataclass
class Bundle:
    config: ExperimentConfig
    dataset: Dataset  # with PCA attached
    autoencoder: Autoencoder
    predictor: NarxPredictor
    report: TrainingReport
    metrics: dict


def train(cfg: ExperimentConfig, dataset: Dataset) -> Bundle:
    """PCA pre-reduction, PCA pretraining, then joint or separate training on the training split."""
    cfg.validate()
    if dataset.control_dim != cfg.control_dim:
        raise ConfigError("experiment.kind", f"dataset has {dataset.control_dim} controls")
    reduced = reduce_with_pca(dataset, cfg.pca_k)
    ae0, pred0 = initial_models(cfg, reduced)
    frames, controls = reduced.train()
    routine = train_joint if cfg.mode == "joint" else train_separate
    ae, pred, report = routine(ae0, pred0, frames, controls, cfg.optimizer)
    metrics = training_metrics(ae, pred, reduced)
    return Bundle(cfg, reduced, ae, pred, report, metrics)


def training_metrics(ae: Autoencoder, pred: NarxPredictor, dataset: Dataset) -> dict:
    frames, controls = dataset.train()
    vp_val, vr_val = evaluate_table(ae, pred, dataset)
    return {
        "train_V_P": prediction_cost(ae, pred, frames, controls, with_encoder_grad=False)[0],
        "train_V_R": reconstruction_cost(ae, frames)[0],
        "validation_V_P": vp_val,
        "validation_V_R": vr_val,
    }


def param_digest(theta: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(theta, dtype="<f8").tobytes()).hexdigest()


# -- bundle file ----------------------------------------------------------------


def _net_bytes(net: FeedforwardNet) -> bytes:
    head = struct.pack("<I", len(net.specs))
    for s in net.specs:
        head += struct.pack("<IIB", s.in_dim, s.out_dim, 0 if s.activation is Activation.TANH else 1)
    return head + nn.flatten(net).astype("<f8").tobytes()


def _net_from_bytes(data: bytes) -> FeedforwardNet:
    (n_layers,) = struct.unpack_from("<I", data, 0)
    off, specs = 4, []
    for _ in range(n_layers):
        i, o, a = struct.unpack_from("<IIB", data, off)
        off += 9
        specs.append(LayerSpec(i, o, Activation.TANH if a == 0 else Activation.LINEAR))
    theta = np.frombuffer(data, dtype="<f8", offset=off).astype(np.float64)
    return nn.unflatten(specs, theta)


def _pca_bytes(model: PcaModel) -> bytes:
    d, k = model.basis.shape
    return (
        struct.pack("<II", d, k)
        + model.mean.astype("<f8").tobytes()
        + model.basis.astype("<f8").tobytes(order="C")
        + model.variances.astype("<f8").tobytes()
    )


def _pca_from_bytes(data: bytes) -> PcaModel:
    d, k = struct.unpack_from("<II", data, 0)
    arr = np.frombuffer(data, dtype="<f8", offset=8).astype(np.float64)
    return PcaModel(mean=arr[:d], basis=arr[d:d + d * k].reshape(d, k), variances=arr[d + d * k:])


def bundle_to_bytes(bundle: Bundle) -> bytes:
    report = {"report": bundle.report.to_dict(), "metrics": bundle.metrics}
    sections = [
        ("config", bundle.config.to_ini().encode("utf-8")),
        ("dataset", dataset_to_bytes(bundle.dataset)),
        ("pca", _pca_bytes(bundle.dataset.pca)),
        ("encoder", _net_bytes(bundle.autoencoder.encoder)),
        ("decoder", _net_bytes(bundle.autoencoder.decoder)),
        ("predictor", struct.pack("<III", *dataclasses.astuple(bundle.predictor.config))
         + _net_bytes(bundle.predictor.net)),
        ("report", json.dumps(report, sort_keys=True).encode("utf-8")),
    ]
    out = bytearray(BUNDLE_MAGIC)
    for name, payload in sections:
        raw = name.encode("ascii")
        out += struct.pack("<I", len(raw)) + raw + struct.pack("<Q", len(payload)) + payload
    return bytes(out)


def bundle_from_bytes(data: bytes) -> Bundle:
    if data[:5] != BUNDLE_MAGIC:
        raise ValueError("not a PXBN1 bundle")
    off, sections = 5, {}
    while off < len(data):
        (nlen,) = struct.unpack_from("<I", data, off)
        name = data[off + 4:off + 4 + nlen].decode("ascii")
        off += 4 + nlen
        (plen,) = struct.unpack_from("<Q", data, off)
        off += 8
        sections[name] = data[off:off + plen]
        off += plen
    cfg = ExperimentConfig.from_ini(sections["config"].decode("utf-8"))
    pca = _pca_from_bytes(sections["pca"])
    dataset = with_pca(dataset_from_bytes(sections["dataset"]), pca)
    ae = Autoencoder(_net_from_bytes(sections["encoder"]), _net_from_bytes(sections["decoder"]))
    order, m, du = struct.unpack_from("<III", sections["predictor"], 0)
    pred = NarxPredictor(NarxConfig(order, m, du), _net_from_bytes(sections["predictor"][12:]))
    payload = json.loads(sections["report"].decode("utf-8"))
    return Bundle(cfg, dataset, ae, pred, TrainingReport.from_dict(payload["report"]), payload["metrics"])


def save_bundle(bundle: Bundle, path: str | Path) -> None:
    Path(path).write_bytes(bundle_to_bytes(bundle))


def load_bundle(path: str | Path) -> Bundle:
    return bundle_from_bytes(Path(path).read_bytes())


# -- outputs ----------------------------------------------------------------------


def write_cost_trace(report: TrainingReport, path: str | Path) -> None:
    stages = report.stages or [report]
    rows = [(i + 1, it, float(c)) for i, st in enumerate(stages) for it, c in enumerate(st.costs)]
    write_csv(path, ["stage", "iteration", "cost"], rows)


@dataclass
class Evaluation:
    fit: np.ndarray
    naive: np.ndarray
    V_P: float
    V_R: float
    annulus: Optional[float] = None


def evaluate(bundle: Bundle, dataset: Dataset, max_horizon: int, out_dir: str | Path) -> Evaluation:
    """Write FIT curves, the cost table, rollout strips and (2-D features) the feature grid."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = with_pca(dataset, bundle.dataset.pca)
    ae, pred = bundle.autoencoder, bundle.predictor
    fit = fit_curve(ae, pred, ds, max_horizon)
    naive = naive_curve(ds, max_horizon)
    vp, vr = evaluate_table(ae, pred, ds)
    label = bundle.config.mode
    write_csv(out / "fit.csv", ["horizon", "fit_percent"], [(p, float(v)) for p, v in enumerate(fit)])
    write_csv(out / "naive.csv", ["horizon", "fit_percent"], [(p, float(v)) for p, v in enumerate(naive)])
    write_csv(out / "table.csv", ["model", "V_P", "V_R"], [(label, vp, vr)])

    origins = validation_origins(ds, pred.order, STRIP_FRAMES - 1)
    for t in (origins[0], origins[len(origins) // 2]):
        res = rollout(ae, pred, ds, int(t), STRIP_FRAMES - 1)
        strip = rollout_strip(ds.frames[t:t + STRIP_FRAMES], res.frames, ds.frame_height, ds.frame_width)
        write_pgm(out / f"strip_t{int(t):04d}.pgm", strip)

    annulus = None
    if ae.feature_dim == 2:
        annulus = render_grid(bundle, ds, out)
    return Evaluation(fit, naive, vp, vr, annulus)


def render_grid(bundle: Bundle, dataset: Dataset, out_dir: str | Path) -> float:
    """Feature-grid composite and feature scatter; returns the validation annulus ratio."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    composite, scatter = decode_feature_grid(bundle.autoencoder, dataset)
    write_pgm(out / "feature_grid.pgm", composite)
    write_csv(out / "features.csv", ["split", "z1", "z2"], scatter)
    val = np.array([(a, b) for s, a, b in scatter if s == "validation"])
    return annulus_ratio(val)


@dataclass
class Comparison:
    """Outcome of training and evaluating several modes on one dataset."""

    dataset: Dataset
    bundles: dict[str, Bundle]
    evaluations: dict[str, Evaluation]

    @property
    def naive(self) -> np.ndarray:
        return next(iter(self.evaluations.values())).naive


def run_comparison(
    cfg: ExperimentConfig,
    out_dir: str | Path,
    modes: tuple[str, ...] = ("joint", "separate"),
    max_horizon: int = 8,
) -> Comparison:
    """Simulate once, then train and evaluate each mode; write every artifact under ``out_dir``.

    Layout: ``dataset.pxdy``, ``<mode>/bundle.pxbn``, ``<mode>/costs.csv``,
    ``<mode>/eval/*``, plus ``table.csv`` and ``fit_curves.csv`` with all modes
    side by side (the last column of ``fit_curves.csv`` is the naive baseline).
    The bundles keep ``cfg`` apart from the mode, so runs into different
    directories produce identical bundles.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = simulate(cfg)
    save_dataset(dataset, out / "dataset.pxdy")
    bundles, evals = {}, {}
    for mode in modes:
        mcfg = dataclasses.replace(cfg, mode=mode)
        bundle = train(mcfg, dataset)
        mdir = out / mode
        mdir.mkdir(parents=True, exist_ok=True)
        save_bundle(bundle, mdir / "bundle.pxbn")
        write_cost_trace(bundle.report, mdir / "costs.csv")
        evals[mode] = evaluate(bundle, dataset, max_horizon, mdir / "eval")
        bundles[mode] = bundle
    write_csv(out / "table.csv", ["model", "V_P", "V_R"],
              [(m, float(e.V_P), float(e.V_R)) for m, e in evals.items()])
    naive = evals[modes[0]].naive
    rows = [(p, *(float(evals[m].fit[p]) for m in modes), float(naive[p]))
            for p in range(max_horizon + 1)]
    write_csv(out / "fit_curves.csv", ["horizon", *modes, "naive"], rows)
    return Comparison(dataset, bundles, evals)
