"""Multi-step rollouts, the FIT metric, baselines and image/CSV artifacts."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import nn
from .autoencoder import Autoencoder, decode, encode, reconstruction_cost
from .narx import NarxPredictor, prediction_cost
from .simulators import Dataset


@dataclass(frozen=True, eq=False)
class RolloutResult:
    """Predictions from origin ``t``; row ``j`` holds step ``t + j`` (row 0 is the reconstruction)."""

    origin: int
    horizon: int
    features: np.ndarray  # (horizon + 1) x m
    frames: np.ndarray  # (horizon + 1) x M, pixel space


def rollout_features(
    ae: Autoencoder,
    pred: NarxPredictor,
    frames: np.ndarray,
    controls: np.ndarray,
    origins: Sequence[int],
    horizon: int,
) -> np.ndarray:
    """Iterated one-step predictions for many origins at once.

    Returns an array of shape (len(origins), horizon + 1, m). Lags at or
    before the origin use encoded measurements, later ones use predictions;
    future controls are taken from ``controls``.
    """
    n = pred.order
    frames = np.asarray(frames, dtype=np.float64)
    controls = np.asarray(controls, dtype=np.float64).reshape(len(frames), -1)
    origins = np.asarray(origins, dtype=int)
    N = len(frames)
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    if origins.size == 0:
        raise ValueError("no origins given")
    if origins.min() < n - 1:
        raise ValueError(f"origin {origins.min()} lacks {n} measured frames of history")
    if origins.max() + horizon > N - 1:
        raise ValueError(f"origin {origins.max()} + horizon {horizon} exceeds the data (N={N})")
    z_meas = encode(ae, frames)
    m = z_meas.shape[1]
    # hist[:, i] holds the feature at time origin - (n - 1) + i
    hist = np.stack([z_meas[origins - (n - 1) + i] for i in range(n)], axis=1)
    out = np.empty((len(origins), horizon + 1, m))
    out[:, 0] = hist[:, -1]
    for j in range(1, horizon + 1):
        # predicting time origin + j; lag k sits at time origin + j - k
        blocks = []
        for k in range(1, n + 1):
            blocks.append(hist[:, n - k])
            blocks.append(controls[origins + j - k])
        z_next = nn.forward(pred.net, np.hstack(blocks))[0]
        hist = np.concatenate([hist[:, 1:], z_next[:, None, :]], axis=1)
        out[:, j] = z_next
    return out


def rollout(ae: Autoencoder, pred: NarxPredictor, dataset: Dataset, t: int, p: int) -> RolloutResult:
    feats = rollout_features(ae, pred, dataset.model_frames, dataset.controls, [t], p)[0]
    return RolloutResult(t, p, feats, dataset.to_pixels(decode(ae, feats)))


def fit_metric(true_frames: np.ndarray, predicted_frames: np.ndarray) -> float:
    """100 * (1 - RMS error) over every pixel of every evaluated frame."""
    a = np.asarray(true_frames, dtype=np.float64)
    b = np.asarray(predicted_frames, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("nothing to evaluate")
    return float(100.0 * (1.0 - np.sqrt(np.mean((a - b) ** 2))))


def validation_origins(dataset: Dataset, order: int, max_horizon: int) -> np.ndarray:
    """Origins whose history and whole horizon lie in the validation split."""
    first = dataset.split_index + order - 1
    last = dataset.n_frames - 1 - max_horizon
    if last < first:
        raise ValueError(f"horizon {max_horizon} too long for the validation split")
    return np.arange(first, last + 1)


def fit_curve(ae: Autoencoder, pred: NarxPredictor, dataset: Dataset, max_horizon: int) -> np.ndarray:
    """FIT_p for p = 0..max_horizon, averaged over the same validation origins for every p."""
    origins = validation_origins(dataset, pred.order, max_horizon)
    feats = rollout_features(ae, pred, dataset.model_frames, dataset.controls, origins, max_horizon)
    curve = np.empty(max_horizon + 1)
    for p in range(max_horizon + 1):
        predicted = dataset.to_pixels(decode(ae, feats[:, p]))
        curve[p] = fit_metric(dataset.frames[origins + p], predicted)
    return curve


def naive_baseline(dataset: Dataset, p: int) -> float:
    """FIT of predicting frame t by frame t - p over the validation split."""
    s, N = dataset.split_index, dataset.n_frames
    if p < 0 or p >= N - s:
        raise ValueError(f"p={p} must lie in [0, {N - s})")
    y = dataset.frames
    return fit_metric(y[s + p:], y[s:N - p])


def naive_curve(dataset: Dataset, max_horizon: int) -> np.ndarray:
    return np.array([naive_baseline(dataset, p) for p in range(max_horizon + 1)])


def evaluate_table(ae: Autoencoder, pred: NarxPredictor, dataset: Dataset) -> tuple[float, float]:
    """(V_P, V_R) on the validation split with frozen parameters."""
    frames, controls = dataset.validation()
    vp = prediction_cost(ae, pred, frames, controls, with_encoder_grad=False)[0]
    vr = reconstruction_cost(ae, frames)[0]
    return vp, vr


def decode_feature_grid(
    ae: Autoencoder, dataset: Dataset, n: int = 9, lo: float = -1.0, hi: float = 1.0
) -> tuple[np.ndarray, list[tuple[str, float, float]]]:
    """Decoded frames over an n x n feature grid, tiled into one image, plus feature scatter.

    Grid rows run from ``hi`` (top) to ``lo`` in the second feature, columns
    from ``lo`` to ``hi`` in the first.
    """
    if ae.feature_dim != 2:
        raise ValueError(f"feature grid needs 2-D features, model has {ae.feature_dim}")
    h, w = dataset.frame_height, dataset.frame_width
    values = np.linspace(lo, hi, n)
    composite = np.zeros((n * h, n * w))
    for r, z2 in enumerate(values[::-1]):
        pts = np.column_stack([values, np.full(n, z2)])
        imgs = dataset.to_pixels(decode(ae, pts))
        for c in range(n):
            composite[r * h:(r + 1) * h, c * w:(c + 1) * w] = imgs[c].reshape(h, w)
    z = encode(ae, dataset.model_frames)
    s = dataset.split_index
    scatter = [("train" if i < s else "validation", float(a), float(b)) for i, (a, b) in enumerate(z)]
    return np.clip(composite, 0.0, 1.0), scatter


def annulus_ratio(features: np.ndarray) -> float:
    """Smallest over largest distance of the points to their centroid."""
    z = np.asarray(features, dtype=np.float64)
    r = np.linalg.norm(z - z.mean(axis=0), axis=1)
    return float(r.min() / r.max())


def rollout_strip(truth: np.ndarray, predicted: np.ndarray, height: int, width: int) -> np.ndarray:
    """Two-row image: ground-truth frames on top, predictions below."""
    if truth.shape != predicted.shape:
        raise ValueError("truth and prediction differ in shape")
    top = np.hstack([f.reshape(height, width) for f in truth])
    bottom = np.hstack([f.reshape(height, width) for f in predicted])
    return np.clip(np.vstack([top, bottom]), 0.0, 1.0)


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Binary 8-bit PGM (P5), values in [0, 1] rounded to 0..255."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.rint(img * 255.0).astype(np.uint8)
    h, w = data.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    match = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if match is None:
        raise ValueError("not a binary PGM")
    w, h, maxval = (int(g) for g in match.groups())
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=match.end()).reshape(h, w)
    return data.astype(np.float64) / maxval


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
