"""NARX predictor in feature space and the pixel-space prediction cost.

Time indices are 0-based. The regressor for predicting step ``t`` is

    (z[t-1], u[t-1], z[t-2], u[t-2], ..., z[t-n], u[t-n])

so it exists for ``t >= n``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from .autoencoder import Autoencoder, log_cost
from .nn import Activation, FeedforwardNet


@dataclass(frozen=True)
class NarxConfig:
    order: int
    feature_dim: int
    control_dim: int

    def __post_init__(self):
        if self.order < 1 or self.feature_dim < 1 or self.control_dim < 0:
            raise ValueError(f"invalid NARX config {self}")

    @property
    def regressor_dim(self) -> int:
        return self.order * (self.feature_dim + self.control_dim)


@dataclass(frozen=True, eq=False)
class NarxPredictor:
    config: NarxConfig
    net: FeedforwardNet

    def __post_init__(self):
        if self.net.in_dim != self.config.regressor_dim:
            raise ValueError(
                f"predictor net takes {self.net.in_dim} inputs, "
                f"regressor has {self.config.regressor_dim}"
            )
        if self.net.out_dim != self.config.feature_dim:
            raise ValueError("predictor output must have the feature dimension")

    @property
    def order(self) -> int:
        return self.config.order

    @property
    def n_params(self) -> int:
        return self.net.n_params

    def flatten(self) -> np.ndarray:
        return nn.flatten(self.net)

    def with_params(self, theta: np.ndarray) -> "NarxPredictor":
        return NarxPredictor(self.config, nn.unflatten(self.net.specs, theta))


def predictor_specs(config: NarxConfig, hidden: Sequence[int] = (4,)) -> list[nn.LayerSpec]:
    dims = [config.regressor_dim, *hidden, config.feature_dim]
    acts = [Activation.TANH] * len(hidden) + [Activation.LINEAR]
    return nn.chain_specs(dims, acts)


def make_predictor(
    config: NarxConfig, hidden: Sequence[int] = (4,), seed: int = 0, scale: float = 1.0
) -> NarxPredictor:
    return NarxPredictor(config, nn.init_random(predictor_specs(config, hidden), seed, scale))


def _sequences(features, controls):
    z = np.asarray(features, dtype=np.float64)
    u = np.asarray(controls, dtype=np.float64)
    if u.ndim == 1:
        u = u.reshape(-1, 1)
    return z, u


def assemble_regressor(features, controls, t: int, n: int) -> np.ndarray:
    z, u = _sequences(features, controls)
    if t < n:
        raise ValueError(f"t={t} has only {t} past samples, order {n} needs {n}")
    if t > min(len(z), len(u)):
        raise ValueError(f"t={t} beyond the available history")
    return np.concatenate([np.concatenate([z[t - j], u[t - j]]) for j in range(1, n + 1)])


def regressor_matrix(features, controls, n: int) -> np.ndarray:
    """Regressors for every ``t = n .. N-1``, one per row."""
    z, u = _sequences(features, controls)
    N = len(z)
    blocks = []
    for j in range(1, n + 1):
        blocks.append(z[n - j:N - j])
        blocks.append(u[n - j:N - j])
    return np.hstack(blocks)


def predict_one_step(pred: NarxPredictor, window: np.ndarray) -> np.ndarray:
    window = np.asarray(window, dtype=np.float64)
    if window.shape[-1] != pred.config.regressor_dim:
        raise ValueError(
            f"window has length {window.shape[-1]}, expected {pred.config.regressor_dim}"
        )
    return nn.forward(pred.net, window)[0]


def prediction_cost(
    ae: Autoencoder,
    pred: NarxPredictor,
    frames: np.ndarray,
    controls: np.ndarray,
    with_encoder_grad: bool = True,
) -> tuple[float, np.ndarray]:
    """Log one-step prediction cost in frame space.

    Returns the cost and its gradient laid out as encoder, decoder, predictor
    parameters. With ``with_encoder_grad=False`` the encoder block is left at
    zero and the encoder backward pass is skipped.
    """
    frames, u = _sequences(frames, controls)
    cfg = pred.config
    N, n, m = len(frames), cfg.order, cfg.feature_dim
    if frames.ndim != 2 or frames.shape[1] != ae.input_dim:
        raise ValueError(f"frames must be N x {ae.input_dim}")
    if N <= n:
        raise ValueError(f"need more than {n} frames, got {N}")
    if len(u) != N or u.shape[1] != cfg.control_dim:
        raise ValueError(f"controls must be {N} x {cfg.control_dim}")
    if ae.feature_dim != m:
        raise ValueError("auto-encoder feature dim differs from predictor feature dim")

    z, enc_cache = nn.forward(ae.encoder, frames)
    windows = regressor_matrix(z, u, n)
    z_hat, pred_cache = nn.forward(pred.net, windows)
    y_hat, dec_cache = nn.forward(ae.decoder, z_hat)
    resid = frames[n:] - y_hat
    sum_sq = float(np.sum(resid * resid))
    value, dv = log_cost(sum_sq, resid.size)

    g_enc = np.zeros(ae.encoder.n_params)
    if dv == 0.0:
        return value, np.zeros(ae.n_params + pred.n_params)
    g_dec, g_zhat = nn.backward(ae.decoder, dec_cache, -2.0 * dv * resid)
    g_pred, g_win = nn.backward(pred.net, pred_cache, g_zhat)
    if with_encoder_grad:
        g_z = np.zeros_like(z)
        width = m + cfg.control_dim
        for j in range(1, n + 1):
            g_z[n - j:N - j] += g_win[:, (j - 1) * width:(j - 1) * width + m]
        g_enc, _ = nn.backward(ae.encoder, enc_cache, g_z)
    return value, np.concatenate([g_enc, g_dec, g_pred])
