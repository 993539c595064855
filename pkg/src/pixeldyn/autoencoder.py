"""Deep auto-encoder: encoder, mirrored decoder, reconstruction cost and PCA pretraining."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from .nn import Activation, FeedforwardNet, LayerSpec
from .pca import fit_pca

COST_FLOOR = 1e-12


def log_cost(sum_sq: float, count: int) -> tuple[float, float]:
    """``log(max(sum_sq / (2 count), COST_FLOOR))`` and its derivative w.r.t. ``sum_sq``."""
    mean_half = sum_sq / (2.0 * count)
    if mean_half <= COST_FLOOR:
        return float(np.log(COST_FLOOR)), 0.0
    return float(np.log(mean_half)), 1.0 / sum_sq


def autoencoder_specs(
    dims: Sequence[int], feature_activation: Activation | str = Activation.LINEAR
) -> tuple[list[LayerSpec], list[LayerSpec]]:
    """Encoder and decoder layer specs for encoder dims ``d0-d1-...-dL``.

    Hidden layers use tanh; the feature layer uses ``feature_activation`` and
    the decoder output layer is linear.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 2:
        raise ValueError("need at least an input and a feature dimension")
    if any(a <= b for a, b in zip(dims, dims[1:])):
        raise ValueError(f"encoder dims must be strictly decreasing, got {dims}")
    n_layers = len(dims) - 1
    enc_acts = [Activation.TANH] * (n_layers - 1) + [Activation(feature_activation)]
    dec_acts = [Activation.TANH] * (n_layers - 1) + [Activation.LINEAR]
    return nn.chain_specs(dims, enc_acts), nn.chain_specs(dims[::-1], dec_acts)


@dataclass(frozen=True, eq=False)
class Autoencoder:
    encoder: FeedforwardNet
    decoder: FeedforwardNet

    def __post_init__(self):
        enc = [s.in_dim for s in self.encoder.specs] + [self.encoder.out_dim]
        dec = [s.in_dim for s in self.decoder.specs] + [self.decoder.out_dim]
        if dec != enc[::-1]:
            raise ValueError(f"decoder dims {dec} do not mirror encoder dims {enc}")
        if enc[-1] >= enc[0]:
            raise ValueError("feature dimension must be smaller than the input dimension")

    @property
    def dims(self) -> list[int]:
        return [s.in_dim for s in self.encoder.specs] + [self.encoder.out_dim]

    @property
    def feature_dim(self) -> int:
        return self.encoder.out_dim

    @property
    def input_dim(self) -> int:
        return self.encoder.in_dim

    @property
    def n_params(self) -> int:
        return self.encoder.n_params + self.decoder.n_params

    def flatten(self) -> np.ndarray:
        return np.concatenate([nn.flatten(self.encoder), nn.flatten(self.decoder)])

    def with_params(self, theta: np.ndarray) -> "Autoencoder":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        ne = self.encoder.n_params
        return Autoencoder(
            nn.unflatten(self.encoder.specs, theta[:ne]),
            nn.unflatten(self.decoder.specs, theta[ne:]),
        )


def encode(ae: Autoencoder, y: np.ndarray) -> np.ndarray:
    return nn.forward(ae.encoder, y)[0]


def decode(ae: Autoencoder, z: np.ndarray) -> np.ndarray:
    return nn.forward(ae.decoder, z)[0]


def reconstruct(ae: Autoencoder, y: np.ndarray) -> np.ndarray:
    return decode(ae, encode(ae, y))


def _as_frames(frames: np.ndarray, dim: int) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise ValueError("frames must be a non-empty N x M matrix")
    if frames.shape[1] != dim:
        raise ValueError(f"frames have {frames.shape[1]} components, model expects {dim}")
    return frames


def reconstruction_cost(ae: Autoencoder, frames: np.ndarray) -> tuple[float, np.ndarray]:
    """Log reconstruction cost and its gradient over encoder then decoder parameters."""
    frames = _as_frames(frames, ae.input_dim)
    z, enc_cache = nn.forward(ae.encoder, frames)
    y_hat, dec_cache = nn.forward(ae.decoder, z)
    resid = frames - y_hat
    sum_sq = float(np.sum(resid * resid))
    value, dv = log_cost(sum_sq, frames.size)
    if dv == 0.0:
        return value, np.zeros(ae.n_params)
    g_dec, g_z = nn.backward(ae.decoder, dec_cache, -2.0 * dv * resid)
    g_enc, _ = nn.backward(ae.encoder, enc_cache, g_z)
    return value, np.concatenate([g_enc, g_dec])


def pretrain_pca(
    dims: Sequence[int],
    frames: np.ndarray,
    seed: int = 0,
    alpha: float = 0.5,
    feature_activation: Activation | str = Activation.LINEAR,
) -> Autoencoder:
    """Initialize an auto-encoder layer pair by layer pair from PCA solutions.

    Working from the outermost pair inwards, PCA is fit to the current
    representation of ``frames``; the encoder layer becomes the scaled
    projection ``alpha * basis.T (h - mean)`` and the mirrored decoder layer
    the matching reconstruction ``basis / alpha``. The representation is then
    pushed through the new encoder layer (activation included) before the next
    pair is fitted.

    Pairs whose representation has fewer than ``width + 1`` samples fall back
    to a random layer drawn with ``seed``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    enc_specs, dec_specs = autoencoder_specs(dims, feature_activation)
    h = _as_frames(frames, enc_specs[0].in_dim)
    rng = np.random.default_rng(seed)
    enc_w, enc_b, dec_w, dec_b = [], [], [], []
    for spec in enc_specs:
        k = spec.out_dim
        if h.shape[0] - 1 >= k:
            model = fit_pca(h, k)
            basis, mean = model.basis, model.mean
        else:
            basis, _ = np.linalg.qr(rng.standard_normal((spec.in_dim, k)))
            mean = h.mean(axis=0)
        w = alpha * basis.T
        b = -w @ mean
        enc_w.append(w)
        enc_b.append(b)
        dec_w.append(basis / alpha)
        dec_b.append(mean.copy())
        h = spec.activation(h @ w.T + b)
    encoder = FeedforwardNet(tuple(enc_w), tuple(enc_b), tuple(s.activation for s in enc_specs))
    decoder = FeedforwardNet(
        tuple(dec_w[::-1]), tuple(dec_b[::-1]), tuple(s.activation for s in dec_specs)
    )
    return Autoencoder(encoder, decoder)
