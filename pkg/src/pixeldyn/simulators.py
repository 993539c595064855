"""Pendulum and moving-tile image sequences, plus the PXDY1 dataset format."""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .pca import PcaModel, fit_pca, project, reconstruct

MAGIC = b"PXDY1"


@dataclass(frozen=True, eq=False)
class Dataset:
    frames: np.ndarray  # N x M, pixels in [0, 1]
    controls: np.ndarray  # N x d_u
    frame_height: int
    frame_width: int
    dt: float
    split_index: int
    pca: Optional[PcaModel] = None
    reduced_frames: Optional[np.ndarray] = None

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        controls = np.asarray(self.controls, dtype=np.float64)
        if controls.ndim == 1:
            controls = controls.reshape(-1, 1)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "controls", controls)
        N, M = frames.shape
        if M != self.frame_height * self.frame_width:
            raise ValueError(f"M={M} != {self.frame_height}x{self.frame_width}")
        if controls.shape[0] != N:
            raise ValueError("frames and controls differ in length")
        if not 1 <= self.split_index < N:
            raise ValueError(f"split_index={self.split_index} outside [1, {N})")
        if frames.min() < 0.0 or frames.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.frames.shape[1]

    @property
    def control_dim(self) -> int:
        return self.controls.shape[1]

    @property
    def model_frames(self) -> np.ndarray:
        """What the models train on: PCA coefficients when reduced, raw pixels otherwise."""
        return self.frames if self.reduced_frames is None else self.reduced_frames

    def to_pixels(self, model_space: np.ndarray) -> np.ndarray:
        """Map model-space frames back to pixel space."""
        if self.pca is None:
            return np.asarray(model_space, dtype=np.float64)
        return reconstruct(self.pca, model_space)

    def train(self) -> tuple[np.ndarray, np.ndarray]:
        return self.model_frames[:self.split_index], self.controls[:self.split_index]

    def validation(self) -> tuple[np.ndarray, np.ndarray]:
        return self.model_frames[self.split_index:], self.controls[self.split_index:]


def smoothed_walk(rng: np.random.Generator, n: int, dim: int, window: int = 5) -> np.ndarray:
    """Random walk of unit-variance steps passed through a trailing moving average."""
    walk = np.cumsum(rng.standard_normal((n + window - 1, dim)), axis=0)
    kernel = np.ones(window) / window
    return np.stack([np.convolve(walk[:, j], kernel, mode="valid") for j in range(dim)], axis=1)


def smoothed_noise(rng: np.random.Generator, n: int, dim: int, window: int = 5) -> np.ndarray:
    """Unit-variance white noise passed through a trailing moving average."""
    noise = rng.standard_normal((n + window - 1, dim))
    kernel = np.ones(window) / window
    return np.stack([np.convolve(noise[:, j], kernel, mode="valid") for j in range(dim)], axis=1)


# ---------------------------------------------------------------------------
# pendulum


@dataclass(frozen=True)
class PendulumParams:
    mass: float = 1.0
    length: float = 1.0
    damping: float = 0.1
    dt: float = 0.05
    torque_scale: float = 1.0
    torque_reversion: float = 0.2
    initial_angle: float = 0.0
    initial_velocity: float = 2.0
    rod_length: float = 12.0
    rod_halfwidth: float = 1.25
    image_size: int = 51
    supersample: int = 5
    split_fraction: float = 0.75

    def __post_init__(self):
        for name in ("mass", "length", "dt", "rod_length", "rod_halfwidth"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.damping < 0 or self.torque_scale < 0:
            raise ValueError("damping and torque_scale must be non-negative")
        if not 0 <= self.torque_reversion <= 1:
            raise ValueError("torque_reversion must lie in [0, 1]")
        if self.image_size < 3 or self.supersample < 1:
            raise ValueError("image_size must be >= 3 and supersample >= 1")
        if self.rod_length + self.rod_halfwidth >= self.image_size / 2:
            raise ValueError("rod does not fit inside the frame")
        if not 0 < self.split_fraction < 1:
            raise ValueError("split_fraction must lie in (0, 1)")


def torque_signal(params: PendulumParams, seed: int, n: int) -> np.ndarray:
    """Smoothed random torque: a mean-reverting walk through a 5-step moving average.

    ``torque_reversion = 0`` gives a plain random walk.
    """
    rng = np.random.default_rng(seed)
    steps = rng.standard_normal(n + 4)
    walk = np.empty_like(steps)
    acc = 0.0
    for i, s in enumerate(steps):
        acc = (1.0 - params.torque_reversion) * acc + s
        walk[i] = acc
    smooth = np.convolve(walk, np.ones(5) / 5, mode="valid")
    return params.torque_scale * smooth


def integrate_pendulum(params: PendulumParams, torques: np.ndarray) -> np.ndarray:
    """Angles under semi-implicit Euler, torque ``torques[t]`` held over step t -> t+1."""
    inertia = params.mass * params.length ** 2
    theta = np.empty(len(torques))
    th, om = params.initial_angle, params.initial_velocity
    for t, u in enumerate(torques):
        theta[t] = th
        om = om + params.dt * (u - params.damping * om) / inertia
        th = th + params.dt * om
    return theta


def _pixel_samples(size: int, supersample: int) -> tuple[np.ndarray, np.ndarray]:
    """Sub-pixel sample coordinates, shape (size, size, s*s) each, origin at the frame center."""
    offs = (np.arange(supersample) + 0.5) / supersample
    coords = (np.arange(size)[:, None] + offs[None, :]).ravel() - size / 2.0
    cx = coords.reshape(size, supersample)
    xs = np.broadcast_to(cx[None, :, None, :], (size, size, supersample, supersample))
    ys = np.broadcast_to(cx[:, None, :, None], (size, size, supersample, supersample))
    return xs.reshape(size, size, -1), ys.reshape(size, size, -1)


def render_rod(angle: float, params: PendulumParams) -> np.ndarray:
    """Coverage image of a rod from the frame center; angle 0 points down, positive counter-clockwise."""
    xs, ys = _pixel_samples(params.image_size, params.supersample)
    dx, dy = np.sin(angle), np.cos(angle)
    along = xs * dx + ys * dy
    across = np.abs(-xs * dy + ys * dx)
    inside = (along >= 0) & (along <= params.rod_length) & (across <= params.rod_halfwidth)
    return np.clip(inside.mean(axis=2), 0.0, 1.0).ravel()


def pendulum_angles(params: PendulumParams, seed: int, n: int) -> np.ndarray:
    """The angle trace behind ``simulate_pendulum(params, seed, n)``."""
    return integrate_pendulum(params, torque_signal(params, seed, n))


def simulate_pendulum(params: PendulumParams, seed: int, n: int = 400) -> Dataset:
    if n < 2:
        raise ValueError("need at least two frames")
    torques = torque_signal(params, seed, n)
    angles = integrate_pendulum(params, torques)
    frames = np.stack([render_rod(a, params) for a in angles])
    return Dataset(
        frames=frames,
        controls=torques.reshape(-1, 1),
        frame_height=params.image_size,
        frame_width=params.image_size,
        dt=params.dt,
        split_index=_split(n, params.split_fraction),
    )


def _split(n: int, fraction: float) -> int:
    return min(max(int(round(n * fraction)), 1), n - 1)


# ---------------------------------------------------------------------------
# moving tile


@dataclass(frozen=True)
class TileParams:
    tile_side: float = 6.0
    image_size: int = 51
    increment_scale: float = 5.0
    centering: float = 0.4
    split_fraction: float = 0.75

    def __post_init__(self):
        if not 0 < self.tile_side < self.image_size:
            raise ValueError("need 0 < tile_side < image_size")
        if self.increment_scale < 0:
            raise ValueError("increment_scale must be non-negative")
        if not 0 <= self.centering <= 1:
            raise ValueError("centering must lie in [0, 1]")
        if not 0 < self.split_fraction < 1:
            raise ValueError("split_fraction must lie in (0, 1)")


def render_tile(center: np.ndarray, params: TileParams) -> np.ndarray:
    """Exact area coverage of an axis-aligned square; pixel i spans [i, i+1]."""
    size, half = params.image_size, params.tile_side / 2.0
    edges = np.arange(size, dtype=np.float64)

    def overlap(c):
        return np.clip(np.minimum(edges + 1, c + half) - np.maximum(edges, c - half), 0.0, 1.0)

    return np.outer(overlap(center[1]), overlap(center[0])).ravel()


def simulate_tile(
    params: TileParams, seed: int, n: int = 601, increments: Optional[np.ndarray] = None
) -> Dataset:
    """Tile driven by position increments; ``increments`` overrides the random signal.

    The random signal is smoothed noise scaled by ``increment_scale`` plus a pull
    of ``centering`` times the offset back towards the frame center, which keeps
    the tile near the middle without changing the dynamics p_{t+1} = p_t + u_t.
    """
    if n < 2:
        raise ValueError("need at least two frames")
    center = np.full(2, params.image_size / 2.0)
    pull = 0.0
    if increments is None:
        rng = np.random.default_rng(seed)
        increments = params.increment_scale * smoothed_noise(rng, n, 2)
        pull = params.centering
    increments = np.asarray(increments, dtype=np.float64).reshape(n, 2)
    lo = params.tile_side / 2.0
    hi = params.image_size - params.tile_side / 2.0
    pos = center.copy()
    frames, applied = [], np.zeros((n, 2))
    for t in range(n):
        frames.append(render_tile(pos, params))
        nxt = np.clip(pos + increments[t] - pull * (pos - center), lo, hi)
        applied[t] = nxt - pos
        pos = nxt
    return Dataset(
        frames=np.stack(frames),
        controls=applied,
        frame_height=params.image_size,
        frame_width=params.image_size,
        dt=1.0,
        split_index=_split(n, params.split_fraction),
    )


# ---------------------------------------------------------------------------
# PCA pre-reduction


def reduce_with_pca(dataset: Dataset, k: int = 50) -> Dataset:
    """Fit PCA on the training frames only and project every frame."""
    model = fit_pca(dataset.frames[:dataset.split_index], k)
    return replace(dataset, pca=model, reduced_frames=project(model, dataset.frames))


# ---------------------------------------------------------------------------
# PXDY1 file format


def dataset_to_bytes(dataset: Dataset) -> bytes:
    N, M = dataset.frames.shape
    head = MAGIC + struct.pack(
        "<6i", N, M, dataset.control_dim, dataset.frame_height, dataset.frame_width,
        dataset.split_index,
    )
    return (
        head
        + dataset.frames.astype("<f8").tobytes(order="C")
        + dataset.controls.astype("<f8").tobytes(order="C")
    )


def dataset_from_bytes(data: bytes, dt: float = 1.0) -> Dataset:
    if data[:5] != MAGIC:
        raise ValueError("not a PXDY1 dataset")
    N, M, du, h, w, split = struct.unpack_from("<6i", data, 5)
    off = 5 + 24
    expected = off + 8 * (N * M + N * du)
    if len(data) != expected:
        raise ValueError(f"PXDY1 payload has {len(data)} bytes, expected {expected}")
    frames = np.frombuffer(data, dtype="<f8", count=N * M, offset=off).reshape(N, M)
    controls = np.frombuffer(data, dtype="<f8", count=N * du, offset=off + 8 * N * M)
    return Dataset(
        frames=frames.astype(np.float64),
        controls=controls.reshape(N, du).astype(np.float64),
        frame_height=h,
        frame_width=w,
        dt=dt,
        split_index=split,
    )


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_bytes(dataset_to_bytes(dataset))


def load_dataset(path: str | Path) -> Dataset:
    return dataset_from_bytes(Path(path).read_bytes())
