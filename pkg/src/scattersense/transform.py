"""Angular-delay representation of the channel and grid-coordinate maps."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from scattersense.config import SystemConfig


class GridCoord(NamedTuple):
    """Continuous position on the angular-delay grid (delay bin, angle bin)."""

    tau_bar: float
    theta_bar: float


class CoordinateError(ValueError):
    pass


def to_angular_delay(h: np.ndarray, config: SystemConfig) -> np.ndarray:
    """Unnormalized 2D inverse DFT of the frequency-antenna channel.

    ``out[t, a] = sum_m sum_n h[m, n] exp(+j2pi m t / n_c) exp(+j2pi n a / n_t)``
    with no ``1/(n_c n_t)`` factor. Works on a leading batch axis as well.
    """
    h = np.asarray(h)
    if h.shape[-2:] != (config.n_c, config.n_t):
        raise ValueError(f"channel shape {h.shape[-2:]} does not match ({config.n_c}, {config.n_t})")
    return np.fft.ifft2(h, axes=(-2, -1)) * (config.n_c * config.n_t)


def preprocess_truncate(h_bar: np.ndarray, config: SystemConfig) -> np.ndarray:
    """Keep delay bins 1..n_c_trunc; row r of the result is delay bin r + 1."""
    return h_bar[..., 1 : config.n_c_trunc + 1, :]


def angular_delay_map(h: np.ndarray, config: SystemConfig) -> np.ndarray:
    """Truncated complex angular-delay map (LoS row removed) of a channel."""
    return preprocess_truncate(to_angular_delay(h, config), config)


def params_to_coords(tau: float, theta: float, config: SystemConfig) -> GridCoord:
    if not (-math.pi / 2 < theta < math.pi / 2):
        raise CoordinateError(f"AoD {theta} outside (-pi/2, pi/2)")
    if tau < 0:
        raise CoordinateError("negative delay")
    tau_bar = config.delta_f * tau * config.n_c
    if tau_bar >= config.n_c:
        raise CoordinateError(f"delay bin {tau_bar:.3f} outside the {config.n_c}-bin window")
    s = math.sin(theta)
    theta_bar = (s / 2) * config.n_t if s >= 0 else (s / 2 + 1) * config.n_t
    if theta_bar >= config.n_t:  # sin(theta) of order -1e-17
        theta_bar -= config.n_t
    return GridCoord(tau_bar, theta_bar)


def coords_to_params(c: GridCoord, config: SystemConfig) -> tuple[float, float]:
    tau_bar, theta_bar = c
    arg = 2 * theta_bar / config.n_t - 2 * float(theta_bar > config.n_t / 2)
    if abs(arg) > 1:
        raise CoordinateError(f"angular coordinate {theta_bar} has no valid AoD")
    return tau_bar / (config.delta_f * config.n_c), math.asin(arg)


def grid_bin(c: GridCoord) -> tuple[int, int]:
    """Integer grid bin (floor) of a continuous coordinate."""
    return math.floor(c.tau_bar), math.floor(c.theta_bar)


def normalize_input(g: np.ndarray) -> np.ndarray:
    """Log-magnitude image scaled into [0, 1] by its own maximum.

    A leading batch axis is normalized per sample. All-zero maps stay zero.
    """
    x = np.log1p(np.abs(g))
    peak = x.max(axis=(-2, -1), keepdims=True)
    return np.divide(x, peak, out=np.zeros_like(x), where=peak > 0)
