"""Subspace angle estimation plus DFT delay peaks, with a known scatter count.

Angles come from MUSIC over an antenna covariance that treats every
subcarrier row as one array snapshot. Delays come from the energy profile of
the angular-delay map. Angles and delays are paired greedily by map energy
and handed to the same ellipse-ray localization as the detector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from scattersense.config import SystemConfig
from scattersense.localization import LocalizationError, LocalizedScatter, locate_scatter
from scattersense.transform import to_angular_delay

METHOD = "music-fft"


@dataclass(frozen=True)
class BaselineConfig:
    """``k`` counts scatters only; the LoS path is added on top for MUSIC."""

    k: int
    angle_grid_step: float = math.radians(0.05)
    peak_guard: int = 1

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.angle_grid_step <= 0:
            raise ValueError("angle_grid_step must be positive")
        if self.peak_guard < 1:
            raise ValueError("peak_guard must be at least 1")


def angular_covariance(h: np.ndarray) -> np.ndarray:
    """Sample covariance of the antenna vector over subcarrier snapshots."""
    h = np.asarray(h)
    n_c, n_t = h.shape
    if n_c < n_t:
        raise ValueError("need at least as many subcarriers as antennas")
    r = h.T @ h.conj() / n_c
    return (r + r.conj().T) / 2


def angle_grid(step: float) -> np.ndarray:
    """Scan angles strictly inside (-pi/2, pi/2)."""
    n = int(math.floor((math.pi / 2) / step - 1e-9))
    return np.arange(-n, n + 1) * step


def music_spectrum(r: np.ndarray, k: int, config: SystemConfig, step: float = math.radians(0.05)):
    """(angles, pseudo-spectrum) with a ``k``-dimensional signal subspace."""
    n_t = r.shape[0]
    if not 1 <= k < n_t:
        raise ValueError(f"k={k} must lie in [1, {n_t})")
    _, vecs = np.linalg.eigh(r)  # ascending eigenvalues
    e_n = vecs[:, : n_t - k]
    theta = angle_grid(step)
    n = np.arange(n_t)
    a = np.exp(-2j * np.pi * config.d_over_lambda * np.outer(n, np.sin(theta)))  # (n_t, n_grid)
    proj = e_n.conj().T @ a
    denom = np.maximum(np.sum(np.abs(proj) ** 2, axis=0), 1e-300)
    return theta, 1.0 / denom


def _local_maxima(x: np.ndarray) -> np.ndarray:
    """Indices of strict-left, weak-right local maxima above zero."""
    left = np.concatenate(([-np.inf], x[:-1]))
    right = np.concatenate((x[1:], [-np.inf]))
    return np.flatnonzero((x > left) & (x >= right) & (x > 0))


def pick_peaks(x: np.ndarray, k: int, guard: int) -> np.ndarray:
    """Up to ``k`` highest local maxima at least ``guard`` samples apart."""
    cand = _local_maxima(x)
    cand = cand[np.argsort(-x[cand], kind="stable")]
    chosen: list[int] = []
    for i in cand:
        if all(abs(int(i) - j) >= guard for j in chosen):
            chosen.append(int(i))
            if len(chosen) == k:
                break
    return np.array(chosen, dtype=int)


def music_angles(h: np.ndarray, n_paths: int, config: SystemConfig, step: float):
    """(angles, peak heights) of the ``n_paths`` strongest spectrum peaks."""
    theta, p = music_spectrum(angular_covariance(h), n_paths, config, step)
    idx = pick_peaks(p, n_paths, 1)
    return theta[idx], p[idx]


def delay_peaks(h_bar: np.ndarray, k: int, peak_guard: int = 1, first_bin: int = 0):
    """Bins of the ``k`` largest delay-profile peaks at bins >= 1.

    ``first_bin`` is the delay bin of row 0 (0 for a full map, 1 for a map
    that already dropped the LoS row). Returns (bins, shortfall) where
    shortfall is True when fewer than ``k`` peaks exist.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    e = np.sum(np.abs(np.asarray(h_bar)) ** 2, axis=1)
    skip = max(1 - first_bin, 0)
    rows = pick_peaks(e[skip:], k, peak_guard) + skip
    bins = rows + first_bin
    return bins, len(bins) < k


def angle_column(theta: float, n_t: int) -> int:
    """Nearest angular-grid column of an AoD."""
    return int(round(math.sin(theta) / 2 * n_t)) % n_t


@dataclass
class BaselineResult:
    positions: list[LocalizedScatter]
    pairs: list[tuple[int, float]]  # (delay bin, angle rad) after LoS removal
    delay_shortfall: bool = False
    column_collision: bool = False
    meta: dict = field(default_factory=dict)


def pair_and_localize(
    angles,
    heights,
    delays,
    h_bar: np.ndarray,
    bs_pos,
    ue_pos,
    config: SystemConfig,
) -> BaselineResult:
    """Greedy association of angle estimates with delay bins, then localization.

    Angles are visited by descending spectrum height; each takes the unused
    delay bin with the largest map magnitude in its nearest angle column.
    Pairs that land on delay bin 0 are the LoS path and are dropped.
    ``h_bar`` is the full (untruncated) map, indexed by delay bin.
    """
    angles = np.asarray(angles, dtype=float)
    delays = [int(d) for d in delays]
    if len(angles) == 0 or len(delays) == 0:
        raise ValueError("need at least one angle and one delay")
    order = np.argsort(-np.asarray(heights, dtype=float), kind="stable")
    n_t = h_bar.shape[1]
    cols = [angle_column(a, n_t) for a in angles]
    collision = len(set(cols)) < len(cols)
    free = list(delays)
    pairs: list[tuple[int, float]] = []
    for i in order:
        if not free:
            break
        mags = [abs(h_bar[d, cols[i]]) for d in free]
        d = free.pop(int(np.argmax(mags)))
        if d > 0:
            pairs.append((d, float(angles[i])))
    bin_s = 1.0 / (config.delta_f * config.n_c)
    positions = []
    for d, a in pairs:
        try:
            x, y = locate_scatter(d * bin_s, a, bs_pos, ue_pos, config.c)
        except LocalizationError:
            continue
        positions.append(LocalizedScatter(x, y, 1.0))
    return BaselineResult(positions, pairs, column_collision=collision)


def run_baseline(h: np.ndarray, bs_pos, ue_pos, config: SystemConfig, bc: BaselineConfig) -> BaselineResult:
    """Full MUSIC-FFT chain for one channel matrix."""
    angles, heights = music_angles(h, bc.k + 1, config, bc.angle_grid_step)
    h_bar = to_angular_delay(h, config)
    delays, shortfall = delay_peaks(h_bar, bc.k, bc.peak_guard)
    res = pair_and_localize(angles, heights, list(delays) + [0], h_bar, bs_pos, ue_pos, config)
    res.delay_shortfall = shortfall
    res.meta = {"method": METHOD, "k": bc.k}
    return res
