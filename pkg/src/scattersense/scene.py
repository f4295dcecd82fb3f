"""Random scenes and the exact multipath channel they produce."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from scattersense.config import SystemConfig

BS_POS = (0.0, 0.0)
AREA_CENTER = (50.0, 0.0)
AREA_SIZE = (100.0, 100.0)
MIN_X = 1.0
MIN_SEPARATION = 1.0
MAX_DRAWS = 10_000
GAIN_RANGE = (0.2, 0.6)


class SceneGenerationError(RuntimeError):
    """Raised when rejection sampling cannot place a scatter."""


@dataclass
class Scene:
    """Ground truth geometry. ``gains[0]`` belongs to the line-of-sight path."""

    bs_pos: tuple[float, float]
    ue_pos: tuple[float, float]
    scatters: list[tuple[float, float]]
    gains: list[complex]

    def __post_init__(self) -> None:
        if len(self.gains) != len(self.scatters) + 1:
            raise ValueError("gains must hold one entry per scatter plus the LoS gain")

    @property
    def n_s(self) -> int:
        return len(self.scatters)

    def scatter_array(self) -> np.ndarray:
        return np.asarray(self.scatters, dtype=float).reshape(-1, 2)

    def check(self, config: SystemConfig) -> list[str]:
        """Return the list of violated scene invariants (empty when valid)."""
        problems = []
        for k, s in enumerate(self.scatters):
            reason = _reject_reason(s, self.bs_pos, self.ue_pos, config)
            if reason:
                problems.append(f"scatter {k}: {reason}")
        return problems

    def to_dict(self) -> dict[str, Any]:
        return {
            "bs_pos": list(map(float, self.bs_pos)),
            "ue_pos": list(map(float, self.ue_pos)),
            "scatters": [list(map(float, s)) for s in self.scatters],
            "gains": [[float(g.real), float(g.imag)] for g in self.gains],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Scene":
        return cls(
            bs_pos=tuple(d["bs_pos"]),
            ue_pos=tuple(d["ue_pos"]),
            scatters=[tuple(s) for s in d["scatters"]],
            gains=[complex(re, im) for re, im in d["gains"]],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Scene":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class PathParam:
    tau: float
    theta: float
    alpha: complex = field(default=1.0 + 0.0j)


def excess_delay(p, bs, ue, c: float) -> float:
    return (math.dist(p, bs) + math.dist(p, ue) - math.dist(bs, ue)) / c


def _reject_reason(p, bs, ue, config: SystemConfig) -> str | None:
    if p[0] < MIN_X:
        return "x below front-sector limit"
    if math.dist(p, bs) < MIN_SEPARATION or math.dist(p, ue) < MIN_SEPARATION:
        return "too close to BS or UE"
    tau_bar = config.delta_f * excess_delay(p, bs, ue, config.c) * config.n_c
    if not (1.0 <= tau_bar <= config.n_c_trunc - 1):
        return "delay outside retained window"
    return None


def sample_scene(
    rng_seed: int | Sequence[int],
    config: SystemConfig,
    n_s_range: tuple[int, int] = (5, 10),
) -> Scene:
    """Draw a random scene inside the 100 m x 100 m area in front of the BS.

    Scatters violating the scene invariants are redrawn; more than
    ``MAX_DRAWS`` rejections for one scatter raise ``SceneGenerationError``.
    """
    lo, hi = int(n_s_range[0]), int(n_s_range[1])
    if not (1 <= lo <= hi <= 20):
        raise ValueError(f"n_s_range must lie within [1, 20], got {n_s_range}")
    rng = np.random.default_rng(rng_seed)
    x0 = AREA_CENTER[0] - AREA_SIZE[0] / 2
    y0 = AREA_CENTER[1] - AREA_SIZE[1] / 2

    def draw() -> tuple[float, float]:
        u = rng.random(2)
        return (x0 + AREA_SIZE[0] * u[0], y0 + AREA_SIZE[1] * u[1])

    n_s = int(rng.integers(lo, hi + 1))
    bs = BS_POS
    for _ in range(MAX_DRAWS):
        ue = draw()
        if math.dist(ue, bs) >= MIN_SEPARATION:
            break
    else:
        raise SceneGenerationError("could not place the UE")

    scatters = []
    for k in range(n_s):
        for _ in range(MAX_DRAWS):
            p = draw()
            if _reject_reason(p, bs, ue, config) is None:
                scatters.append(p)
                break
        else:
            raise SceneGenerationError(
                f"scatter {k}: {MAX_DRAWS} draws rejected; config inconsistent with scene area"
            )
    mags = rng.uniform(*GAIN_RANGE, size=n_s)
    phases = rng.uniform(0.0, 2 * np.pi, size=n_s)
    gains = [1.0 + 0.0j] + [complex(m * np.exp(1j * ph)) for m, ph in zip(mags, phases)]
    return Scene(bs_pos=bs, ue_pos=ue, scatters=scatters, gains=gains)


def path_arrays(scene: Scene, config: SystemConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (tau, theta, alpha) for the LoS path followed by every scatter."""
    bs = np.asarray(scene.bs_pos, dtype=float)
    ue = np.asarray(scene.ue_pos, dtype=float)
    pts = np.vstack([ue[None, :], scene.scatter_array()])
    d_bs = np.linalg.norm(pts - bs, axis=1)
    d_ue = np.linalg.norm(pts - ue, axis=1)
    tau = (d_bs + d_ue - np.linalg.norm(bs - ue)) / config.c
    tau[0] = 0.0
    rel = pts - bs
    theta = np.arctan2(rel[:, 1], rel[:, 0])
    alpha = np.asarray(scene.gains, dtype=complex)
    return tau, theta, alpha


def compute_path_params(scene: Scene, config: SystemConfig) -> list[PathParam]:
    tau, theta, alpha = path_arrays(scene, config)
    return [PathParam(float(t), float(th), complex(a)) for t, th, a in zip(tau, theta, alpha)]


def steering_vector(theta: float, config: SystemConfig) -> np.ndarray:
    n = np.arange(config.n_t)
    return np.exp(-2j * np.pi * n * config.d_over_lambda * np.sin(theta))


def channel_from_paths(
    tau: np.ndarray, theta: np.ndarray, alpha: np.ndarray, config: SystemConfig
) -> np.ndarray:
    """n_c x n_t frequency-antenna channel for an explicit list of paths."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
    m = np.arange(config.n_c)
    n = np.arange(config.n_t)
    cycles = np.outer(tau, config.f0 + m * config.delta_f)
    freq = alpha[:, None] * np.exp(-2j * np.pi * cycles)  # (L, n_c)
    space = np.exp(-2j * np.pi * np.outer(np.sin(theta) * config.d_over_lambda, n))  # (L, n_t)
    return freq.T @ space


def synthesize_channel(scene: Scene, config: SystemConfig) -> np.ndarray:
    tau, theta, alpha = path_arrays(scene, config)
    return channel_from_paths(tau, theta, alpha, config)


def channel_power(h: np.ndarray) -> float:
    return float(np.mean(np.abs(h) ** 2))


def add_estimation_noise(h: np.ndarray, snr_db: float | None, rng_seed) -> np.ndarray:
    """Add circular complex Gaussian noise at ``snr_db`` relative to the mean entry power.

    ``None`` or ``+inf`` leaves the channel untouched.
    """
    if snr_db is None or math.isinf(snr_db):
        if snr_db is not None and snr_db < 0:
            raise ValueError("snr_db = -inf is not a valid noise level")
        return h
    rng = np.random.default_rng(rng_seed)
    var = channel_power(h) * 10.0 ** (-snr_db / 10.0)
    return h + complex_gaussian(rng, h.shape, var)


def complex_gaussian(rng: np.random.Generator, shape, var) -> np.ndarray:
    """Circularly symmetric complex normal samples with per-entry variance ``var``."""
    scale = np.sqrt(np.asarray(var, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
