"""Turn raw anchor outputs into a short list of scatter estimates.

Order of operations: decode -> coarse filter (t1) -> merge (t_d) ->
fine filter (t2 = mean confidence / 3) -> physical parameters.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from scattersense.config import SystemConfig
from scattersense.nn.detector import DetectorConfig, RawDetections
from scattersense.transform import GridCoord, coords_to_params

T1_DEFAULT = 0.5
TD_DEFAULT = 4.0


class DetectionCandidate(NamedTuple):
    tau_bar: float
    theta_bar: float
    confidence: float

    @property
    def coord(self) -> GridCoord:
        return GridCoord(self.tau_bar, self.theta_bar)


def decode_arrays(raw: RawDetections, config: DetectorConfig) -> np.ndarray:
    """(N_a, 3) array of absolute (tau_bar, theta_bar, confidence), head by head."""
    rows, cols = config.input_shape
    out = []
    for (a, b), y in raw.items():
        y = np.asarray(y, dtype=float)
        i, j = np.meshgrid(np.arange(a), np.arange(b), indexing="ij")
        row = (i + y[0]) * (rows / a)
        col = np.mod((j + y[1]) * (cols / b), cols)
        out.append(np.stack([row + 1.0, col, y[2]], axis=-1).reshape(-1, 3))
    return np.concatenate(out, axis=0)


def decode(raw: RawDetections, config: DetectorConfig) -> list[DetectionCandidate]:
    """One candidate per anchor; delay row r maps back to delay bin r + 1."""
    return [DetectionCandidate(*map(float, r)) for r in decode_arrays(raw, config)]


def coarse_filter(cands: list[DetectionCandidate], t1: float = T1_DEFAULT) -> list[DetectionCandidate]:
    return [c for c in cands if c.confidence >= t1]


def _sq_dist(p: DetectionCandidate, q: DetectionCandidate, n_t: int | None) -> float:
    dth = abs(p.theta_bar - q.theta_bar)
    if n_t is not None:
        dth %= n_t
        dth = min(dth, n_t - dth)
    return (p.tau_bar - q.tau_bar) ** 2 + dth**2


def merge(
    cands: list[DetectionCandidate], t_d: float = TD_DEFAULT, n_t: int | None = 64
) -> list[DetectionCandidate]:
    """Single-linkage grouping under squared distance < t_d; keep each group's most confident member.

    The angular difference is taken modulo ``n_t`` (pass ``None`` for plain
    differences). Output follows descending confidence.
    """
    n = len(cands)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if _sq_dist(cands[i], cands[j], n_t) < t_d:
                parent[find(i)] = find(j)
    best: dict[int, DetectionCandidate] = {}
    for i, c in enumerate(cands):
        root = find(i)
        if root not in best or c.confidence > best[root].confidence:
            best[root] = c
    return sorted(best.values(), key=lambda c: -c.confidence)


def fine_filter(cands: list[DetectionCandidate]) -> list[DetectionCandidate]:
    if not cands:
        return []
    t2 = float(np.mean([c.confidence for c in cands])) / 3.0
    return [c for c in cands if c.confidence >= t2]


def to_params(cands: list[DetectionCandidate], config: SystemConfig) -> list[tuple[float, float, float]]:
    """(tau seconds, theta radians, confidence) for every candidate."""
    out = []
    for c in cands:
        tau, theta = coords_to_params(c.coord, config)
        out.append((tau, theta, c.confidence))
    return out


def postprocess(
    raw: RawDetections,
    det_config: DetectorConfig,
    t1: float = T1_DEFAULT,
    t_d: float = TD_DEFAULT,
) -> list[DetectionCandidate]:
    """Full candidate chain for one sample (decode, coarse, merge, fine)."""
    arr = decode_arrays(raw, det_config)
    arr = arr[arr[:, 2] >= t1]
    cands = [DetectionCandidate(*map(float, r)) for r in arr]
    return fine_filter(merge(cands, t_d, det_config.input_shape[1]))
