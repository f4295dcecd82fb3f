"""End-to-end inference: image -> detections -> positions -> metrics."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from scattersense.config import SystemConfig
from scattersense.localization import LocalizedScatter, locate_all
from scattersense.metrics import MetricsReport, aggregate, sample_metrics
from scattersense.nn.detector import Detector
from scattersense.postprocess import T1_DEFAULT, TD_DEFAULT, postprocess, to_params
from scattersense.scene import Scene

Detection = tuple[float, float, float]  # (tau s, theta rad, confidence)


def detect(
    net: Detector,
    images: np.ndarray,
    config: SystemConfig,
    t1: float = T1_DEFAULT,
    t_d: float = TD_DEFAULT,
    batch_size: int = 128,
) -> list[list[Detection]]:
    """Physical (tau, theta, confidence) detections for each image in a batch."""
    out: list[list[Detection]] = []
    for start in range(0, len(images), batch_size):
        raw = net.forward(images[start : start + batch_size])
        n = len(next(iter(raw.values())))
        for k in range(n):
            cands = postprocess({sc: y[k] for sc, y in raw.items()}, net.config, t1, t_d)
            out.append(to_params(cands, config))
    return out


def localize(
    scenes: Sequence[Scene], detections: Sequence[Sequence[Detection]], config: SystemConfig
) -> list[list[LocalizedScatter]]:
    return [locate_all(s.bs_pos, s.ue_pos, d, config.c) for s, d in zip(scenes, detections)]


def evaluate(
    scenes: Sequence[Scene],
    positions: Sequence[Sequence[LocalizedScatter]],
    r: float = 1.0,
    **tags,
) -> MetricsReport:
    per_sample = [
        sample_metrics(s.scatter_array(), [(p.x_m, p.y_m) for p in pos], r)
        for s, pos in zip(scenes, positions)
    ]
    return aggregate(per_sample, r=r, **tags)
