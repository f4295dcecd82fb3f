"""Closed-form bistatic ellipse localization of scatters."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

log = logging.getLogger(__name__)


class LocalizationError(ValueError):
    pass


def locate_scatter(tau: float, theta: float, bs_pos, ue_pos, c: float) -> tuple[float, float]:
    """Intersect the delay ellipse (foci BS, UE) with the AoD ray from the BS.

    ``d0 = c*tau*(2d + c*tau) / (2*(c*tau + d - d*cos(beta)))`` is the range
    from the BS along the ray, where ``beta`` is the angle between the ray and
    the BS->UE direction.
    """
    if not tau > 0:
        raise LocalizationError("excess delay must be positive")
    dx = ue_pos[0] - bs_pos[0]
    dy = ue_pos[1] - bs_pos[1]
    d = math.hypot(dx, dy)
    if d == 0:
        raise LocalizationError("BS and UE coincide")
    ct = c * tau
    cos_b = math.cos(theta) * dx / d + math.sin(theta) * dy / d
    denom = 2 * (ct + d - d * cos_b)
    if denom <= 1e-12 * d:
        raise LocalizationError("degenerate ellipse/ray geometry")
    d0 = ct * (2 * d + ct) / denom
    return (d0 * math.cos(theta) + bs_pos[0], d0 * math.sin(theta) + bs_pos[1])


@dataclass
class LocalizedScatter:
    x_m: float
    y_m: float
    confidence: float

    def to_dict(self) -> dict:
        return {"x_m": self.x_m, "y_m": self.y_m, "confidence": self.confidence}


def locate_all(
    bs_pos,
    ue_pos,
    detections: Sequence[tuple[float, float, float]],
    c: float,
) -> list[LocalizedScatter]:
    """Localize every (tau, theta, confidence) detection, skipping singular ones."""
    out = []
    for tau, theta, conf in detections:
        try:
            x, y = locate_scatter(tau, theta, bs_pos, ue_pos, c)
        except LocalizationError as exc:
            log.info("skipping detection tau=%g theta=%g: %s", tau, theta, exc)
            continue
        out.append(LocalizedScatter(x, y, conf))
    return out
