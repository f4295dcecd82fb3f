"""Detection probability, precision, F1 and RMSE over 2D positions."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable

import numpy as np

R_DEFAULT = 1.0


def _as_points(p) -> np.ndarray:
    return np.asarray(p, dtype=float).reshape(-1, 2)


def _nearest(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Distance from each src point to its nearest dst point."""
    if len(dst) == 0:
        return np.full(len(src), np.inf)
    diff = src[:, None, :] - dst[None, :, :]
    return np.sqrt((diff**2).sum(-1)).min(axis=1)


def metric_pd(true_positions, est_positions, r: float = R_DEFAULT) -> float:
    """Fraction of true scatters with some estimate closer than ``r``; NaN without truth."""
    t, e = _as_points(true_positions), _as_points(est_positions)
    if len(t) == 0:
        return math.nan
    return float(np.mean(_nearest(t, e) < r))


def metric_precision(true_positions, est_positions, r: float = R_DEFAULT) -> float:
    """Fraction of estimates with a true scatter closer than ``r``; 0 with no estimates."""
    t, e = _as_points(true_positions), _as_points(est_positions)
    if len(e) == 0:
        return 0.0
    return float(np.mean(_nearest(e, t) < r))


def metric_f1(pd: float, precision: float) -> float:
    s = pd + precision
    return 0.0 if s == 0 else 2 * pd * precision / s


def metric_rmse(true_positions, est_positions, r: float = R_DEFAULT) -> float:
    """RMSE over detected true scatters (nearest estimate within ``r``); NaN when none."""
    d = _detected_errors(true_positions, est_positions, r)
    return float(np.sqrt(np.mean(d**2))) if len(d) else math.nan


def _detected_errors(true_positions, est_positions, r: float) -> np.ndarray:
    t, e = _as_points(true_positions), _as_points(est_positions)
    d = _nearest(t, e)
    return d[d < r]


@dataclass
class SampleMetrics:
    pd: float
    precision: float
    f1: float
    sq_errors: np.ndarray
    n_true: int
    n_est: int


def sample_metrics(true_positions, est_positions, r: float = R_DEFAULT) -> SampleMetrics:
    pd = metric_pd(true_positions, est_positions, r)
    prec = metric_precision(true_positions, est_positions, r)
    return SampleMetrics(
        pd=pd,
        precision=prec,
        f1=metric_f1(pd, prec) if not math.isnan(pd) else math.nan,
        sq_errors=_detected_errors(true_positions, est_positions, r) ** 2,
        n_true=len(_as_points(true_positions)),
        n_est=len(_as_points(est_positions)),
    )


@dataclass
class MetricsReport:
    """Per-condition averages: Pd, precision and F1 are per-sample means; RMSE pools all detected scatters."""

    pd: float
    precision: float
    f1: float
    rmse: float
    n_true: int
    n_est: int
    n_samples: int
    n_empty_est: int = 0
    tags: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for k in ("pd", "precision", "f1", "rmse"):
            if isinstance(d[k], float) and math.isnan(d[k]):
                d[k] = None
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MetricsReport":
        d = dict(d)
        for k in ("pd", "precision", "f1", "rmse"):
            if d.get(k) is None:
                d[k] = math.nan
        return cls(**d)


def aggregate(samples: Iterable[SampleMetrics], **tags) -> MetricsReport:
    samples = [s for s in samples if not math.isnan(s.pd)]
    if not samples:
        return MetricsReport(math.nan, math.nan, math.nan, math.nan, 0, 0, 0, 0, tags)
    sq = np.concatenate([s.sq_errors for s in samples])
    return MetricsReport(
        pd=float(np.mean([s.pd for s in samples])),
        precision=float(np.mean([s.precision for s in samples])),
        f1=float(np.mean([s.f1 for s in samples])),
        rmse=float(np.sqrt(sq.mean())) if len(sq) else math.nan,
        n_true=sum(s.n_true for s in samples),
        n_est=sum(s.n_est for s in samples),
        n_samples=len(samples),
        n_empty_est=sum(s.n_est == 0 for s in samples),
        tags=dict(tags),
    )
