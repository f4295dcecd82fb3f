"""Anchor labels, the detection loss, noise injection and the SGD loop."""

from __future__ import annotations

import copy
import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from scattersense.config import SystemConfig
from scattersense.dataset import SampleSet
from scattersense.nn.detector import Detector, DetectorConfig, Params, RawDetections, init_params
from scattersense.pipeline import detect, evaluate, localize
from scattersense.postprocess import T1_DEFAULT, TD_DEFAULT
from scattersense.scene import complex_gaussian
from scattersense.transform import normalize_input

log = logging.getLogger(__name__)

LOG_EPS = 1e-7
FINAL_NOISE_VAR = 10 ** (-0.5)  # 5 dB SNR at the end of training


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class AnchorLabels:
    """Per head scale: ``conf`` (a, b) in {0, 1} and ``offsets`` (2, a, b).

    Offsets are only meaningful where ``conf`` is 1. A leading batch axis is
    allowed once labels are stacked.
    """

    conf: dict[tuple[int, int], np.ndarray]
    offsets: dict[tuple[int, int], np.ndarray]

    def n_positive(self, scale) -> int:
        return int(self.conf[scale].sum())

    @staticmethod
    def stack(items: Sequence["AnchorLabels"]) -> "AnchorLabels":
        scales = items[0].conf.keys()
        return AnchorLabels(
            conf={s: np.stack([it.conf[s] for it in items]) for s in scales},
            offsets={s: np.stack([it.offsets[s] for it in items]) for s in scales},
        )

    def take(self, idx) -> "AnchorLabels":
        return AnchorLabels(
            conf={s: v[idx] for s, v in self.conf.items()},
            offsets={s: v[idx] for s, v in self.offsets.items()},
        )


def assign_anchors(labels, config: DetectorConfig) -> AnchorLabels:
    """Mark the owning cell of every label positive at every head scale.

    ``labels`` rows are (row, col, |alpha|) in map coordinates, i.e. the
    delay coordinate counted from the first retained delay bin (row =
    tau_bar - 1). When several labels share a cell the strongest |alpha| wins.
    """
    rows, cols = config.input_shape
    labels = np.asarray(labels, dtype=float).reshape(-1, 3)
    if len(labels) and (
        np.any(labels[:, 0] < 0) or np.any(labels[:, 0] >= rows) or np.any(labels[:, 1] < 0) or np.any(labels[:, 1] >= cols)
    ):
        raise ValueError("label outside the detector grid")
    order = np.argsort(labels[:, 2], kind="stable")  # strongest written last
    conf, offsets = {}, {}
    for a, b in config.head_scales:
        ch, cw = rows / a, cols / b
        c = np.zeros((a, b))
        off = np.zeros((2, a, b))
        for row, col, _ in labels[order]:
            i, j = int(row // ch), int(col // cw)
            c[i, j] = 1.0
            off[0, i, j] = row / ch - i
            off[1, i, j] = col / cw - j
        conf[(a, b)] = c
        offsets[(a, b)] = off
    return AnchorLabels(conf, offsets)


def map_labels(scene_label_table: np.ndarray) -> np.ndarray:
    """Convert (tau_bar, theta_bar, |alpha|) rows to map coordinates (row = tau_bar - 1)."""
    t = np.array(scene_label_table, dtype=float).reshape(-1, 3)
    t[:, 0] -= 1.0
    return t


def loss_terms(raw: RawDetections, labels: AnchorLabels, rho: float = 1.0):
    """(localization loss, objectness loss, gradient wrt raw).

    Sums run over anchors; with a batch axis the result is the batch mean.
    """
    loc = obj = 0.0
    grad: RawDetections = {}
    nb = None
    for sc, y in raw.items():
        y = np.asarray(y, dtype=float)
        c = labels.conf[sc]
        off = labels.offsets[sc]
        batched = y.ndim == 4
        nb = y.shape[0] if batched else 1
        yo = y[:, :2] if batched else y[:2]
        yc = y[:, 2] if batched else y[2]
        pos = c[:, None] if batched else c[None]
        diff = (yo - off) * pos
        loc += float((diff**2).sum())
        p = np.clip(yc, LOG_EPS, 1 - LOG_EPS)
        obj -= rho * float((c * np.log(p) + (1 - c) * np.log(1 - p)).sum())
        g = np.empty_like(y)
        go = 2 * diff
        # evaluated at the clamped probability but not masked, so saturated
        # anchors still pull back (a masked gradient leaves them dead)
        gc = -rho * (c / p - (1 - c) / (1 - p))
        if batched:
            g[:, :2], g[:, 2] = go, gc
        else:
            g[:2], g[2] = go, gc
        grad[sc] = g / nb
    if not (math.isfinite(loc) and math.isfinite(obj)):
        raise TrainingDiverged("non-finite loss")
    return loc / nb, obj / nb, grad


def compute_loss(raw: RawDetections, labels: AnchorLabels, rho: float = 1.0):
    """Total loss and its gradient with respect to the raw detections."""
    loc, obj, grad = loss_terms(raw, labels, rho)
    return loc + obj, grad


@dataclass
class NoiseSchedule:
    """Linearly growing variance ceiling, relative to the channel power."""

    sigma0_sq: float = 0.0
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if self.sigma0_sq < 0 or self.gamma < 0:
            raise ValueError("noise schedule parameters must be non-negative")

    def sigma_max_sq(self, t: int) -> float:
        return self.sigma0_sq + self.gamma * t

    @classmethod
    def reaching(cls, final_var: float, total_steps: int, sigma0_sq: float = 0.0) -> "NoiseSchedule":
        """Schedule whose ceiling hits ``final_var`` at the last step."""
        last = max(total_steps - 1, 1)
        return cls(sigma0_sq, max(final_var - sigma0_sq, 0.0) / last)


def draw_noise_var(t: int, schedule: NoiseSchedule, rng: np.random.Generator, size=None):
    """Per-draw relative variance sigma^2(t) ~ Uniform[0, sigma_max^2(t)]."""
    return rng.uniform(0.0, schedule.sigma_max_sq(t), size=size)


def noise_sample(
    t: int,
    schedule: NoiseSchedule,
    p_h: float,
    rng_seed,
    shape: tuple[int, int] = (1024, 64),
) -> np.ndarray:
    """Frequency-antenna noise field for training step ``t``."""
    if t < 0:
        raise ValueError("training step must be non-negative")
    rng = np.random.default_rng(rng_seed)
    var = draw_noise_var(t, schedule, rng)
    if var == 0:
        return np.zeros(shape, dtype=complex)
    return complex_gaussian(rng, shape, var * p_h)


def inject_map_noise(
    maps: np.ndarray, rel_var: np.ndarray, p_h: np.ndarray, config: SystemConfig, rng: np.random.Generator
) -> np.ndarray:
    """Add channel noise directly in the angular-delay domain.

    White noise of variance v in the frequency-antenna domain becomes white
    noise of variance n_c*n_t*v after the unnormalized inverse DFT, so the
    truncated map can be perturbed without synthesizing the full channel.
    """
    var = np.asarray(rel_var) * np.asarray(p_h) * (config.n_c * config.n_t)
    return maps + complex_gaussian(rng, maps.shape, var.reshape(-1, 1, 1))


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 60
    rho: float = 1.0
    noise: NoiseSchedule | None = None
    noise_final_var: float | None = None  # builds ``noise`` from the run length when set
    t1: float = T1_DEFAULT
    t_d: float = TD_DEFAULT
    r: float = 1.0
    validate_every: int = 1
    grad_clip: float | None = None  # global gradient-norm ceiling per step
    ema_decay: float | None = None  # validate and keep an exponential average of the weights

    def __post_init__(self) -> None:
        if isinstance(self.noise, dict):
            self.noise = NoiseSchedule(**self.noise)
        if self.learning_rate < 0 or self.rho <= 0 or self.batch_size < 1:
            raise ValueError("invalid training configuration")
        if self.ema_decay is not None and not 0 <= self.ema_decay < 1:
            raise ValueError("ema_decay must lie in [0, 1)")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        return cls(**d)


@dataclass
class TrainResult:
    params: Params
    log: list[dict[str, float]]
    best_epoch: int
    best_f1: float
    seconds: float
    diverged: bool = False
    final_params: Params | None = field(default=None, repr=False)


LOG_FIELDS = ["epoch", "step", "loc_loss", "obj_loss", "val_f1", "val_pd", "val_rmse", "sigma_max_sq"]


def write_log(path, rows: list[dict[str, float]]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=LOG_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k) for k in LOG_FIELDS})


def validate(params: Params, det_config: DetectorConfig, val: SampleSet, tc: TrainConfig):
    net = Detector(det_config, params)
    dets = detect(net, val.images, val.config, tc.t1, tc.t_d)
    return evaluate(val.scenes, localize(val.scenes, dets, val.config), tc.r)


def train(
    train_set: SampleSet,
    val_set: SampleSet | None,
    det_config: DetectorConfig,
    tc: TrainConfig,
    rng_seed: int = 0,
    params: Params | None = None,
) -> TrainResult:
    """Mini-batch SGD with momentum; returns the best-validation-F1 parameters."""
    if len(train_set) == 0:
        raise ValueError("empty training set")
    cfg = train_set.config
    rng = np.random.default_rng(rng_seed)
    params = copy.deepcopy(params) if params is not None else init_params(det_config, rng_seed)
    net = Detector(det_config, params)
    labels = AnchorLabels.stack(
        [assign_anchors(map_labels(train_set.labels(i)), det_config) for i in range(len(train_set))]
    )
    n = len(train_set)
    n_batches = math.ceil(n / tc.batch_size)
    schedule = tc.noise
    if schedule is None and tc.noise_final_var:
        schedule = NoiseSchedule.reaching(tc.noise_final_var, tc.epochs * n_batches)
    clean_images = train_set.images if schedule is None else None
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    ema = copy.deepcopy(params) if tc.ema_decay is not None else None
    best = copy.deepcopy(params)
    best_f1, best_epoch = -1.0, 0
    rows: list[dict[str, float]] = []
    step = 0
    diverged = False
    t_start = time.perf_counter()
    for epoch in range(1, tc.epochs + 1):
        perm = rng.permutation(n)
        loc_sum = obj_sum = 0.0
        for bi in range(n_batches):
            idx = np.sort(perm[bi * tc.batch_size : (bi + 1) * tc.batch_size])
            if schedule is None:
                x = clean_images[idx]
            else:
                rel = draw_noise_var(step, schedule, rng, size=len(idx))
                noisy = inject_map_noise(train_set.maps[idx], rel, train_set.p_h[idx], cfg, rng)
                x = normalize_input(noisy).astype(np.float32)
            try:
                raw = net.forward(x)
                loc, obj, g = loss_terms(raw, labels.take(idx), tc.rho)
            except FloatingPointError as exc:
                log.error("training diverged at step %d: %s", step, exc)
                diverged = True
                break
            grads = net.backward(g)
            if tc.grad_clip:
                norm = math.sqrt(sum(float(np.sum(v.astype(np.float64) ** 2)) for v in grads.values()))
                if norm > tc.grad_clip:
                    grads = {k: v * (tc.grad_clip / norm) for k, v in grads.items()}
            for k in params:
                velocity[k] *= tc.momentum
                velocity[k] += grads[k]
                params[k] -= tc.learning_rate * velocity[k]
            if ema is not None:
                for k in params:
                    ema[k] += (1 - tc.ema_decay) * (params[k] - ema[k])
            loc_sum += loc * len(idx)
            obj_sum += obj * len(idx)
            step += 1
        if diverged:
            break
        row = {
            "epoch": epoch,
            "step": step,
            "loc_loss": loc_sum / n,
            "obj_loss": obj_sum / n,
            "sigma_max_sq": schedule.sigma_max_sq(step - 1) if schedule else 0.0,
        }
        if val_set is not None and (epoch % tc.validate_every == 0 or epoch == tc.epochs):
            current = params if ema is None else ema
            rep = validate(current, det_config, val_set, tc)
            row.update(val_f1=rep.f1, val_pd=rep.pd, val_rmse=rep.rmse)
            if rep.f1 > best_f1:
                best_f1, best_epoch = rep.f1, epoch
                best = copy.deepcopy(current)
        elif val_set is None:
            best, best_epoch = copy.deepcopy(params if ema is None else ema), epoch
        rows.append(row)
        log.info(
            "epoch %d loc %.4f obj %.4f val_f1 %s val_pd %s rmse %s (%.0fs)",
            epoch, row["loc_loss"], row["obj_loss"], row.get("val_f1"), row.get("val_pd"),
            row.get("val_rmse"), time.perf_counter() - t_start,
        )
    return TrainResult(
        params=best,
        log=rows,
        best_epoch=best_epoch,
        best_f1=best_f1,
        seconds=time.perf_counter() - t_start,
        diverged=diverged,
        final_params=params,
    )
