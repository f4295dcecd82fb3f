"""Experiment orchestration: methods x conditions -> metric reports and artifacts.

An experiment config is JSON::

    {
      "name": "snr-sweep",
      "test": {"seed": 9, "count": 200, "n_s_range": [5, 10]},
      "snr_db": [null, 20, 10, 0],
      "n_s": [5, 7, 10],
      "r": 1.0,
      "methods": [
        {"name": "det-h5", "kind": "detector", "ckpt": "model.ckpt"},
        {"name": "music-fft", "kind": "music-fft"}
      ]
    }

``snr_db`` entries of null mean noiseless. ``n_s`` (optional) adds fixed
scatter-count conditions on top of the ``test`` range. A detector method may
carry an inline ``train`` block (same schema as the ``train`` subcommand)
instead of a checkpoint path.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from scattersense.baseline import METHOD as BASELINE_METHOD, BaselineConfig, run_baseline
from scattersense.config import SystemConfig
from scattersense.dataset import SampleSet, generate, read_dataset
from scattersense.localization import LocalizedScatter
from scattersense.metrics import MetricsReport
from scattersense.nn.checkpoint import load_checkpoint, save_checkpoint
from scattersense.nn.detector import Detector, DetectorConfig
from scattersense.pipeline import Detection, detect, evaluate, localize
from scattersense.postprocess import T1_DEFAULT, TD_DEFAULT
from scattersense.training import TrainConfig, train, write_log

log = logging.getLogger(__name__)

REPORT_FIELDS = ["method", "snr_db", "n_s_range", "h", "pd", "precision", "f1", "rmse", "n_true", "n_est", "n_samples", "n_empty_est", "r"]


class ExperimentError(RuntimeError):
    pass


@dataclass
class MethodSpec:
    name: str
    kind: str  # "detector" or "music-fft"
    ckpt: str | None = None
    train: dict[str, Any] | None = None
    k: int | None = None  # baseline scatter count; None uses the true count

    def __post_init__(self) -> None:
        if self.kind not in ("detector", BASELINE_METHOD):
            raise ExperimentError(f"unknown method kind {self.kind!r}")
        if self.kind == "detector" and not (self.ckpt or self.train):
            raise ExperimentError(f"detector method {self.name!r} needs 'ckpt' or 'train'")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    test: dict[str, Any] = field(default_factory=lambda: {"seed": 3, "count": 100, "n_s_range": [5, 10]})
    snr_db: list[float | None] = field(default_factory=lambda: [None])
    n_s: list[int] | None = None
    r: float = 1.0
    t1: float = T1_DEFAULT
    t_d: float = TD_DEFAULT
    methods: list[MethodSpec] = field(default_factory=list)
    system: dict[str, Any] | None = None

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        d = dict(d)
        d["methods"] = [m if isinstance(m, MethodSpec) else MethodSpec(**m) for m in d.get("methods", [])]
        cfg = cls(**d)
        if not cfg.methods:
            raise ExperimentError("experiment declares no methods")
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ExperimentError(f"config file not found: {path}")
        cfg = cls.from_dict(json.loads(path.read_text()))
        base = path.parent
        for m in cfg.methods:
            if m.ckpt and not Path(m.ckpt).is_absolute():
                m.ckpt = str(base / m.ckpt)
        if "path" in cfg.test and not Path(cfg.test["path"]).is_absolute():
            cfg.test["path"] = str(base / cfg.test["path"])
        return cfg

    @property
    def system_config(self) -> SystemConfig:
        return SystemConfig.from_dict(self.system) if self.system else SystemConfig()


def load_split(spec: dict[str, Any], config: SystemConfig, split: str) -> SampleSet:
    """A split from ``{"path": file}`` or ``{"seed", "count", "n_s_range", "snr_db"}``."""
    if "path" in spec:
        if not Path(spec["path"]).exists():
            raise ExperimentError(f"dataset not found: {spec['path']}")
        return read_dataset(spec["path"])
    return generate(
        int(spec["seed"]),
        int(spec["count"]),
        config,
        tuple(spec.get("n_s_range", (5, 10))),
        spec.get("snr_db"),
        split,
    )


def train_from_spec(spec: dict[str, Any], out_dir=None) -> tuple[Detector, dict[str, Any]]:
    """Train a detector from a ``train`` config block; optionally persist artifacts."""
    system = SystemConfig.from_dict(spec["system"]) if spec.get("system") else SystemConfig()
    det_cfg = DetectorConfig.from_dict(spec.get("detector", {}))
    tc = TrainConfig.from_dict(spec.get("train", {}))
    data = spec.get("data", {})
    tr = load_split(data.get("train", {"seed": 1, "count": 2000}), system, "train")
    va = load_split(data.get("val", {"seed": 2, "count": 500}), system, "val")
    res = train(tr, va, det_cfg, tc, rng_seed=int(spec.get("seed", 0)))
    summary = {
        "best_epoch": res.best_epoch,
        "best_val_f1": res.best_f1,
        "seconds": res.seconds,
        "diverged": res.diverged,
        "detector": det_cfg.to_dict(),
        "train": tc.to_dict(),
    }
    if out_dir is not None:
        from scattersense.plotting import plot_training_log

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "model.ckpt", res.params, det_cfg, extra={"train": tc.to_dict(), "best_epoch": res.best_epoch})
        write_log(out / "train_log.csv", res.log)
        if res.log:
            plot_training_log(res.log, out / "convergence.svg")
        (out / "train_summary.json").write_text(json.dumps(summary, indent=1, default=str))
    return Detector(det_cfg, res.params), summary


def detector_positions(net: Detector, ds: SampleSet, t1=T1_DEFAULT, t_d=TD_DEFAULT):
    dets = detect(net, ds.images, ds.config, t1, t_d)
    return dets, localize(ds.scenes, dets, ds.config)


def baseline_positions(ds: SampleSet, k: int | None = None):
    """MUSIC-FFT positions per sample; ``k=None`` hands it the true count."""
    out: list[list[LocalizedScatter]] = []
    meta = []
    for i, scene in enumerate(ds.scenes):
        bc = BaselineConfig(k=k or max(scene.n_s, 1))
        res = run_baseline(ds.channel(i), scene.bs_pos, scene.ue_pos, ds.config, bc)
        out.append(res.positions)
        meta.append({"pairs": res.pairs, "delay_shortfall": res.delay_shortfall, "column_collision": res.column_collision})
    return out, meta


def _conditions(cfg: ExperimentConfig):
    base = tuple(cfg.test.get("n_s_range", (5, 10)))
    ranges = [base] + [(n, n) for n in (cfg.n_s or []) if (n, n) != base]
    for rng in ranges:
        for snr in cfg.snr_db:
            yield rng, snr


def run_experiment(cfg: ExperimentConfig, out_dir, make_plots: bool = True) -> list[MetricsReport]:
    """Evaluate every method under every (scatter-count range, SNR) condition."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    system = cfg.system_config
    nets: dict[str, Detector] = {}
    for m in cfg.methods:
        if m.kind != "detector":
            continue
        if m.ckpt:
            if not Path(m.ckpt).exists():
                raise ExperimentError(f"checkpoint not found: {m.ckpt}")
            params, det_cfg, _ = load_checkpoint(m.ckpt)
            nets[m.name] = Detector(det_cfg, params)
        else:
            nets[m.name], _ = train_from_spec(m.train, out / f"train-{m.name}")
    reports: list[MetricsReport] = []
    base_sets: dict[tuple, SampleSet] = {}
    for rng, snr in _conditions(cfg):
        if rng not in base_sets:
            spec = dict(cfg.test, n_s_range=list(rng), snr_db=None)
            if rng != tuple(cfg.test.get("n_s_range", (5, 10))):
                spec.pop("path", None)
                spec.setdefault("seed", 3)
                spec.setdefault("count", 100)
            base_sets[rng] = load_split(spec, system, "test")
        ds = base_sets[rng] if snr is None else base_sets[rng].with_noise(snr)
        for m in cfg.methods:
            if m.kind == "detector":
                _, pos = detector_positions(nets[m.name], ds, cfg.t1, cfg.t_d)
                h = nets[m.name].config.h
            else:
                pos, _ = baseline_positions(ds, m.k)
                h = None
            rep = evaluate(ds.scenes, pos, cfg.r, method=m.name, snr_db=snr, n_s_range=list(rng), h=h)
            log.info("%s n_s=%s snr=%s: F1 %.4f Pd %.4f RMSE %s", m.name, rng, snr, rep.f1, rep.pd, rep.rmse)
            reports.append(rep)
    write_reports(reports, out)
    if make_plots:
        render_plots(reports, out)
    return reports


def report_row(rep: MetricsReport) -> dict[str, Any]:
    d = rep.to_dict()
    tags = d.pop("tags")
    row = {**tags, **d}
    row["n_s_range"] = "-".join(str(v) for v in tags.get("n_s_range", [])) or None
    return {k: row.get(k) for k in REPORT_FIELDS}


def write_reports(reports: Sequence[MetricsReport], out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    csv_path, json_path = out / "results.csv", out / "results.json"
    with open(csv_path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=REPORT_FIELDS)
        w.writeheader()
        for rep in reports:
            w.writerow(report_row(rep))
    json_path.write_text(json.dumps([r.to_dict() for r in reports], indent=1))
    return csv_path, json_path


def load_reports(path) -> list[MetricsReport]:
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = [data]
    return [MetricsReport.from_dict(d) for d in data]


def render_plots(reports: Sequence[MetricsReport], out_dir) -> list[Path]:
    """One sweep figure per condition axis that actually varies."""
    from scattersense.plotting import plot_metric_sweep

    out = Path(out_dir)
    paths = []
    for key, fname in (("snr_db", "metrics_vs_snr.svg"), ("n_s_range", "metrics_vs_ns.svg"), ("h", "metrics_vs_h.svg")):
        subset = [r for r in reports if key != "h" or r.tags.get("h") is not None]
        values = {json.dumps(r.tags.get(key)) for r in subset}
        if len(values) > 1 or (key == "snr_db" and subset):
            series = "snr_db" if key == "h" else "method"
            paths.append(plot_metric_sweep(subset, key, out / fname, series_key=series))
    return paths


def finite_or_none(x: float | None):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def predictions_doc(method: str, ds: SampleSet, positions, detections: Sequence[Sequence[Detection]] | None = None, meta=None):
    """Shared JSON schema for detector and baseline predictions."""
    samples = []
    for i, pos in enumerate(positions):
        entry = {"index": i, "positions": [p.to_dict() for p in pos]}
        if detections is not None:
            entry["detections"] = [{"tau_s": t, "theta_rad": a, "confidence": c} for t, a, c in detections[i]]
        if meta is not None:
            entry["meta"] = meta[i]
        samples.append(entry)
    return {"kind": "predictions", "method": method, "count": len(samples), "dataset": ds.header(), "samples": samples}
