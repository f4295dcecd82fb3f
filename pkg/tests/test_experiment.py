import csv
import math

import pytest

from scattersense.experiment import ExperimentConfig, ExperimentError, MethodSpec, load_reports, run_experiment
from scattersense.nn.checkpoint import save_checkpoint
from scattersense.nn.detector import DetectorConfig, init_params


@pytest.fixture
def ckpt(tmp_path):
    cfg = DetectorConfig(h=1)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, init_params(cfg), cfg)
    return str(path)


def test_sweep_grid(tmp_path, ckpt):
    cfg = ExperimentConfig.from_dict(
        {
            "test": {"seed": 4, "count": 2, "n_s_range": [5, 10]},
            "snr_db": [None, 10],
            "n_s": [5],
            "methods": [{"name": "det", "kind": "detector", "ckpt": ckpt}, {"name": "music-fft", "kind": "music-fft"}],
        }
    )
    reports = run_experiment(cfg, tmp_path / "out")
    assert len(reports) == 2 * 2 * 2
    conds = {(r.tags["method"], tuple(r.tags["n_s_range"]), r.tags["snr_db"]) for r in reports}
    assert ("music-fft", (5, 5), 10) in conds
    rows = list(csv.DictReader(open(tmp_path / "out" / "results.csv")))
    assert len(rows) == 8 and rows[0]["method"] == "det"
    assert (tmp_path / "out" / "metrics_vs_snr.svg").exists()
    assert (tmp_path / "out" / "metrics_vs_ns.svg").exists()
    back = load_reports(tmp_path / "out" / "results.json")
    assert [b.f1 for b in back] == pytest.approx([r.f1 for r in reports], nan_ok=True)


def test_reproducible(tmp_path, ckpt):
    spec = {"test": {"seed": 4, "count": 2}, "methods": [{"name": "music-fft", "kind": "music-fft"}]}
    a = run_experiment(ExperimentConfig.from_dict(spec), tmp_path / "a", make_plots=False)
    b = run_experiment(ExperimentConfig.from_dict(spec), tmp_path / "b", make_plots=False)
    assert (tmp_path / "a" / "results.json").read_text() == (tmp_path / "b" / "results.json").read_text()
    assert a[0].n_samples == 2


def test_config_errors():
    with pytest.raises(ExperimentError):
        ExperimentConfig.from_dict({"methods": []})
    with pytest.raises(ExperimentError):
        MethodSpec(name="x", kind="detector")
    with pytest.raises(ExperimentError):
        MethodSpec(name="x", kind="ltd")
