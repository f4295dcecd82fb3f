import math

import numpy as np
import pytest

from scattersense.baseline import (
    BaselineConfig,
    angle_grid,
    angular_covariance,
    delay_peaks,
    music_spectrum,
    pair_and_localize,
    run_baseline,
)
from scattersense.config import SystemConfig
from scattersense.localization import locate_scatter
from scattersense.metrics import metric_pd
from scattersense.scene import channel_from_paths, sample_scene, synthesize_channel
from scattersense.transform import to_angular_delay

CFG = SystemConfig()
BIN = 1 / (CFG.delta_f * CFG.n_c)


def test_config_validation():
    with pytest.raises(ValueError):
        BaselineConfig(k=0)
    with pytest.raises(ValueError):
        BaselineConfig(k=1, angle_grid_step=0.0)


def test_covariance_rank_one_single_path():
    h = channel_from_paths([33 * BIN], [0.3], [1.0], CFG)
    r = angular_covariance(h)
    assert np.array_equal(r, r.conj().T)
    ev = np.linalg.eigvalsh(r)[::-1]
    assert ev[1] <= 1e-6 * ev[0]


def test_covariance_rank_two():
    rng = np.random.default_rng(0)
    h = channel_from_paths(rng.uniform(1, 60, 2) * BIN, [-0.4, 0.5], [1.0, 0.5j], CFG)
    ev = np.linalg.eigvalsh(angular_covariance(h))[::-1]
    assert ev[1] > 1e-3 * ev[0] and ev[2] <= 1e-6 * ev[0]


def test_covariance_needs_snapshots():
    with pytest.raises(ValueError):
        angular_covariance(np.ones((8, 16)))


def test_spectrum_peak_single_path():
    h = channel_from_paths([12.3 * BIN], [math.radians(30)], [1.0], CFG)
    theta, p = music_spectrum(angular_covariance(h), 1, CFG)
    assert abs(theta[np.argmax(p)] - math.radians(30)) <= math.radians(0.05)
    assert np.all(p > 0)
    assert np.all(np.abs(theta) < math.pi / 2)


def test_spectrum_follows_phase_ramp():
    h = channel_from_paths([12.3 * BIN], [math.radians(10)], [1.0], CFG)
    ramp = np.exp(-2j * np.pi * 0.5 * np.arange(CFG.n_t) * (math.sin(math.radians(25)) - math.sin(math.radians(10))))
    theta, p = music_spectrum(angular_covariance(h * ramp), 1, CFG)
    assert abs(theta[np.argmax(p)] - math.radians(25)) <= math.radians(0.05)


def test_spectrum_rejects_bad_k():
    with pytest.raises(ValueError):
        music_spectrum(np.eye(CFG.n_t), CFG.n_t, CFG)


def test_angle_grid_open_interval():
    g = angle_grid(math.radians(0.05))
    assert g[0] > -math.pi / 2 and g[-1] < math.pi / 2 and 0.0 in g


def test_delay_peaks_examples():
    h = channel_from_paths(np.array([5, 20]) * BIN, [0.1, -0.3], [1.0, 0.8], CFG)
    bins, short = delay_peaks(to_angular_delay(h, CFG), 2)
    assert sorted(bins.tolist()) == [5, 20] and not short
    bins, short = delay_peaks(to_angular_delay(h, CFG), 1)
    assert bins.tolist() == [5]
    bins, short = delay_peaks(np.zeros((64, 16)), 2)
    assert len(bins) == 0 and short


def test_delay_peaks_skip_los_bin_and_truncated_offset():
    h = channel_from_paths(np.array([0, 9]) * BIN, [0.0, 0.4], [1.0, 0.3], CFG)
    full = to_angular_delay(h, CFG)
    assert delay_peaks(full, 1)[0].tolist() == [9]
    assert delay_peaks(full[1:65], 1, first_bin=1)[0].tolist() == [9]


def _two_path_case(theta2):
    bs, ue = (0.0, 0.0), (60.0, 10.0)
    taus = np.array([0, 14, 37]) * BIN
    thetas = np.array([math.atan2(10, 60), -0.6, theta2])
    h = channel_from_paths(taus, thetas, [1.0, 0.5, 0.4], CFG)
    return bs, ue, taus, thetas, to_angular_delay(h, CFG)


def test_pairing_single():
    bs, ue, taus, thetas, hb = _two_path_case(0.7)
    res = pair_and_localize([thetas[1]], [1.0], [14], hb, bs, ue, CFG)
    assert res.pairs == [(14, thetas[1])]


def test_pairing_two_paths():
    bs, ue, taus, thetas, hb = _two_path_case(0.7)
    res = pair_and_localize(thetas, [3.0, 2.0, 1.0], [37, 14, 0], hb, bs, ue, CFG)
    assert sorted(res.pairs) == [(14, thetas[1]), (37, thetas[2])]
    truth = [locate_scatter(t, a, bs, ue, CFG.c) for t, a in zip(taus[1:], thetas[1:])]
    got = [(p.x_m, p.y_m) for p in res.positions]
    assert metric_pd(truth, got, r=1e-6) == 1.0
    assert not res.column_collision


def test_pairing_flags_shared_column():
    bs, ue, taus, thetas, hb = _two_path_case(-0.6 + 1e-3)
    res = pair_and_localize(thetas, [3.0, 2.0, 1.0], [37, 14, 0], hb, bs, ue, CFG)
    assert res.column_collision


def test_noiseless_on_grid_recovery():
    bs, ue = (0.0, 0.0), (50.0, 20.0)
    tb = np.array([0, 7, 19, 33])
    cols = np.array([0, 5, 50, 20])
    # on-grid angles: sin(theta) = 2 * col / n_t wrapped into [-1, 1)
    s = 2 * cols / CFG.n_t
    s = np.where(s >= 1, s - 2, s)
    thetas = np.arcsin(s)
    h = channel_from_paths(tb * BIN, thetas, [1.0, 0.5, 0.4, 0.3], CFG)
    res = run_baseline(h, bs, ue, CFG, BaselineConfig(k=3))
    assert sorted(d for d, _ in res.pairs) == [7, 19, 33]
    for d, a in res.pairs:
        assert abs(a - thetas[tb.tolist().index(d)]) <= math.radians(0.05)


def test_run_baseline_on_scene():
    s = sample_scene(5, CFG)
    res = run_baseline(synthesize_channel(s, CFG), s.bs_pos, s.ue_pos, CFG, BaselineConfig(k=s.n_s))
    assert res.meta["method"] == "music-fft"
    assert 0 < len(res.positions) <= s.n_s
