import math

import numpy as np
import pytest

from scattersense.config import SystemConfig
from scattersense.nn.detector import DetectorConfig
from scattersense.postprocess import (
    DetectionCandidate as C,
    coarse_filter,
    decode,
    fine_filter,
    merge,
    postprocess,
    to_params,
)
from scattersense.training import assign_anchors, map_labels


def empty_raw(cfg=DetectorConfig()):
    return {s: np.zeros((3, *s)) for s in cfg.head_scales}


def test_decode_example():
    raw = empty_raw()
    raw[(16, 16)][:, 2, 8] = (0.625, 0.3125, 0.9)
    cands = decode(raw, DetectorConfig())
    assert len(cands) == 320
    hit = [c for c in cands if c.confidence == 0.9]
    assert hit == [C(11.5, 33.25, 0.9)]


def test_decode_corner():
    cands = decode(empty_raw(), DetectorConfig())
    assert cands[0] == C(1.0, 0.0, 0.0)


def test_decode_inverts_anchor_assignment():
    cfg = DetectorConfig()
    table = np.array([[11.5, 33.25, 0.4], [40.2, 63.9, 0.3]])
    lab = assign_anchors(map_labels(table), cfg)
    raw = {s: np.concatenate([lab.offsets[s], lab.conf[s][None]]) for s in cfg.head_scales}
    got = sorted((c.tau_bar, c.theta_bar) for c in decode(raw, cfg) if c.confidence == 1)
    want = sorted(map(tuple, np.repeat(table[:, :2], 2, axis=0)))
    assert np.allclose(got, want)


def test_coarse_filter():
    cands = [C(1, 1, 0.9), C(2, 2, 0.4)]
    assert coarse_filter(cands, 0.5) == [cands[0]]
    assert coarse_filter([C(1, 1, 0.1)], 0.5) == []
    assert coarse_filter(cands, 0.0) == cands


def test_merge_examples():
    a, b = C(10.2, 33.1, 0.9), C(10.6, 33.4, 0.7)
    assert merge([b, a], 4.0) == [a]
    far = C(20.2, 33.1, 0.8)
    assert merge([a, far], 4.0) == [a, far]
    assert merge([C(5, 0.5, 0.6), C(5, 63.5, 0.7)], 4.0, n_t=64) == [C(5, 63.5, 0.7)]
    assert len(merge([C(5, 0.5, 0.6), C(5, 63.5, 0.7)], 4.0, n_t=None)) == 2


def test_merge_is_transitive():
    chain = [C(0, 0, 0.5), C(1.5, 0, 0.6), C(3.0, 0, 0.7)]
    assert merge(chain, 4.0, None) == [chain[2]]


def test_merge_order_independent():
    rng = np.random.default_rng(0)
    cands = [C(*rng.uniform(0, 20, 2), float(c)) for c in rng.permutation(30) / 30]
    base = merge(cands, 4.0)
    for _ in range(5):
        perm = [cands[i] for i in rng.permutation(len(cands))]
        assert merge(perm, 4.0) == base


def test_fine_filter_examples():
    out = fine_filter([C(0, 0, 0.9), C(1, 1, 0.9), C(2, 2, 0.05)])
    assert [c.confidence for c in out] == [0.9, 0.9]
    assert fine_filter([C(0, 0, 0.01)]) == [C(0, 0, 0.01)]
    assert fine_filter([]) == []


def test_to_params_examples():
    cfg = SystemConfig()
    (tau, theta, conf), = to_params([C(102, 16, 0.8)], cfg)
    assert tau == pytest.approx(0.99609e-6, rel=1e-5)
    assert math.degrees(theta) == pytest.approx(30.0)
    (tau, theta, _), = to_params([C(1, 0, 0.8)], cfg)
    assert tau == pytest.approx(9.7656e-9, rel=1e-4) and theta == 0


def test_postprocess_chain():
    cfg = DetectorConfig()
    raw = empty_raw()
    raw[(16, 16)][:, 2, 8] = (0.625, 0.3125, 0.95)
    raw[(8, 8)][:, 1, 4] = (0.3125, 0.15625, 0.8)  # same point at the coarse head
    raw[(16, 16)][:, 10, 3] = (0.5, 0.5, 0.6)
    out = postprocess(raw, cfg)
    assert out == [C(11.5, 33.25, 0.95), C(43.0, 14.0, 0.6)]
    assert postprocess(empty_raw(), cfg) == []
