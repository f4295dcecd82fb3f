"""Synthetic datasets and their binary on-disk format.

File layout (little-endian): magic ``CSIY``, u32 version, u32 header length
+ UTF-8 JSON header (kind, split, seed, count, snr_db, n_s_range, system
config, image shape), then ``count`` records of

* u32 scene JSON length + scene JSON
* float32 magnitude image of the truncated angular-delay map, row-major
* u32 label count + per label three float64 (tau_bar, theta_bar, |alpha|)

A ``<file>.manifest.json`` sidecar records the byte offset of each record.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from scattersense.config import SystemConfig
from scattersense.scene import Scene, add_estimation_noise, channel_power, path_arrays, sample_scene, synthesize_channel
from scattersense.transform import angular_delay_map, normalize_input

MAGIC = b"CSIY"
VERSION = 1
SCENE_STREAM = 0
NOISE_STREAM = 1


class DatasetError(ValueError):
    pass


def derive_seed(seed: int, index: int, stream: int) -> int:
    """Independent 63-bit seed for (dataset seed, sample index, stream)."""
    return int(np.random.SeedSequence([seed, index, stream]).generate_state(1, np.uint64)[0] >> np.uint64(1))


def scene_labels(scene: Scene, config: SystemConfig) -> np.ndarray:
    """(n_s, 3) continuous (tau_bar, theta_bar, |alpha|) of every scatter."""
    tau, theta, alpha = path_arrays(scene, config)
    tau_bar = config.delta_f * tau[1:] * config.n_c
    s = np.sin(theta[1:])
    theta_bar = np.where(s >= 0, s / 2, s / 2 + 1) * config.n_t
    theta_bar = np.where(theta_bar >= config.n_t, theta_bar - config.n_t, theta_bar)
    return np.stack([tau_bar, theta_bar, np.abs(alpha[1:])], axis=1).reshape(-1, 3)


@dataclass
class SampleSet:
    """Scenes with their truncated complex angular-delay maps."""

    scenes: list[Scene]
    maps: np.ndarray  # (B, n_c_trunc, n_t) complex64
    p_h: np.ndarray  # mean channel power per sample (noiseless channel)
    config: SystemConfig
    seed: int = 0
    split: str = "train"
    snr_db: float | None = None
    n_s_range: tuple[int, int] = (5, 10)
    _images: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.scenes)

    @property
    def images(self) -> np.ndarray:
        """Detector inputs (normalized log-magnitude), float32."""
        if self._images is None:
            self._images = normalize_input(self.maps).astype(np.float32)
        return self._images

    def labels(self, i: int) -> np.ndarray:
        return scene_labels(self.scenes[i], self.config)

    def channel(self, i: int) -> np.ndarray:
        """Frequency-antenna channel of sample ``i`` including its estimation noise."""
        h = synthesize_channel(self.scenes[i], self.config)
        return add_estimation_noise(h, self.snr_db, derive_seed(self.seed, i, NOISE_STREAM))

    def subset(self, idx) -> "SampleSet":
        idx = list(idx)
        return SampleSet(
            scenes=[self.scenes[i] for i in idx],
            maps=self.maps[idx],
            p_h=self.p_h[idx],
            config=self.config,
            seed=self.seed,
            split=self.split,
            snr_db=self.snr_db,
            n_s_range=self.n_s_range,
        )

    def with_noise(self, snr_db: float | None, seed: int | None = None) -> "SampleSet":
        """Same scenes, channels re-synthesized at another evaluation SNR."""
        seed = self.seed if seed is None else seed
        return build_sample_set(self.scenes, self.config, seed, self.split, snr_db, self.n_s_range)

    def header(self) -> dict[str, Any]:
        return {
            "kind": "dataset",
            "split": self.split,
            "seed": self.seed,
            "count": len(self),
            "snr_db": None if self.snr_db is None or math.isinf(self.snr_db) else self.snr_db,
            "n_s_range": list(self.n_s_range),
            "config": self.config.to_dict(),
            "image_shape": [self.config.n_c_trunc, self.config.n_t],
        }


def build_sample_set(
    scenes: list[Scene],
    config: SystemConfig,
    seed: int,
    split: str = "train",
    snr_db: float | None = None,
    n_s_range=(5, 10),
) -> SampleSet:
    maps = np.empty((len(scenes), config.n_c_trunc, config.n_t), dtype=np.complex64)
    p_h = np.empty(len(scenes))
    for i, scene in enumerate(scenes):
        h = synthesize_channel(scene, config)
        p_h[i] = channel_power(h)
        h = add_estimation_noise(h, snr_db, derive_seed(seed, i, NOISE_STREAM))
        maps[i] = angular_delay_map(h, config)
    return SampleSet(scenes, maps, p_h, config, seed, split, snr_db, tuple(n_s_range))


def generate(
    seed: int,
    count: int,
    config: SystemConfig | None = None,
    n_s_range=(5, 10),
    snr_db: float | None = None,
    split: str = "train",
) -> SampleSet:
    config = config or SystemConfig()
    scenes = [sample_scene(derive_seed(seed, i, SCENE_STREAM), config, n_s_range) for i in range(count)]
    return build_sample_set(scenes, config, seed, split, snr_db, n_s_range)


def write_dataset(path, ds: SampleSet) -> dict[str, Any]:
    """Write ``ds`` and its manifest sidecar; returns the manifest."""
    path = Path(path)
    header = json.dumps(ds.header(), sort_keys=True).encode()
    mags = np.abs(ds.maps).astype("<f4")
    offsets = []
    with open(path, "wb") as f:
        f.write(MAGIC + struct.pack("<II", VERSION, len(header)) + header)
        for i, scene in enumerate(ds.scenes):
            offsets.append(f.tell())
            blob = scene.to_json().encode()
            f.write(struct.pack("<I", len(blob)) + blob)
            f.write(mags[i].tobytes())
            lab = ds.labels(i).astype("<f8")
            f.write(struct.pack("<I", len(lab)) + lab.tobytes())
    manifest = {
        "count": len(ds),
        "split": ds.split,
        "seed": ds.seed,
        "snr_db": ds.header()["snr_db"],
        "n_s_range": list(ds.n_s_range),
        "config": ds.config.to_dict(),
        "offsets": offsets,
        "file": path.name,
    }
    Path(str(path) + ".manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest


@dataclass
class DatasetRecord:
    scene: Scene
    image: np.ndarray  # float32 magnitude
    labels: np.ndarray  # (n, 3) float64


def read_records(path) -> tuple[dict[str, Any], list[DatasetRecord]]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise DatasetError(f"{path}: not a dataset file (bad magic)")
    version, n = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise DatasetError(f"{path}: unsupported version {version}")
    header = json.loads(data[12 : 12 + n])
    if header.get("kind") != "dataset":
        raise DatasetError(f"{path}: not a dataset file")
    rows, cols = header["image_shape"]
    pos = 12 + n
    records = []
    for _ in range(header["count"]):
        (ln,) = struct.unpack_from("<I", data, pos)
        pos += 4
        scene = Scene.from_json(data[pos : pos + ln].decode())
        pos += ln
        image = np.frombuffer(data, "<f4", rows * cols, pos).reshape(rows, cols).copy()
        pos += 4 * rows * cols
        (nl,) = struct.unpack_from("<I", data, pos)
        pos += 4
        labels = np.frombuffer(data, "<f8", 3 * nl, pos).reshape(nl, 3).copy()
        pos += 24 * nl
        records.append(DatasetRecord(scene, image, labels))
    if pos != len(data):
        raise DatasetError(f"{path}: {len(data) - pos} trailing bytes")
    return header, records


def read_dataset(path) -> SampleSet:
    """Load a dataset file and re-synthesize its complex maps from the stored scenes."""
    header, records = read_records(path)
    config = SystemConfig.from_dict(header["config"])
    ds = build_sample_set(
        [r.scene for r in records],
        config,
        header["seed"],
        header["split"],
        header["snr_db"],
        tuple(header["n_s_range"]),
    )
    stored = np.stack([r.image for r in records]) if records else np.zeros((0,) + ds.maps.shape[1:], np.float32)
    if records and not np.allclose(stored, np.abs(ds.maps), rtol=1e-5, atol=1e-3 * float(stored.max())):
        raise DatasetError(f"{path}: stored images do not match re-synthesized channels")
    return ds
