"""Anchor-based detector: multi-kernel stem, U-shaped neck, multi-scale heads.

Layout for an R x N input and width ``h`` (default R = N = 64):

* stem: one factorized conv per kernel size (1 -> h each), concatenated,
  mixed by a pointwise conv to 2h
* down1 / down2: stride-2 factorized convs to 4h (R/2 and R/4 maps)
* neck: upsample down2, concatenate with down1, factorized conv to 4h,
  stride-2 fuse back to R/4
* heads: pointwise conv to 3 channels + sigmoid at stride 4; each further
  stride-2 branch feeds a coarser head (stride 8, 16, ...)

A factorized conv is a 1 x k pass along the angle axis, a leaky ReLU, then a
k x 1 pass along the delay axis. The angle axis is padded circularly unless
``circular`` is off; the delay axis is always zero-padded.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from scattersense.nn.layers import Conv2d, LeakyReLU, Sigmoid, upsample2, upsample2_backward

Params = dict[str, np.ndarray]
RawDetections = dict[tuple[int, int], np.ndarray]


@dataclass(frozen=True)
class DetectorConfig:
    h: int = 5
    stem_kernels: tuple[int, ...] = (3, 5, 7)
    head_scales: tuple[tuple[int, int], ...] = ((16, 16), (8, 8))
    activation: float = 0.1
    kernel: int = 5
    circular: bool = True
    factorized: bool = True
    input_shape: tuple[int, int] = (64, 64)
    conf_bias: float = -2.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "stem_kernels", tuple(int(k) for k in self.stem_kernels))
        object.__setattr__(self, "head_scales", tuple((int(a), int(b)) for a, b in self.head_scales))
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        if self.h < 1:
            raise ValueError("hidden width h must be >= 1")
        if not self.stem_kernels or any(k < 1 or k % 2 == 0 for k in (*self.stem_kernels, self.kernel)):
            raise ValueError("kernel sizes must be odd")
        if not self.head_scales:
            raise ValueError("at least one head scale is required")
        rows, cols = self.input_shape
        if rows % 4 or cols % 4:
            raise ValueError("input dimensions must be divisible by 4")
        for a, b in self.head_scales:
            if a < 1 or b < 1 or rows % a or cols % b:
                raise ValueError(f"head scale {(a, b)} does not divide input {self.input_shape}")
            s = rows // a
            if s != cols // b or s < 4 or s & (s - 1):
                raise ValueError(
                    f"head scale {(a, b)} needs an equal power-of-two stride >= 4 on both axes"
                )
        if len(set(self.head_scales)) != len(self.head_scales):
            raise ValueError("duplicate head scales")

    def head_stride(self, scale: tuple[int, int]) -> int:
        return self.input_shape[0] // scale[0]

    @property
    def max_stride(self) -> int:
        return max(self.head_stride(s) for s in self.head_scales)

    @property
    def n_anchors(self) -> int:
        return sum(a * b for a, b in self.head_scales)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stem_kernels"] = list(self.stem_kernels)
        d["head_scales"] = [list(s) for s in self.head_scales]
        d["input_shape"] = list(self.input_shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorConfig":
        d = dict(d)
        for key in ("stem_kernels", "input_shape"):
            if key in d:
                d[key] = tuple(d[key])
        if "head_scales" in d:
            d["head_scales"] = tuple(tuple(s) for s in d["head_scales"])
        return cls(**d)


class ConvSpec(NamedTuple):
    name: str
    cin: int
    cout: int
    kh: int
    kw: int
    out_hw: tuple[int, int]
    act: str  # "leaky" or "sigmoid"


def _block(name, cin, cout, k, stride, in_hw, factorized) -> list[ConvSpec]:
    h, w = in_hw
    out = (h // stride, w // stride)
    if factorized:
        return [
            ConvSpec(f"{name}.ang", cin, cout, 1, k, (h, w // stride), "leaky"),
            ConvSpec(f"{name}.dly", cout, cout, k, 1, out, "leaky"),
        ]
    return [ConvSpec(f"{name}.full", cin, cout, k, k, out, "leaky")]


def layer_table(config: DetectorConfig) -> list[ConvSpec]:
    """Every convolution of the network in evaluation order."""
    h, k, fz = config.h, config.kernel, config.factorized
    r, n = config.input_shape
    specs: list[ConvSpec] = []
    for ks in config.stem_kernels:
        specs += _block(f"stem{ks}", 1, h, ks, 1, (r, n), fz)
    nstem = h * len(config.stem_kernels)
    specs.append(ConvSpec("stem.mix", nstem, 2 * h, 1, 1, (r, n), "leaky"))
    specs += _block("down1", 2 * h, 4 * h, k, 2, (r, n), fz)
    specs += _block("down2", 4 * h, 4 * h, k, 2, (r // 2, n // 2), fz)
    specs += _block("neck", 8 * h, 4 * h, k, 1, (r // 2, n // 2), fz)
    specs += _block("fuse", 4 * h, 4 * h, k, 2, (r // 2, n // 2), fz)
    s = 4
    while s < config.max_stride:
        specs += _block(f"branch{2 * s}", 4 * h, 4 * h, k, 2, (r // s, n // s), fz)
        s *= 2
    for a, b in config.head_scales:
        specs.append(ConvSpec(f"head{a}x{b}", 4 * h, 3, 1, 1, (a, b), "sigmoid"))
    return specs


def init_params(config: DetectorConfig, rng_seed: int = 0, dtype=np.float32) -> Params:
    """Uniform(+-sqrt(6/fan_in)) weights, zero biases, confidence bias at ``conf_bias``."""
    rng = np.random.default_rng(rng_seed)
    params: Params = {}
    for spec in layer_table(config):
        fan_in = spec.cin * spec.kh * spec.kw
        bound = np.sqrt(6.0 / fan_in)
        params[f"{spec.name}.w"] = rng.uniform(-bound, bound, (spec.cout, spec.cin, spec.kh, spec.kw)).astype(dtype)
        bias = np.zeros(spec.cout, dtype=dtype)
        if spec.act == "sigmoid":
            bias[2] = config.conf_bias
        params[f"{spec.name}.b"] = bias
    return params


def count_params_flops(config: DetectorConfig) -> tuple[int, int]:
    """Exact parameter count and FLOPs for one input image.

    A conv output element costs 2*cin*kh*kw FLOPs plus one for the bias;
    every activation (leaky or sigmoid) costs one more per element.
    """
    n_params = 0
    flops = 0
    for spec in layer_table(config):
        n_params += spec.cout * spec.cin * spec.kh * spec.kw + spec.cout
        elems = spec.cout * spec.out_hw[0] * spec.out_hw[1]
        flops += elems * (2 * spec.cin * spec.kh * spec.kw + 1 + 1)
    return n_params, flops


class _ConvAct:
    def __init__(self, name, stride, circular, slope, need_input_grad=True, act="leaky"):
        self.name = name
        self.conv = Conv2d(stride, circular, need_input_grad)
        self.act = Sigmoid() if act == "sigmoid" else LeakyReLU(slope)

    def forward(self, x, params):
        return self.act.forward(self.conv.forward(x, params[self.name + ".w"], params[self.name + ".b"]))

    def backward(self, g, grads):
        gx, gw, gb = self.conv.backward(self.act.backward(g))
        grads[self.name + ".w"] = gw
        grads[self.name + ".b"] = gb
        return gx


class _Block:
    def __init__(self, name, stride, config: DetectorConfig, need_input_grad=True):
        c, a = config.circular, config.activation
        if config.factorized:
            self.layers = [
                _ConvAct(f"{name}.ang", (1, stride), c, a, need_input_grad),
                _ConvAct(f"{name}.dly", (stride, 1), c, a),
            ]
        else:
            self.layers = [_ConvAct(f"{name}.full", (stride, stride), c, a, need_input_grad)]

    def forward(self, x, params):
        for layer in self.layers:
            x = layer.forward(x, params)
        return x

    def backward(self, g, grads):
        for layer in reversed(self.layers):
            g = layer.backward(g, grads)
        return g


class Detector:
    """Stateful wrapper: ``forward`` records what ``backward`` needs."""

    def __init__(self, config: DetectorConfig, params: Params):
        self.config = config
        self.params = params
        cfg = config
        self.stem = [_Block(f"stem{k}", 1, cfg, need_input_grad=False) for k in cfg.stem_kernels]
        self.mix = _ConvAct("stem.mix", (1, 1), cfg.circular, cfg.activation)
        self.down1 = _Block("down1", 2, cfg)
        self.down2 = _Block("down2", 2, cfg)
        self.neck = _Block("neck", 1, cfg)
        self.fuse = _Block("fuse", 2, cfg)
        self.branches = {}
        s = 4
        while s < cfg.max_stride:
            self.branches[2 * s] = _Block(f"branch{2 * s}", 2, cfg)
            s *= 2
        self.heads = {
            sc: _ConvAct(f"head{sc[0]}x{sc[1]}", (1, 1), cfg.circular, cfg.activation, act="sigmoid")
            for sc in cfg.head_scales
        }

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def forward(self, x: np.ndarray) -> RawDetections:
        """Run the network on one (R, N) image or a (B, R, N) batch.

        Returns a dict keyed by head scale (a, b) holding arrays shaped
        (3, a, b) or (B, 3, a, b); channels are (delay offset, angle offset,
        confidence).
        """
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.shape[1:] != self.config.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} != {self.config.input_shape}")
        self._single = single
        p = self.params
        x0 = x[None]  # (1, B, R, N)
        cat0 = np.concatenate([b.forward(x0, p) for b in self.stem], axis=0)
        m = self.mix.forward(cat0, p)
        d1 = self.down1.forward(m, p)
        d2 = self.down2.forward(d1, p)
        self._n_up = d2.shape[0]
        n1 = self.neck.forward(np.concatenate([upsample2(d2), d1], axis=0), p)
        feats = {4: self.fuse.forward(n1, p)}
        for s, blk in self.branches.items():
            feats[s] = blk.forward(feats[s // 2], p)
        out: RawDetections = {}
        for sc, head in self.heads.items():
            y = head.forward(feats[self.config.head_stride(sc)], p)  # (3, B, a, b)
            if not np.all(np.isfinite(y)):
                raise FloatingPointError("non-finite detector output")
            y = y.transpose(1, 0, 2, 3)
            out[sc] = y[0] if single else y
        return out

    def backward(self, upstream: RawDetections) -> Params:
        """Gradients of every parameter given dLoss/dRawDetections."""
        grads: Params = {}
        cfg = self.config
        gfeat: dict[int, np.ndarray] = {}
        for sc, head in self.heads.items():
            g = np.asarray(upstream[sc], dtype=self.dtype)
            g = g[None] if self._single else g
            gx = head.backward(g.transpose(1, 0, 2, 3), grads)
            s = cfg.head_stride(sc)
            gfeat[s] = gx if s not in gfeat else gfeat[s] + gx
        for s in sorted(self.branches, reverse=True):
            g = gfeat.pop(s)
            gprev = self.branches[s].backward(g, grads)
            gfeat[s // 2] = gprev if s // 2 not in gfeat else gfeat[s // 2] + gprev
        g_n1 = self.fuse.backward(gfeat[4], grads)
        g_cat = self.neck.backward(g_n1, grads)
        g_d2 = upsample2_backward(g_cat[: self._n_up])
        g_d1 = g_cat[self._n_up :] + self.down2.backward(g_d2, grads)
        g_m = self.down1.backward(g_d1, grads)
        g_cat0 = self.mix.backward(g_m, grads)
        hk = g_cat0.shape[0] // len(self.stem)
        for i, blk in enumerate(self.stem):
            blk.backward(g_cat0[i * hk : (i + 1) * hk], grads)
        return {name: grads[name] for name in self.params}


def forward(x: np.ndarray, params: Params, config: DetectorConfig) -> RawDetections:
    return Detector(config, params).forward(x)


def backward(x: np.ndarray, params: Params, upstream: RawDetections, config: DetectorConfig) -> Params:
    net = Detector(config, params)
    net.forward(x)
    return net.backward(upstream)
