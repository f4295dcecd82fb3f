"""Convolution and pointwise layers with hand-written reverse passes.

Feature maps use the (channels, batch, delay, angle) layout so every
convolution reduces to a single matrix product.
"""

from __future__ import annotations

import numpy as np


def pad_map(x: np.ndarray, ph: int, pw: int, circular: bool) -> np.ndarray:
    """Zero-pad the delay axis; pad the angular axis circularly or with zeros."""
    if pw:
        x = np.pad(x, [(0, 0), (0, 0), (0, 0), (pw, pw)], mode="wrap" if circular else "constant")
    if ph:
        x = np.pad(x, [(0, 0), (0, 0), (ph, ph), (0, 0)])
    return x


def fold_pad(g: np.ndarray, ph: int, pw: int, w: int, circular: bool) -> np.ndarray:
    """Adjoint of ``pad_map``: sum padded gradients back onto the source cells."""
    if ph:
        g = g[:, :, ph:-ph]
    if not pw:
        return g
    out = g[..., pw : pw + w].copy()
    if circular:
        for q in [*range(pw), *range(pw + w, w + 2 * pw)]:
            out[..., (q - pw) % w] += g[..., q]
    return out


class Conv2d:
    """Cross-correlation with 'same' output size per stride.

    Output cell ``i`` along an axis reads input cells ``i*stride + t - k//2``.
    """

    def __init__(self, stride=(1, 1), circular: bool = True, need_input_grad: bool = True):
        self.stride = stride
        self.circular = circular
        self.need_input_grad = need_input_grad

    def forward(self, x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
        cin, bsz, h, wd = x.shape
        cout, cin_w, kh, kw = w.shape
        if cin != cin_w:
            raise ValueError(f"conv expects {cin_w} input channels, got {cin}")
        sh, sw = self.stride
        if h % sh or wd % sw:
            raise ValueError(f"map {h}x{wd} not divisible by stride {self.stride}")
        ho, wo = h // sh, wd // sw
        ph, pw = kh // 2, kw // 2
        if kh == 1 and kw == 1 and sh == 1 and sw == 1:
            cols = x
        else:
            xp = pad_map(x, ph, pw, self.circular)
            cols = np.empty((cin, kh, kw, bsz, ho, wo), dtype=x.dtype)
            for t in range(kh):
                for u in range(kw):
                    cols[:, t, u] = xp[:, :, t : t + sh * (ho - 1) + 1 : sh, u : u + sw * (wo - 1) + 1 : sw]
        y = w.reshape(cout, -1) @ cols.reshape(cin * kh * kw, -1)
        y += b[:, None]
        self._cache = (cols, w, x.shape)
        return y.reshape(cout, bsz, ho, wo)

    def backward(self, gy: np.ndarray):
        cols, w, xshape = self._cache
        cout, cin, kh, kw = w.shape
        g2 = gy.reshape(cout, -1)
        gw = (g2 @ cols.reshape(cin * kh * kw, -1).T).reshape(w.shape)
        gb = g2.sum(axis=1)
        gx = None
        if self.need_input_grad:
            gcols = (w.reshape(cout, -1).T @ g2).reshape(cin, kh, kw, *gy.shape[1:])
            if kh == 1 and kw == 1 and self.stride == (1, 1):
                gx = gcols.reshape(xshape)
            else:
                _, bsz, h, wd = xshape
                sh, sw = self.stride
                ph, pw = kh // 2, kw // 2
                ho, wo = gy.shape[2:]
                gxp = np.zeros((cin, bsz, h + 2 * ph, wd + 2 * pw), dtype=gy.dtype)
                for t in range(kh):
                    for u in range(kw):
                        gxp[:, :, t : t + sh * (ho - 1) + 1 : sh, u : u + sw * (wo - 1) + 1 : sw] += gcols[:, t, u]
                gx = fold_pad(gxp, ph, pw, wd, self.circular)
        self._cache = None
        return gx, gw, gb


class LeakyReLU:
    def __init__(self, slope: float):
        self.slope = slope

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._pos = x > 0
        return np.where(self._pos, x, self.slope * x)

    def backward(self, g: np.ndarray) -> np.ndarray:
        return np.where(self._pos, g, self.slope * g)


class Sigmoid:
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._y = sigmoid(x)
        return self._y

    def backward(self, g: np.ndarray) -> np.ndarray:
        return g * self._y * (1 - self._y)


def sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1 / (1 + e), e / (1 + e))


def upsample2(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbour x2 upsampling of both spatial axes."""
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample2_backward(g: np.ndarray) -> np.ndarray:
    c, b, h, w = g.shape
    return g.reshape(c, b, h // 2, 2, w // 2, 2).sum(axis=(3, 5))
