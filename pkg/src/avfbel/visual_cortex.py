"""Four-area convolutional encoder (V1, V2, V4, IT) for the visual features.

The five animation parameters are broadcast into constant planes, run
through conv + ReLU + max-pool areas, averaged to 1x1 per channel and
decoded linearly into the visual feature vector ``X_a``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkernel as nk

AREAS = ("v1", "v2", "v4", "it")

Params = dict[str, np.ndarray]


@dataclass(frozen=True)
class VisualConfig:
    plane_size: int = 16
    channels: tuple[int, ...] = (5, 16, 32, 32, 16)
    kernels: tuple[int, ...] = (7, 3, 3, 3)
    strides: tuple[int, ...] = (2, 1, 1, 1)
    pool: int = 2
    out_dim: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.channels[0] != 5:
            raise ValueError("first area must take the 5 feature channels")
        if not len(self.channels) - 1 == len(self.kernels) == len(self.strides) == len(AREAS):
            raise ValueError("channel/kernel/stride plans must describe four areas")


def lift_features(features, plane_size: int = 16) -> np.ndarray:
    """Broadcast 5 features (or an (n, 5) batch) to constant planes (n, 5, s, s)."""
    f = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if f.shape[1] != 5:
        raise nk.ShapeError(f"expected 5 features, got {f.shape[1]}")
    if np.any(f < 0.0) or np.any(f > 1.0) or not np.all(np.isfinite(f)):
        raise ValueError("visual features must lie in [0, 1]")
    return np.broadcast_to(f[:, :, None, None], (f.shape[0], 5, plane_size, plane_size)).copy()


def init(config: VisualConfig = VisualConfig()) -> Params:
    params: Params = {}
    for i, area in enumerate(AREAS):
        shape = (config.channels[i + 1], config.channels[i], config.kernels[i], config.kernels[i])
        params[f"{area}.w"] = nk.xavier_uniform_init(shape, nk.derive_seed(config.seed, area))
        params[f"{area}.b"] = np.zeros(shape[0])
    dec = (config.out_dim, config.channels[-1])
    params["decoder.w"] = nk.xavier_uniform_init(dec, nk.derive_seed(config.seed, "decoder"))
    params["decoder.b"] = np.zeros(config.out_dim)
    return params


def _pool_window(config, h, w):
    # areas whose map is already smaller than the pool window keep their size
    return min(config.pool, h, w)


def _ones_cols(config: VisualConfig):
    k = config.kernels[0]
    ones = np.ones((1, 1, config.plane_size, config.plane_size))
    return nk.im2col(ones, k, k, config.strides[0], k // 2)[0]  # oh, ow, k*k


def _v1_from_features(f, w, b, config):
    # constant planes: each V1 patch is feature value x (in-bounds mask)
    o, c = w.shape[:2]
    mask = _ones_cols(config)
    resp = np.tensordot(w.reshape(o, c, -1), mask, axes=([2], [2]))  # o, c, oh, ow
    return np.tensordot(f, resp, axes=([1], [1])) + b[None, :, None, None]


def forward(x, params: Params, config: VisualConfig = VisualConfig(), return_cache=False,
            features=None):
    """Map lifted input (n, 5, s, s) to ``X_a`` of shape (n, out_dim).

    When ``features`` (n, 5) is given, ``x`` is ignored and V1 is computed
    from the constant-plane factorisation instead of a dense convolution.
    """
    k, s = config.kernels[0], config.strides[0]
    if features is not None:
        f = np.atleast_2d(np.asarray(features, dtype=np.float64))
        pre = _v1_from_features(f, params["v1.w"], params["v1.b"], config)
        first = ("features", f)
    else:
        h = nk.as_tensor(x, 4, "visual input")
        pre = nk.conv2d(h, params["v1.w"], params["v1.b"], s, k // 2)
        first = ("dense", h)
    cache = []
    for i, area in enumerate(AREAS):
        if i > 0:
            k, s = config.kernels[i], config.strides[i]
            pre = nk.conv2d(h, params[f"{area}.w"], params[f"{area}.b"], s, k // 2)
        act = nk.relu(pre)
        win = _pool_window(config, act.shape[2], act.shape[3])
        out = act if win == 1 else nk.maxpool2d(act, win, win)
        cache.append((first[1] if i == 0 else h, pre, act, win))
        h = out
    pooled = nk.adaptive_avg_pool_1x1(h)
    flat = pooled.reshape(pooled.shape[0], -1)
    xa = nk.check_finite(nk.linear(flat, params["decoder.w"], params["decoder.b"]), "X_a")
    if return_cache:
        return xa, (cache, h, flat, first[0])
    return xa


def backward(d_xa, cache, params: Params, config: VisualConfig = VisualConfig(),
             need_input_grad=False):
    """Parameter gradients (and optionally the input gradient) for ``forward``."""
    areas, last, flat, first_kind = cache
    grads: Params = {}
    d_flat, grads["decoder.w"], grads["decoder.b"] = nk.linear_backward(
        d_xa, flat, params["decoder.w"])
    dh = nk.adaptive_avg_pool_1x1_backward(d_flat.reshape(d_flat.shape[0], -1, 1, 1), last)
    for i in reversed(range(len(AREAS))):
        area = AREAS[i]
        h_in, pre, act, win = areas[i]
        d_act = dh if win == 1 else nk.maxpool2d_backward(dh, act, win, win)
        d_pre = nk.relu_backward(d_act, pre)
        k, s = config.kernels[i], config.strides[i]
        w = params[f"{area}.w"]
        if i == 0 and first_kind == "features":
            mask = _ones_cols(config)
            acc = np.tensordot(h_in, d_pre, axes=([0], [0]))  # c, o, oh, ow
            dk = np.tensordot(acc, mask, axes=([2, 3], [0, 1]))  # c, o, k*k
            grads["v1.w"] = dk.transpose(1, 0, 2).reshape(w.shape)
            grads["v1.b"] = d_pre.sum(axis=(0, 2, 3))
            if need_input_grad:
                resp = np.tensordot(w.reshape(w.shape[0], w.shape[1], -1), mask, axes=([2], [2]))
                dh = np.tensordot(d_pre, resp, axes=([1, 2, 3], [0, 2, 3]))  # n, c
            continue
        dh, grads[f"{area}.w"], grads[f"{area}.b"] = nk.conv2d_backward(
            d_pre, h_in, w, s, k // 2, need_input_grad=i > 0 or need_input_grad)
    if need_input_grad:
        return grads, dh
    return grads


def encode(features, params: Params, config: VisualConfig = VisualConfig()) -> np.ndarray:
    """Visual features (n, 5) in [0, 1] -> ``X_a`` via the constant-plane path."""
    f = np.atleast_2d(np.asarray(features, dtype=np.float64))
    lift_features(f, 1)  # shape and range check
    return forward(None, params, config, features=f)
