"""Dense numeric kernel shared by every model stage.

Tensors are plain ``numpy.ndarray`` objects in float64. Rank-4 tensors use
(batch, channel, height, width) order. Every differentiable operation comes
with an explicit ``*_backward`` companion; there is no autodiff graph.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Tensor dimensions do not agree with an operation's contract."""


class NumericDomainError(ValueError):
    """A value is NaN/Inf or otherwise outside the numeric domain."""


# --------------------------------------------------------------------------
# validation / rng
# --------------------------------------------------------------------------

def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericDomainError(f"{what} contains non-finite values")
    return x


def as_tensor(x, rank: int | None = None, what: str = "tensor") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if rank is not None and arr.ndim != rank:
        raise ShapeError(f"{what}: expected rank {rank}, got shape {arr.shape}")
    if arr.ndim < 1 or arr.ndim > 4:
        raise ShapeError(f"{what}: rank must be 1-4, got {arr.ndim}")
    return check_finite(arr, what)


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator. Passing a Generator returns it as is."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(master: int, *names: str | int) -> int:
    """Derive an independent 63-bit seed from a master seed and a label path."""
    words = [int(master) & 0xFFFFFFFF, (int(master) >> 32) & 0xFFFFFFFF]
    for name in names:
        words.append(zlib.crc32(str(name).encode("utf-8")))
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


# --------------------------------------------------------------------------
# convolution
# --------------------------------------------------------------------------

def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def _conv_windows(x, kh, kw, stride, padding):
    if padding:
        n, c, h, w = x.shape
        padded = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
        padded[:, :, padding:padding + h, padding:padding + w] = x
        x = padded
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def im2col(x, kh: int, kw: int, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Contiguous patch matrix of shape (n, oh, ow, c * kh * kw)."""
    win = _conv_windows(x, kh, kw, stride, padding)  # n, c, oh, ow, kh, kw
    n, c, oh, ow = win.shape[:4]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n, oh, ow, c * kh * kw)


def _check_conv(x, kernels, bias, stride, padding):
    n, c, h, w = x.shape
    o, ci, kh, kw = kernels.shape
    if stride < 1 or padding < 0:
        raise ShapeError(f"stride must be >= 1 and padding >= 0, got {stride}, {padding}")
    if ci != c:
        raise ShapeError(f"input has {c} channels but kernels expect {ci}")
    if bias.shape[0] != o:
        raise ShapeError(f"bias length {bias.shape[0]} != out-channels {o}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(
            f"kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}"
        )


def conv2d(x, kernels, bias, stride: int = 1, padding: int | None = None, cols=None) -> np.ndarray:
    """Cross-correlation of a rank-4 input with (out, in, kh, kw) kernels.

    ``padding=None`` selects ``kh // 2``. ``cols`` may carry a precomputed
    ``im2col(x, ...)`` to skip patch extraction.
    """
    x = as_tensor(x, 4, "conv input")
    kernels = as_tensor(kernels, 4, "conv kernels")
    bias = as_tensor(bias, 1, "conv bias")
    o, _, kh, kw = kernels.shape
    if padding is None:
        padding = kh // 2
    _check_conv(x, kernels, bias, stride, padding)
    if cols is None:
        cols = im2col(x, kh, kw, stride, padding)
    out = cols @ kernels.reshape(o, -1).T + bias  # n, oh, ow, o
    return out.transpose(0, 3, 1, 2)


def conv2d_backward(dout, x, kernels, stride: int = 1, padding: int | None = None,
                    cols=None, need_input_grad: bool = True):
    """Gradients of ``conv2d`` w.r.t. (input, kernels, bias).

    The input gradient is ``None`` when ``need_input_grad`` is false.
    """
    o, c, kh, kw = kernels.shape
    if padding is None:
        padding = kh // 2
    n, _, h, w = x.shape
    _, _, oh, ow = dout.shape
    if cols is None:
        cols = im2col(x, kh, kw, stride, padding)
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, o)
    db = d2.sum(axis=0)
    dk = (d2.T @ cols.reshape(-1, c * kh * kw)).reshape(kernels.shape)
    if not need_input_grad:
        return None, dk, db
    if stride == 1 and kh == kw and padding <= kh - 1:
        # stride-1 input gradient is a full correlation with the flipped kernels
        flipped = kernels[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        dx = conv2d(dout, flipped, np.zeros(c), 1, kh - 1 - padding)
        return dx[:, :, :h, :w], dk, db
    dcols = (d2 @ kernels.reshape(o, -1)).reshape(n, oh, ow, c, kh, kw)
    dxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += (
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    dx = dxp[:, :, padding:padding + h, padding:padding + w]
    return dx, dk, db


def conv2d_relu(x, kernels, bias, stride: int = 1, padding: int | None = None) -> np.ndarray:
    return relu(conv2d(x, kernels, bias, stride, padding))


def conv2d_relu_backward(dout, x, kernels, bias, stride: int = 1, padding: int | None = None):
    pre = conv2d(x, kernels, bias, stride, padding)
    return conv2d_backward(relu_backward(dout, pre), x, kernels, stride, padding)


# --------------------------------------------------------------------------
# pooling
# --------------------------------------------------------------------------

def _block_argmax(x, window):
    """Max and first-max offset of non-overlapping window x window blocks."""
    oh, ow = x.shape[2] // window, x.shape[3] // window
    best = x[:, :, 0:oh * window:window, 0:ow * window:window]
    arg = np.zeros(best.shape, dtype=np.int64)
    for idx in range(1, window * window):
        i, j = divmod(idx, window)
        cand = x[:, :, i:oh * window:window, j:ow * window:window]
        better = cand > best
        best = np.where(better, cand, best)
        arg[better] = idx
    return best, arg


def maxpool2d(x, window: int, stride: int | None = None) -> np.ndarray:
    x = as_tensor(x, 4, "maxpool input")
    stride = window if stride is None else stride
    if window < 1 or stride < 1:
        raise ShapeError("window and stride must be positive")
    if window > x.shape[2] or window > x.shape[3]:
        raise ShapeError(f"pool window {window} larger than input {x.shape[2]}x{x.shape[3]}")
    if stride == window:
        return _block_argmax(x, window)[0]
    win = sliding_window_view(x, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    return win.max(axis=(4, 5))


def maxpool2d_backward(dout, x, window: int, stride: int | None = None) -> np.ndarray:
    """Route each output gradient to the first maximal element of its window."""
    stride = window if stride is None else stride
    if stride == window:
        _, arg = _block_argmax(x, window)
        dx = np.zeros_like(x)
        oh, ow = arg.shape[2:]
        for idx in range(window * window):
            i, j = divmod(idx, window)
            dx[:, :, i:oh * window:window, j:ow * window:window] = dout * (arg == idx)
        return dx
    win = sliding_window_view(x, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, oh, ow = win.shape[:4]
    arg = win.reshape(n, c, oh, ow, window * window).argmax(axis=-1)
    dx = np.zeros_like(x)
    for idx in range(window * window):
        i, j = divmod(idx, window)
        dx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += dout * (arg == idx)
    return dx


def adaptive_avg_pool_1x1(x) -> np.ndarray:
    x = as_tensor(x, 4, "avgpool input")
    return x.mean(axis=(2, 3), keepdims=True)


def adaptive_avg_pool_1x1_backward(dout, x) -> np.ndarray:
    h, w = x.shape[2], x.shape[3]
    return np.broadcast_to(dout / (h * w), x.shape).copy()


# --------------------------------------------------------------------------
# dense layers, activations, loss
# --------------------------------------------------------------------------

def linear(x, weight, bias) -> np.ndarray:
    """``weight @ x + bias`` for a vector, or row-wise for an (n, d_in) batch."""
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weight.ndim != 2 or bias.ndim != 1:
        raise ShapeError(f"weight must be 2-D and bias 1-D, got {weight.shape}, {bias.shape}")
    if x.shape[-1] != weight.shape[1] or bias.shape[0] != weight.shape[0]:
        raise ShapeError(
            f"linear: input {x.shape} / weight {weight.shape} / bias {bias.shape} disagree"
        )
    check_finite(x, "linear input")
    return x @ weight.T + bias


def linear_backward(dout, x, weight):
    """Gradients of ``linear`` w.r.t. (input, weight, bias)."""
    dout = np.asarray(dout, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    dx = dout @ weight
    if x.ndim == 1:
        return dx, np.outer(dout, x), dout.copy()
    return dx, dout.T @ x, dout.sum(axis=0)


def relu(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(dout, pre) -> np.ndarray:
    return dout * (pre > 0)


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: shapes {pred.shape} and {target.shape} differ")
    if pred.size == 0:
        raise ShapeError("mse_loss: empty input")
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred, target) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    return 2.0 * (pred - target) / pred.size


# --------------------------------------------------------------------------
# optimisation / init
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AdamState:
    """Moments and hyper-parameters for one parameter tensor.

    Weight decay is decoupled (applied directly to the parameter, scaled by
    the learning rate) rather than folded into the gradient.
    """

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4

    @classmethod
    def zeros_like(cls, param, **hyper) -> "AdamState":
        param = np.asarray(param)
        return cls(np.zeros(param.shape), np.zeros(param.shape), **hyper)


def adam_step(param, grad, state: AdamState) -> tuple[np.ndarray, AdamState]:
    param = np.asarray(param, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise ShapeError(
            f"adam_step: param {param.shape}, grad {grad.shape}, state {state.m.shape}"
        )
    check_finite(grad, "gradient")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new = param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if state.weight_decay:
        new = new - state.lr * state.weight_decay * param
    return new, replace(state, m=m, v=v, step=t)


def xavier_bound(shape) -> float:
    shape = tuple(shape)
    if len(shape) < 2:
        raise ShapeError(f"Xavier init needs rank >= 2, got shape {shape}")
    receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
    fan_out, fan_in = shape[0] * receptive, shape[1] * receptive
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def xavier_uniform_init(shape, seed) -> np.ndarray:
    bound = xavier_bound(shape)
    return make_rng(seed).uniform(-bound, bound, size=tuple(shape))


# --------------------------------------------------------------------------
# test oracle
# --------------------------------------------------------------------------

def finite_diff_grad(f: Callable[[np.ndarray], float], param, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one element at a time."""
    p = np.array(param, dtype=np.float64)
    grad = np.zeros_like(p)
    flat, gflat = p.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(p))
        flat[i] = orig - h
        fm = float(f(p))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericDomainError(f"f is non-finite near element {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad
