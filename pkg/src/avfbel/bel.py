"""Brain emotional learning head: amygdala (V) and orbitofrontal (U) nodes.

Fused feature windows are folded into a context vector by a frozen
echo-state contextualizer. The amygdala sees the context plus one thalamic
noise channel and only ever learns upward (negative-feedback halt once its
output reaches the reward). The orbitofrontal nodes learn to inhibit the
overshoot.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

from .numkernel import ShapeError, derive_seed, make_rng

OFC_RULES = ("error", "printed")


class DivergenceError(RuntimeError):
    """Raised when BEL weights grow past the divergence guard."""


@dataclass(frozen=True)
class BelConfig:
    """Learning rates, stopping rule and noise settings of the BEL head.

    ``ofc_rule`` selects the orbitofrontal update. ``"error"`` drives U by
    the output error ``E - Re``. ``"printed"`` uses ``sum_j(O_j - Re)``,
    which feeds back positively through O and diverges on real data; it is
    kept for reference and unit checks.

    ``predict_thalamus`` chooses the thalamic input at inference: ``"mean"``
    feeds its expected value ``amplitude / 2``, ``"random"`` fresh draws.

    ``attain_tol`` is the dead band of the amygdala halt: V stops learning
    on a sample once ``Re - sum(A) <= attain_tol``.
    """

    alpha: float = 0.2
    beta: float = 0.2
    epochs: int = 200
    tol: float = 1e-4
    thalamic_amplitude: float = 1.0
    gamma: float = 1.0
    window: int = 4
    spectral_radius: float = 0.5
    input_scale: float = 1.0
    attain_tol: float = 1e-3
    ofc_rule: str = "error"
    freeze_ofc: bool = False
    predict_thalamus: str = "mean"
    divergence_limit: float = 1e6
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.window < 1 or self.epochs < 1:
            raise ValueError("window and epochs must be at least 1")
        if self.predict_thalamus not in ("mean", "random"):
            raise ValueError("predict_thalamus must be 'mean' or 'random'")
        if self.ofc_rule not in OFC_RULES:
            raise ValueError(f"ofc_rule must be one of {OFC_RULES}")
        if self.thalamic_amplitude < 0 or self.attain_tol < 0:
            raise ValueError("thalamic_amplitude and attain_tol must be non-negative")


@dataclass
class BelWeights:
    V: np.ndarray  # d + 1, last entry is the thalamic weight
    U: np.ndarray  # d
    gamma: float = 1.0
    R: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @property
    def dim(self) -> int:
        return self.U.shape[0]

    def copy(self) -> "BelWeights":
        return BelWeights(self.V.copy(), self.U.copy(), self.gamma, self.R.copy())


@dataclass
class TrainTrace:
    sum_a: list[float] = field(default_factory=list)
    sum_o: list[float] = field(default_factory=list)
    e: list[float] = field(default_factory=list)
    mean_abs_dv: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def epochs(self) -> int:
        return len(self.e)


def build_windows(sequence, w: int) -> np.ndarray:
    """Overlapping stride-1 windows: (len - w + 1, w, d)."""
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim == 1:
        seq = seq[:, None]
    if w < 1:
        raise ValueError("window length must be at least 1")
    if seq.shape[0] < w:
        raise ValueError(f"sequence of length {seq.shape[0]} shorter than window {w}")
    return np.lib.stride_tricks.sliding_window_view(seq, w, axis=0).transpose(0, 2, 1).copy()


def padded_windows(sequence, w: int) -> np.ndarray:
    """One window per item, ending at that item; the head is zero-padded."""
    seq = np.atleast_2d(np.asarray(sequence, dtype=np.float64))
    pad = np.zeros((w - 1, seq.shape[1]))
    return build_windows(np.concatenate([pad, seq]), w)


def init_reservoir(d: int, seed: int, spectral_radius: float = 0.5, input_scale: float = 1.0,
                   k: int | None = None) -> np.ndarray:
    """Frozen echo-state matrix R of shape (k, d + k)."""
    k = d if k is None else k
    if k < d:
        raise ShapeError("context dim k must be at least d")
    rng = make_rng(seed)
    w_in = rng.uniform(-1.0, 1.0, (k, d)) * input_scale / np.sqrt(d)
    w_rec = rng.uniform(-1.0, 1.0, (k, k))
    radius = np.max(np.abs(np.linalg.eigvals(w_rec)))
    w_rec *= spectral_radius / radius if radius > 0 else 0.0
    return np.hstack([w_in, w_rec])


def contextualize(window, R) -> np.ndarray:
    """Run ``h = tanh(R [x_t; h])`` over a (w, d) window (or a batch of them)
    and return the first d entries of the final state."""
    win = np.asarray(window, dtype=np.float64)
    single = win.ndim == 2
    if single:
        win = win[None]
    n, w, d = win.shape
    k = R.shape[0]
    if R.shape[1] != d + k or k < d:
        raise ShapeError(f"R of shape {R.shape} does not fit windows of dim {d}")
    h = np.zeros((n, k))
    for t in range(w):
        h = np.tanh(np.concatenate([win[:, t], h], axis=1) @ R.T)
    return h[0, :d] if single else h[:, :d]


def thalamic_signal(rng, amplitude: float = 1.0) -> float:
    return amplitude * rng.uniform(0.0, 1.0)


def forward(x, th: float, weights: BelWeights):
    """Node outputs ``(A, O, E)`` for context ``x`` and thalamic value ``th``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != weights.U.shape or weights.V.shape != (x.shape[0] + 1,):
        raise ShapeError(f"context {x.shape} does not match V {weights.V.shape}, U {weights.U.shape}")
    xa = np.append(x, th)
    a = xa * weights.V
    o = x * weights.U * weights.gamma
    return a, o, float(a.sum() - o.sum())


def update(xa, x, a, o, re: float, config: BelConfig):
    """Weight changes ``(dV, dU)`` for one presentation with reward ``re``."""
    if not 0.0 <= re <= 1.0:
        raise ValueError(f"reward {re} outside [0, 1]")
    shortfall = re - float(np.sum(a))
    dv = config.alpha * np.asarray(xa) * shortfall if shortfall > config.attain_tol else np.zeros(len(xa))
    if config.freeze_ofc:
        du = np.zeros(len(x))
    elif config.ofc_rule == "printed":
        du = config.beta * np.asarray(x) * float(np.sum(np.asarray(o) - re))
    else:
        e = float(np.sum(a) - np.sum(o))
        du = config.beta * np.asarray(x) * (e - re)
    return dv, du


def init_weights(d: int, config: BelConfig) -> BelWeights:
    R = init_reservoir(d, derive_seed(config.seed, "reservoir"), config.spectral_radius,
                       config.input_scale)
    return BelWeights(np.zeros(d + 1), np.zeros(d), config.gamma, R)


def train(contexts, targets, config: BelConfig = BelConfig(), weights: BelWeights | None = None):
    """Present each (context, reward) pair in order, epoch after epoch.

    Stops when the epoch's mean |dV| falls below ``config.tol`` or after
    ``config.epochs`` epochs. Returns ``(weights, trace)``.
    """
    xs = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
    res = np.asarray(targets, dtype=np.float64)
    if xs.shape[0] == 0:
        raise ValueError("no training samples")
    if res.shape != (xs.shape[0],):
        raise ShapeError(f"{xs.shape[0]} contexts but targets of shape {res.shape}")
    if np.any(res < 0) or np.any(res > 1):
        raise ValueError("rewards must lie in [0, 1]")
    w = init_weights(xs.shape[1], config) if weights is None else weights.copy()
    rng = make_rng(derive_seed(config.seed, "thalamus", "train"))
    trace = TrainTrace()
    d = xs.shape[1]
    v_x, v_th, u = w.V[:-1], w.V[-1:], w.U  # views, updated in place
    for epoch in range(config.epochs):
        ths = config.thalamic_amplitude * rng.uniform(0.0, 1.0, len(res))
        sa = so = dv_sum = 0.0
        for x, th, re in zip(xs, ths, res):
            # same arithmetic as forward() + update(), inlined for speed
            a_sum = float(x @ v_x) + th * float(v_th[0])
            o_sum = w.gamma * float(x @ u)
            shortfall = re - a_sum
            if shortfall > config.attain_tol:
                step = config.alpha * shortfall
                v_x += step * x
                v_th += step * th
                dv_sum += step * (np.abs(x).sum() + th) / (d + 1)
            if not config.freeze_ofc:
                err = o_sum - d * re if config.ofc_rule == "printed" else a_sum - o_sum - re
                u += config.beta * err * x
            sa, so = sa + a_sum, so + o_sum
        se = sa - so
        n = len(res)
        if not (np.all(np.isfinite(w.V)) and np.all(np.isfinite(w.U))) or \
                max(np.abs(w.V).max(), np.abs(w.U).max()) > config.divergence_limit:
            raise DivergenceError(
                f"BEL weights diverged in epoch {epoch + 1}: max|V|={np.abs(w.V).max():.3g}, "
                f"max|U|={np.abs(w.U).max():.3g}; lower alpha/beta")
        trace.sum_a.append(sa / n)
        trace.sum_o.append(so / n)
        trace.e.append(se / n)
        trace.mean_abs_dv.append(dv_sum / n)
        if dv_sum / n < config.tol:
            trace.converged = True
            break
    return w, trace


def predict(contexts, weights: BelWeights, config: BelConfig = BelConfig()) -> np.ndarray:
    """Raw output E for each context."""
    xs = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
    if config.predict_thalamus == "mean":
        th = np.full(xs.shape[0], 0.5 * config.thalamic_amplitude)
    else:
        rng = make_rng(derive_seed(config.seed, "thalamus", "predict"))
        th = config.thalamic_amplitude * rng.uniform(0.0, 1.0, xs.shape[0])
    return xs @ weights.V[:-1] + th * weights.V[-1] - weights.gamma * xs @ weights.U


def fit(sequence, targets, config: BelConfig = BelConfig()):
    """Window, contextualize and train on a feature sequence (n, d)."""
    seq = np.atleast_2d(np.asarray(sequence, dtype=np.float64))
    weights = init_weights(seq.shape[1], config)
    ctx = contextualize(padded_windows(seq, config.window), weights.R)
    return train(ctx, targets, config, weights)


def infer(sequence, weights: BelWeights, config: BelConfig = BelConfig()) -> np.ndarray:
    seq = np.atleast_2d(np.asarray(sequence, dtype=np.float64))
    return predict(contextualize(padded_windows(seq, config.window), weights.R), weights, config)


def normalize_output(e, re_min: float, re_max: float) -> np.ndarray:
    """Min-max scale raw outputs by the reward range, clamped to [0, 1]."""
    if re_max < re_min:
        raise ValueError("re_max must be >= re_min")
    e = np.asarray(e, dtype=np.float64)
    if re_max == re_min:
        return np.full(e.shape, 0.5)
    return np.clip((e - re_min) / (re_max - re_min), 0.0, 1.0)


def heatmap_csv(weights: BelWeights) -> str:
    buf = io.StringIO()
    buf.write("matrix,row,col,value\n")
    for name, mat in (("V", weights.V[None]), ("U", weights.U[None]),
                      ("gamma", np.array([[weights.gamma]])), ("R", weights.R)):
        for (r, c), v in np.ndenumerate(mat):
            buf.write(f"{name},{r},{c},{float(v)!r}\n")
    return buf.getvalue()


def with_seed(config: BelConfig, seed: int) -> BelConfig:
    return replace(config, seed=seed)
