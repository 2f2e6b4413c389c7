"""Attention-gated audio-visual fusion MLP and its trainers.

Forward pass for one sample (batched row-wise)::

    H_m   = relu(W_music X_m + b_music)        H_v   = relu(W_video X_a + b_video)
    Att_m = relu(W_attn_m H_m + b_attn_m)      Att_v = relu(W_attn_v H_v + b_attn_v)
    X_am  = W_out [Att_v * H_v, Att_m * H_m] + b_out
    epp   = clamp01(W_head X_am + b_head)

Training is end-to-end through the visual stack; the auditory encoder is a
fixed simulator and only supplies ``X_m``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import numkernel as nk
from . import visual_cortex as vc

log = logging.getLogger(__name__)

Params = dict[str, np.ndarray]

LAYERS = ("music", "video", "attn_music", "attn_video", "out", "head")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class FusionConfig:
    music_dim: int = 3
    video_dim: int = 8
    hidden: int = 8
    fused: int = 8
    head_bias: float = 0.5
    hidden_bias: float = 0.1
    gate_bias: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 1e-4
    dropout: float = 0.1
    log_interval: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.log_interval < 1:
            raise ValueError("epochs, batch_size and log_interval must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


def init(config: FusionConfig = FusionConfig()) -> Params:
    h, f = config.hidden, config.fused
    shapes = {
        "music": (h, config.music_dim),
        "video": (h, config.video_dim),
        "attn_music": (h, h),
        "attn_video": (h, h),
        "out": (f, 2 * h),
        "head": (1, f),
    }
    params: Params = {}
    for name, shape in shapes.items():
        params[f"{name}.w"] = nk.xavier_uniform_init(shape, nk.derive_seed(config.seed, name))
        params[f"{name}.b"] = np.zeros(shape[0])
    # start the clamped head inside its active range, ReLUs alive and gates open
    params["head.b"][:] = config.head_bias
    for name in ("music", "video"):
        params[f"{name}.b"][:] = config.hidden_bias
    for name in ("attn_music", "attn_video"):
        params[f"{name}.b"][:] = config.gate_bias
    return params


def _dropout_masks(shape, p, seed):
    rng = nk.make_rng(seed)
    keep = 1.0 - p
    return [(rng.random(shape) < keep) / keep for _ in range(2)]


def forward(x_a, x_m, params: Params, mode: str = "infer", dropout: float = 0.0, seed=0,
            return_cache: bool = False):
    """Return ``(X_am, epp_pred)`` for a sample or an (n, .) batch."""
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    single = np.ndim(x_a) == 1
    x_a, x_m = np.atleast_2d(x_a), np.atleast_2d(x_m)
    if x_a.shape[0] != x_m.shape[0]:
        raise nk.ShapeError(f"batch sizes differ: {x_a.shape[0]} vs {x_m.shape[0]}")
    pre_m = nk.linear(x_m, params["music.w"], params["music.b"])
    pre_v = nk.linear(x_a, params["video.w"], params["video.b"])
    h_m, h_v = nk.relu(pre_m), nk.relu(pre_v)
    masks = None
    if mode == "train" and dropout > 0.0:
        masks = _dropout_masks(h_m.shape, dropout, seed)
        h_m, h_v = h_m * masks[0], h_v * masks[1]
    pre_am = nk.linear(h_m, params["attn_music.w"], params["attn_music.b"])
    pre_av = nk.linear(h_v, params["attn_video.w"], params["attn_video.b"])
    att_m, att_v = nk.relu(pre_am), nk.relu(pre_av)
    cat = np.concatenate([att_v * h_v, att_m * h_m], axis=1)
    x_am = nk.linear(cat, params["out.w"], params["out.b"])
    raw = nk.linear(x_am, params["head.w"], params["head.b"])[:, 0]
    pred = np.clip(raw, 0.0, 1.0)
    nk.check_finite(pred, "fusion output")
    if return_cache:
        cache = dict(x_a=x_a, x_m=x_m, pre_m=pre_m, pre_v=pre_v, masks=masks, h_m=h_m, h_v=h_v,
                     pre_am=pre_am, pre_av=pre_av, att_m=att_m, att_v=att_v, cat=cat,
                     x_am=x_am, raw=raw)
        return x_am, pred, cache
    if single:
        return x_am[0], float(pred[0])
    return x_am, pred


def backward(cache, params: Params, d_pred, d_xam=None):
    """Gradients of all fusion parameters plus d/dX_a and d/dX_m.

    The clamp passes gradient only where the raw head output lies in [0, 1].
    """
    g: Params = {}
    d_raw = np.asarray(d_pred, dtype=np.float64) * ((cache["raw"] >= 0.0) & (cache["raw"] <= 1.0))
    d_x_am, g["head.w"], g["head.b"] = nk.linear_backward(d_raw[:, None], cache["x_am"], params["head.w"])
    if d_xam is not None:
        d_x_am = d_x_am + d_xam
    d_cat, g["out.w"], g["out.b"] = nk.linear_backward(d_x_am, cache["cat"], params["out.w"])
    h = cache["h_v"].shape[1]
    d_gated_v, d_gated_m = d_cat[:, :h], d_cat[:, h:]
    d_att_v, d_h_v = d_gated_v * cache["h_v"], d_gated_v * cache["att_v"]
    d_att_m, d_h_m = d_gated_m * cache["h_m"], d_gated_m * cache["att_m"]
    d_h, g["attn_video.w"], g["attn_video.b"] = nk.linear_backward(
        nk.relu_backward(d_att_v, cache["pre_av"]), cache["h_v"], params["attn_video.w"])
    d_h_v = d_h_v + d_h
    d_h, g["attn_music.w"], g["attn_music.b"] = nk.linear_backward(
        nk.relu_backward(d_att_m, cache["pre_am"]), cache["h_m"], params["attn_music.w"])
    d_h_m = d_h_m + d_h
    if cache["masks"] is not None:
        d_h_m, d_h_v = d_h_m * cache["masks"][0], d_h_v * cache["masks"][1]
    d_xm, g["music.w"], g["music.b"] = nk.linear_backward(
        nk.relu_backward(d_h_m, cache["pre_m"]), cache["x_m"], params["music.w"])
    d_xa, g["video.w"], g["video.b"] = nk.linear_backward(
        nk.relu_backward(d_h_v, cache["pre_v"]), cache["x_a"], params["video.w"])
    return g, d_xa, d_xm


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

class Adam:
    """Adam over a dict of named parameter arrays."""

    def __init__(self, params: Params, lr=1e-3, weight_decay=1e-4):
        self.states = {
            k: nk.AdamState.zeros_like(v, lr=lr, weight_decay=weight_decay)
            for k, v in params.items()
        }

    def step(self, params: Params, grads: Params) -> Params:
        out = dict(params)
        for k, grad in grads.items():
            out[k], self.states[k] = nk.adam_step(params[k], grad, self.states[k])
        return out


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def _loop(n, config: TrainConfig, step, evaluate):
    """Shared mini-batch loop. ``step(idx, seed)`` returns the batch loss."""
    rng = nk.make_rng(nk.derive_seed(config.seed, "shuffle"))
    initial = evaluate()
    history = []
    for epoch in range(1, config.epochs + 1):
        for b, idx in enumerate(_batches(n, config.batch_size, rng)):
            loss = step(idx, nk.derive_seed(config.seed, "dropout", epoch, b))
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
        if epoch % config.log_interval == 0:
            mse = evaluate()
            history.append((epoch, mse))
            log.debug("epoch %d  mse %.6f", epoch, mse)
    return initial, history


@dataclass
class TrainResult:
    visual: Params
    fusion: Params
    history: list[tuple[int, float]]
    initial_mse: float


def fit(features_a, x_m, targets, visual: Params, fusion: Params,
        config: TrainConfig = TrainConfig(), visual_config: vc.VisualConfig = vc.VisualConfig()
        ) -> TrainResult:
    """Train visual stack + fusion on arrays: (n, 5) animation features,
    (n, 3) auditory rates and (n,) EPP targets."""
    targets = np.asarray(targets, dtype=np.float64)
    x_m = np.atleast_2d(np.asarray(x_m, dtype=np.float64))
    if len(targets) == 0:
        raise TrainingError("empty training set")
    feats = np.atleast_2d(np.asarray(features_a, dtype=np.float64))
    vc.lift_features(feats, 1)  # range check
    state = {"visual": dict(visual), "fusion": dict(fusion)}
    opt_v = Adam(visual, config.lr, config.weight_decay)
    opt_f = Adam(fusion, config.lr, config.weight_decay)

    def step(idx, seed):
        xa, vcache = vc.forward(None, state["visual"], visual_config, return_cache=True,
                                features=feats[idx])
        _, pred, cache = forward(xa, x_m[idx], state["fusion"], "train", config.dropout, seed,
                                 return_cache=True)
        loss = nk.mse_loss(pred, targets[idx])
        gf, d_xa, _ = backward(cache, state["fusion"], nk.mse_grad(pred, targets[idx]))
        gv = vc.backward(d_xa, vcache, state["visual"], visual_config)
        state["fusion"] = opt_f.step(state["fusion"], gf)
        state["visual"] = opt_v.step(state["visual"], gv)
        return loss

    def evaluate():
        xa = vc.forward(None, state["visual"], visual_config, features=feats)
        _, pred = forward(xa, x_m, state["fusion"])
        return nk.mse_loss(np.atleast_1d(pred), targets)

    initial, history = _loop(len(targets), config, step, evaluate)
    return TrainResult(state["visual"], state["fusion"], history, initial)


def train(pairs, visual: Params, fusion: Params, config: TrainConfig = TrainConfig(),
          visual_config: vc.VisualConfig = vc.VisualConfig(), x_m=None, auditory_config=None,
          audio_seed: int = 0) -> TrainResult:
    """Train on a ``PairedDataset``; ``x_m`` is simulated when not supplied."""
    from . import auditory_cortex as ac

    if len(pairs) == 0:
        raise TrainingError("empty training set")
    fa = np.array([p.animation.features for p in pairs.pairs])
    if x_m is None:
        fm = np.array([p.music.features for p in pairs.pairs])
        seeds = [nk.derive_seed(audio_seed, p.music.id) for p in pairs.pairs]
        x_m = ac.encode(fm, auditory_config or ac.AuditoryConfig(), seeds)
    targets = np.array([p.epp_target for p in pairs.pairs])
    return fit(fa, x_m, targets, visual, fusion, config, visual_config)


def readout_forward(x_a, head: Params, return_raw=False):
    raw = nk.linear(np.atleast_2d(x_a), head["w"], head["b"])[:, 0]
    pred = np.clip(raw, 0.0, 1.0)
    return (pred, raw) if return_raw else pred


def pretrain_visual(features_a, targets, visual: Params, config: TrainConfig = TrainConfig(),
                    visual_config: vc.VisualConfig = vc.VisualConfig(), head_bias: float = 0.5):
    """Fit the visual stack alone through a clamped linear EPP readout.

    Used when the visual cortex feeds the emotion learner without fusion.
    Returns ``(visual_params, head_params, history, initial_mse)``.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if len(targets) == 0:
        raise TrainingError("empty training set")
    feats = np.atleast_2d(np.asarray(features_a, dtype=np.float64))
    vc.lift_features(feats, 1)  # range check
    head = {
        "w": nk.xavier_uniform_init((1, visual_config.out_dim), nk.derive_seed(config.seed, "head")),
        "b": np.full(1, head_bias),
    }
    state = {"visual": dict(visual), "head": head}
    opt_v = Adam(visual, config.lr, config.weight_decay)
    opt_h = Adam(head, config.lr, config.weight_decay)

    def step(idx, seed):
        xa, vcache = vc.forward(None, state["visual"], visual_config, return_cache=True,
                                features=feats[idx])
        pred, raw = readout_forward(xa, state["head"], return_raw=True)
        loss = nk.mse_loss(pred, targets[idx])
        d_raw = nk.mse_grad(pred, targets[idx]) * ((raw >= 0.0) & (raw <= 1.0))
        d_xa, gw, gb = nk.linear_backward(d_raw[:, None], xa, state["head"]["w"])
        gv = vc.backward(d_xa, vcache, state["visual"], visual_config)
        state["head"] = opt_h.step(state["head"], {"w": gw, "b": gb})
        state["visual"] = opt_v.step(state["visual"], gv)
        return loss

    def evaluate():
        xa = vc.forward(None, state["visual"], visual_config, features=feats)
        return nk.mse_loss(readout_forward(xa, state["head"]), targets)

    initial, history = _loop(len(targets), config, step, evaluate)
    return state["visual"], state["head"], history, initial
