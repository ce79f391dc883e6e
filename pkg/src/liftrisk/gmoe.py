"""Guided mixture of experts built from LSTM networks.

One gate network classifies the action at every future step; one expert per
action regresses the future motion.  All four recurrent networks read the same
(10, 74) window and start from a zero state.  Internally their LSTM weights
are stacked along a leading axis (index 0 is the gate, 1..3 the experts) so a
single batched matmul advances all of them.

Gate ordering inside a cell's 4h pre-activation vector is i, f, g, o.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    HORIZON,
    MOTION_COLUMNS,
    N_ACTIONS,
    N_FEATURES,
    N_MOTION,
    SPACING,
    DT,
    WINDOW_LEN,
    ActionLabel,
    InputWindow,
    MotionPrediction,
)

PARAM_NAMES = ("lstm_W", "lstm_b", "gate_W", "gate_b", "expert_W", "expert_b")


class NumericError(FloatingPointError):
    """A non-finite value showed up in a forward or backward pass."""


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(z, axis=-1):
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def recurrent_step(W, b, x, h, c):
    """One LSTM step.

    ``W`` has shape (n_in + hidden, 4 * hidden) with the input rows first,
    ``b`` shape (4 * hidden,).  ``x`` is (..., n_in), ``h`` and ``c`` are
    (..., hidden).  Returns ``(h_new, (h_new, c_new))``.
    """
    W = np.asarray(W, dtype=float)
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    c = np.asarray(c, dtype=float)
    hid = h.shape[-1]
    if W.shape != (x.shape[-1] + hid, 4 * hid) or np.shape(b) != (4 * hid,) or c.shape != h.shape:
        raise ValueError(
            f"dimension mismatch: W {W.shape}, b {np.shape(b)}, x {x.shape}, h {h.shape}, c {c.shape}")
    z = x @ W[:x.shape[-1]] + h @ W[x.shape[-1]:] + b
    i = sigmoid(z[..., :hid])
    f = sigmoid(z[..., hid:2 * hid])
    g = np.tanh(z[..., 2 * hid:3 * hid])
    o = sigmoid(z[..., 3 * hid:])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, (h_new, c_new)


class GmoeModel:
    """Gate LSTM + one expert LSTM per action, with frozen feature scaling.

    Parameters live in :attr:`params`; feature statistics in ``in_mean`` /
    ``in_scale`` (one entry per input feature).  Motion outputs are scaled
    with the statistics of the input columns listed in ``out_columns``.
    """

    FORMAT_VERSION = 1

    def __init__(self, hidden=64, n_in=N_FEATURES, n_out=N_MOTION, horizon=HORIZON,
                 n_actions=N_ACTIONS, window=WINDOW_LEN, out_columns=None, params=None,
                 in_mean=None, in_scale=None):
        self.hidden = int(hidden)
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        self.horizon = int(horizon)
        self.n_actions = int(n_actions)
        self.window = int(window)
        if out_columns is None:
            out_columns = MOTION_COLUMNS if (n_in, n_out) == (N_FEATURES, N_MOTION) else np.arange(n_out)
        self.out_columns = np.asarray(out_columns, dtype=int)
        if self.out_columns.shape != (self.n_out,):
            raise ValueError("out_columns must list one input column per output feature")
        self.in_mean = np.zeros(self.n_in) if in_mean is None else np.asarray(in_mean, dtype=float)
        self.in_scale = np.ones(self.n_in) if in_scale is None else np.asarray(in_scale, dtype=float)
        if self.in_mean.shape != (self.n_in,) or self.in_scale.shape != (self.n_in,):
            raise ValueError(f"normalization statistics must have {self.n_in} entries")
        self.params = params if params is not None else self.zero_params()
        self._check_shapes()

    # -- construction -------------------------------------------------------

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        h, k = self.hidden, 1 + self.n_actions
        return {
            "lstm_W": (k, self.n_in + h, 4 * h),
            "lstm_b": (k, 4 * h),
            "gate_W": (h, self.horizon * self.n_actions),
            "gate_b": (self.horizon * self.n_actions,),
            "expert_W": (self.n_actions, h, self.horizon * self.n_out),
            "expert_b": (self.n_actions, self.horizon * self.n_out),
        }

    def zero_params(self) -> dict[str, np.ndarray]:
        return {name: np.zeros(shape) for name, shape in self.param_shapes().items()}

    def _check_shapes(self):
        for name, shape in self.param_shapes().items():
            if name not in self.params:
                raise ValueError(f"missing parameter array {name}")
            arr = np.asarray(self.params[name], dtype=float)
            if arr.shape != shape:
                raise ValueError(f"parameter array {name} has shape {arr.shape}, expected {shape}")
            self.params[name] = arr

    @classmethod
    def initialize(cls, rng: np.random.Generator | int | None = None, **kw) -> "GmoeModel":
        """Glorot-uniform weights, zero biases except a unit LSTM forget bias."""
        rng = np.random.default_rng(rng)
        model = cls(**kw)
        h = model.hidden
        p = {}
        for name, shape in model.param_shapes().items():
            if name.endswith("_b"):
                p[name] = np.zeros(shape)
            else:
                fan_in, fan_out = shape[-2], shape[-1]
                lim = np.sqrt(6.0 / (fan_in + fan_out))
                p[name] = rng.uniform(-lim, lim, size=shape)
        p["lstm_b"][:, h:2 * h] = 1.0
        model.params = p
        return model

    def copy(self) -> "GmoeModel":
        return GmoeModel(self.hidden, self.n_in, self.n_out, self.horizon, self.n_actions,
                         self.window, self.out_columns.copy(),
                         {k: v.copy() for k, v in self.params.items()},
                         self.in_mean.copy(), self.in_scale.copy())

    def set_normalization(self, features: np.ndarray):
        """Freeze per-feature z-score statistics from training frames (n, n_in)."""
        features = np.asarray(features, dtype=float)
        self.in_mean = features.mean(axis=0)
        std = features.std(axis=0)
        self.in_scale = np.where(std > 1e-8, std, 1.0)

    @property
    def out_mean(self) -> np.ndarray:
        return self.in_mean[self.out_columns]

    @property
    def out_scale(self) -> np.ndarray:
        return self.in_scale[self.out_columns]

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.params[n].ravel() for n in PARAM_NAMES])

    def set_flat_params(self, flat: np.ndarray):
        pos = 0
        for name in PARAM_NAMES:
            shape = self.param_shapes()[name]
            size = int(np.prod(shape))
            self.params[name] = np.array(flat[pos:pos + size], dtype=float).reshape(shape)
            pos += size

    def normalize(self, x):
        return (np.asarray(x, dtype=float) - self.in_mean) / self.in_scale

    def denormalize_motion(self, y):
        return y * self.out_scale + self.out_mean

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params.values())


@dataclass
class ForwardCache:
    x: np.ndarray        # (B, W, n_in) normalized input
    steps: list          # per time step: (i, f, g, o, c_prev, tanh_c, h_prev)
    h_last: np.ndarray   # (K, B, hidden)


def _rows(x, w):
    """``x @ w`` computed one row at a time, so every row gets the same bits
    whatever the batch size (BLAS picks different kernels for 1 and n rows).
    Stacked operands with a fixed per-item shape are safe for the same reason."""
    if w.ndim == 3:  # stacked per-network weights (K, n, m) against x (K, B, n)
        w = w[:, None]
    return (x[..., None, :] @ w)[..., 0, :]


def forward(model: GmoeModel, xn: np.ndarray, keep_cache: bool = False, rowwise: bool = False):
    """Run all networks on normalized windows ``xn`` of shape (B, W, n_in).

    Returns ``(logits, probs, experts, cache)``: gate logits and probabilities
    with shape (B, T, A) and normalized expert outputs (B, A, T, F).
    ``rowwise`` makes every window's result independent of the batch it is
    evaluated in, at some cost in speed; inference uses it.
    """
    mul = _rows if rowwise else np.matmul
    xn = np.asarray(xn, dtype=float)
    if xn.ndim != 3 or xn.shape[2] != model.n_in:
        raise ValueError(f"expected windows of shape (B, W, {model.n_in}), got {xn.shape}")
    p = model.params
    B, W, n_in = xn.shape
    hid, A, T, F = model.hidden, model.n_actions, model.horizon, model.n_out
    K = 1 + A
    Wx = p["lstm_W"][:, :n_in, :]
    Wh = p["lstm_W"][:, n_in:, :]
    # input projections for every step and network at once: (W, K, B, 4h)
    Wx_all = Wx.transpose(1, 0, 2).reshape(n_in, K * 4 * hid)
    if rowwise:
        xproj = xn @ Wx_all  # one fixed-shape product per window
    else:
        xproj = xn.reshape(B * W, n_in) @ Wx_all
    xproj = xproj.reshape(B, W, K, 4 * hid)
    xproj += p["lstm_b"]
    xproj = xproj.transpose(1, 2, 0, 3)  # (W, K, B, 4h) view
    # sigmoid(x) = (1 + tanh(x/2)) / 2, so one tanh call covers all four gates
    gate_scale = np.full(4 * hid, 0.5)
    gate_scale[2 * hid:3 * hid] = 1.0

    h = np.zeros((K, B, hid))
    c = np.zeros((K, B, hid))
    steps = []
    for t in range(W):
        s = mul(h, Wh)
        s += xproj[t]
        s *= gate_scale
        np.tanh(s, out=s)
        for sig in (s[..., :2 * hid], s[..., 3 * hid:]):
            sig += 1.0
            sig *= 0.5
        i = s[..., :hid]
        f = s[..., hid:2 * hid]
        g = s[..., 2 * hid:3 * hid]
        o = s[..., 3 * hid:]
        c_prev = c
        c = f * c
        c += i * g
        tc = np.tanh(c)
        h_prev = h
        h = o * tc
        if keep_cache:
            steps.append((i, f, g, o, c_prev, tc, h_prev))

    logits = (mul(h[0], p["gate_W"]) + p["gate_b"]).reshape(B, T, A)
    probs = softmax(logits)
    experts = (mul(h[1:], p["expert_W"]) + p["expert_b"][:, None, :]).reshape(A, B, T, F).transpose(1, 0, 2, 3)
    cache = ForwardCache(xn, steps, h) if keep_cache else None
    return logits, probs, experts, cache


def backward(model: GmoeModel, cache: ForwardCache, d_logits: np.ndarray, d_experts: np.ndarray):
    """Backpropagate gradients on gate logits (B, T, A) and expert outputs (B, A, T, F)."""
    p = model.params
    x = cache.x
    B, W, n_in = x.shape
    hid, A, T, F = model.hidden, model.n_actions, model.horizon, model.n_out
    K = 1 + A
    h_last = cache.h_last

    grads = {}
    dl = d_logits.reshape(B, T * A)
    grads["gate_W"] = h_last[0].T @ dl
    grads["gate_b"] = dl.sum(axis=0)
    de = d_experts.transpose(1, 0, 2, 3).reshape(A, B, T * F)
    grads["expert_W"] = h_last[1:].transpose(0, 2, 1) @ de
    grads["expert_b"] = de.sum(axis=1)

    dh = np.empty((K, B, hid))
    dh[0] = dl @ p["gate_W"].T
    dh[1:] = de @ p["expert_W"].transpose(0, 2, 1)
    dc = np.zeros((K, B, hid))

    Wh = p["lstm_W"][:, n_in:, :]
    WhT = Wh.transpose(0, 2, 1)
    dWh = np.zeros((K, hid, 4 * hid))
    dZ = np.empty((W, K, B, 4 * hid))
    for t in range(W - 1, -1, -1):
        i, f, g, o, c_prev, tc, h_prev = cache.steps[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = dZ[t]
        dz[..., :hid] = dc * g * i * (1.0 - i)
        dz[..., hid:2 * hid] = dc * c_prev * f * (1.0 - f)
        dz[..., 2 * hid:3 * hid] = dc * i * (1.0 - g * g)
        dz[..., 3 * hid:] = do * o * (1.0 - o)
        dc = dc * f
        dWh += h_prev.transpose(0, 2, 1) @ dz
        dh = dz @ WhT

    # input weights: sum over time and batch of x_t^T dz_t
    xt = x.transpose(2, 1, 0).reshape(n_in, W * B)              # (n_in, W*B)
    dz_flat = dZ.transpose(1, 0, 2, 3).reshape(K, W * B, 4 * hid)  # (K, W*B, 4h)
    dWx = xt[None] @ dz_flat
    grads["lstm_W"] = np.concatenate([dWx, dWh], axis=1)
    grads["lstm_b"] = dZ.sum(axis=(0, 2))
    return grads


def blend(probs: np.ndarray, experts: np.ndarray) -> np.ndarray:
    """Per-step probability-weighted sum of expert outputs -> (B, T, F)."""
    out = probs[:, :, 0, None] * experts[:, 0]
    for a in range(1, probs.shape[2]):
        out = out + probs[:, :, a, None] * experts[:, a]
    return out


def _as_windows(windows) -> np.ndarray:
    if isinstance(windows, InputWindow):
        return windows.features()[None]
    x = np.asarray(windows, dtype=float)
    return x[None] if x.ndim == 2 else x


def predict_batch(model: GmoeModel, windows):
    """Raw windows (B, W, n_in) -> (probs, motion, experts) in physical units."""
    x = _as_windows(windows)
    _, probs, experts, _ = forward(model, model.normalize(x), rowwise=True)
    motion = model.denormalize_motion(blend(probs, experts))
    experts_phys = model.denormalize_motion(experts)
    if not (np.all(np.isfinite(probs)) and np.all(np.isfinite(motion))):
        raise NumericError("non-finite network output; the model is corrupt")
    return probs, motion, experts_phys


def predict(model: GmoeModel, window, anchor_time: float | None = None) -> MotionPrediction:
    """Action probabilities and blended motion for one window."""
    if anchor_time is None:
        anchor_time = window.anchor_time if isinstance(window, InputWindow) else 0.0
    probs, motion, experts = predict_batch(model, window)
    return MotionPrediction(anchor_time, probs[0], motion[0], experts[0], SPACING * DT)


def classify(prediction, step: int = 0) -> ActionLabel:
    """Most probable action at ``step``; ties go to the lowest label code."""
    probs = prediction.action_probs if isinstance(prediction, MotionPrediction) else np.asarray(prediction)
    if not 0 <= step < probs.shape[0]:
        raise IndexError(f"step {step} outside horizon of {probs.shape[0]}")
    return ActionLabel(int(np.argmax(probs[step])))
