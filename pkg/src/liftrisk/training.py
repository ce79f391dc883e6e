"""Supervised training of the mixture of experts.

The objective combines a per-step categorical cross-entropy on the gate with a
regression term on the probability-blended expert motion::

    L1 = -1/(2M) * sum_t sum_j sum_i a log(p)
    L2 =  1/(2M) * sum_t sum_j || sum_i p_i y_i - y ||^2      (norm="squared")
    L  = b1 * L1 + b2 * L2

M is the number of windows in the batch.  Everything is computed in the
normalized feature space.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import HORIZON, MOTION_COLUMNS, N_ACTIONS, SPACING, WINDOW_LEN
from .gmoe import GmoeModel, NumericError, backward, forward

log = logging.getLogger(__name__)

LOG_CLAMP = 1e-12


@dataclass
class TrainConfig:
    b1: float = 1.0
    b2: float = 0.5
    norm: str = "squared"          # or "l2" for the unsquared Euclidean norm
    learning_rate: float = 1e-3
    epsilon: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    lr_decay: float = 0.5
    lr_patience: int = 5
    patience: int = 10
    batch_size: int | None = 32     # None -> full batch
    max_epochs: int = 100
    anchor_stride: int = 1          # subsample training anchors
    seed: int = 0

    def __post_init__(self):
        if self.b1 < 0 or self.b2 < 0:
            raise ValueError("loss weights b1, b2 must be nonnegative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.lr_patience < 1 or self.patience < 1:
            raise ValueError("patience values must be >= 1")
        if self.norm not in ("squared", "l2"):
            raise ValueError(f"unknown norm mode {self.norm!r}")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        if self.max_epochs < 0 or self.anchor_stride < 1:
            raise ValueError("max_epochs must be >= 0 and anchor_stride >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d)


# -- loss ---------------------------------------------------------------------

def _onehot(labels, n_actions=N_ACTIONS) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.dtype.kind in "iu":
        return np.eye(n_actions)[labels]
    return labels.astype(float)


def _check(probs, experts, a, y):
    B, T, A = probs.shape
    if a.shape != (B, T, A) or experts.shape[:3] != (B, A, T) or y.shape != (B, T, experts.shape[3]):
        raise ValueError(
            f"shape mismatch: probs {probs.shape}, experts {experts.shape}, "
            f"actions {a.shape}, motion {y.shape}")
    for name, arr in (("probs", probs), ("experts", experts), ("actions", a), ("motion", y)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite values in {name}")


def loss_and_grad(probs, experts, targets_actions, targets_motion, config: TrainConfig,
                  need_grad=True):
    """Loss terms and their gradients w.r.t. the gate probabilities and experts.

    Returns ``(L, L1, L2, d_probs, d_experts)``; gradients are None when
    ``need_grad`` is false.
    """
    probs = np.asarray(probs, dtype=float)
    experts = np.asarray(experts, dtype=float)
    a = _onehot(targets_actions, probs.shape[-1])
    y = np.asarray(targets_motion, dtype=float)
    _check(probs, experts, a, y)
    M = probs.shape[0]

    clamped = np.maximum(probs, LOG_CLAMP)
    L1 = -np.sum(a * np.log(clamped)) / (2.0 * M)
    blended = np.einsum("bta,batf->btf", probs, experts)
    resid = blended - y
    if config.norm == "squared":
        sq = np.sum(resid * resid, axis=-1)
        L2 = np.sum(sq) / (2.0 * M)
    else:
        nrm = np.sqrt(np.sum(resid * resid, axis=-1))
        L2 = np.sum(nrm) / (2.0 * M)
    L = config.b1 * L1 + config.b2 * L2
    if not need_grad:
        return L, L1, L2, None, None

    if config.norm == "squared":
        d_blend = (config.b2 / M) * resid
    else:
        safe = np.where(nrm > 0, nrm, 1.0)
        d_blend = (config.b2 / (2.0 * M)) * resid / safe[..., None] * (nrm > 0)[..., None]
    d_experts = probs.transpose(0, 2, 1)[..., None] * d_blend[:, None, :, :]
    d_probs = np.einsum("btf,batf->bta", d_blend, experts)
    d_probs -= (config.b1 / (2.0 * M)) * np.where(probs > LOG_CLAMP, a / clamped, 0.0)
    return L, L1, L2, d_probs, d_experts


def loss(probs, experts, targets_actions, targets_motion, config: TrainConfig | None = None):
    """(L, L1, L2) for a batch; actions are int labels (B, T) or one-hot (B, T, A)."""
    L, L1, L2, _, _ = loss_and_grad(probs, experts, targets_actions, targets_motion,
                                    config or TrainConfig(), need_grad=False)
    return L, L1, L2


def softmax_backward(probs, d_probs):
    return probs * (d_probs - np.sum(probs * d_probs, axis=-1, keepdims=True))


def gradients(model: GmoeModel, x, targets_actions, targets_motion, config: TrainConfig):
    """Exact gradient of the loss w.r.t. every parameter.

    ``x`` and ``targets_motion`` are in normalized space.  Returns
    ``(grads, (L, L1, L2))``.
    """
    _, probs, experts, cache = forward(model, x, keep_cache=True)
    L, L1, L2, d_probs, d_experts = loss_and_grad(probs, experts, targets_actions,
                                                  targets_motion, config)
    grads = backward(model, cache, softmax_backward(probs, d_probs), d_experts)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
    return grads, (L, L1, L2)


# -- windowed training data ---------------------------------------------------

class WindowSet:
    """Anchored windows over one or more concatenated frame sequences.

    Holds the raw 74-feature rows once and gathers (input, action, motion)
    batches by index arithmetic, so the 10x74 inputs and 50x43 targets are
    never materialized for the whole dataset.
    """

    def __init__(self, features, labels, anchors, out_columns=MOTION_COLUMNS,
                 window=WINDOW_LEN, spacing=SPACING, horizon=HORIZON):
        self.features = np.asarray(features, dtype=float)
        self.labels = np.asarray(labels, dtype=int)
        self.anchors = np.asarray(anchors, dtype=int)
        self.out_columns = np.asarray(out_columns, dtype=int)
        self.window = window
        self.spacing = spacing
        self.horizon = horizon
        self.in_offsets = spacing * np.arange(-(window - 1), 1)
        self.out_offsets = spacing * np.arange(1, horizon + 1)

    def __len__(self) -> int:
        return len(self.anchors)

    def __iter__(self):
        for k in range(len(self)):
            x, a, y = self.batch(np.array([k]))
            yield x[0], np.eye(N_ACTIONS)[a[0]], y[0]

    @classmethod
    def concat(cls, sets: list["WindowSet"]) -> "WindowSet":
        if not sets:
            raise ValueError("no window sets to concatenate")
        offsets = np.cumsum([0] + [len(s.features) for s in sets[:-1]])
        first = sets[0]
        return cls(np.concatenate([s.features for s in sets]),
                   np.concatenate([s.labels for s in sets]),
                   np.concatenate([s.anchors + o for s, o in zip(sets, offsets)]),
                   first.out_columns, first.window, first.spacing, first.horizon)

    def with_features(self, features) -> "WindowSet":
        return WindowSet(features, self.labels, self.anchors, self.out_columns,
                         self.window, self.spacing, self.horizon)

    def normalized(self, model: GmoeModel) -> "WindowSet":
        return self.with_features(model.normalize(self.features))

    def subsample(self, stride: int) -> "WindowSet":
        return WindowSet(self.features, self.labels, self.anchors[::stride], self.out_columns,
                         self.window, self.spacing, self.horizon)

    def batch(self, idx):
        """Inputs (B, W, n_in), integer action targets (B, T), motion targets (B, T, F)."""
        anchors = self.anchors[np.asarray(idx)]
        x = self.features[anchors[:, None] + self.in_offsets]
        fut = anchors[:, None] + self.out_offsets
        y = self.features[fut][:, :, self.out_columns]
        return x, self.labels[fut], y

    def all(self):
        return self.batch(np.arange(len(self)))


def make_training_targets(sequence, window=WINDOW_LEN, spacing=SPACING, horizon=HORIZON) -> WindowSet:
    """Windows with future targets 3, 6, ..., 150 raw frames after each anchor.

    ``sequence`` is a LabeledSequence or anything exposing ``features`` and
    ``labels`` arrays.  Anchors whose horizon runs past the end are dropped.
    """
    arrays = getattr(sequence, "arrays", sequence)
    features = arrays.features
    labels = np.asarray(arrays.labels)
    n = len(features)
    span = (window - 1) * spacing + 1
    need = span + horizon * spacing
    if n < need:
        raise ValueError(f"sequence of {n} frames is too short for horizon (needs {need})")
    if np.any(labels < 0):
        raise ValueError("sequence is not fully labeled")
    anchors = np.arange(span - 1, n - horizon * spacing)
    return WindowSet(features, labels, anchors, window=window, spacing=spacing, horizon=horizon)


# -- optimizer ----------------------------------------------------------------

class Adam:
    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-6):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.epsilon)


# -- training loop ------------------------------------------------------------

@dataclass
class TrainReport:
    epochs: list[dict] = field(default_factory=list)
    stop_epoch: int = 0
    stop_reason: str = ""
    best_epoch: int = 0
    final: dict = field(default_factory=dict)

    def records(self) -> list[dict]:
        out = [dict(kind="epoch", **e) for e in self.epochs]
        out.append(dict(kind="summary", stop_epoch=self.stop_epoch, stop_reason=self.stop_reason,
                        best_epoch=self.best_epoch, **self.final))
        return out


def evaluate(model: GmoeModel, data: WindowSet, config: TrainConfig, chunk: int = 2048):
    """Mean loss terms and step-0 accuracy over a normalized WindowSet."""
    n = len(data)
    tot = np.zeros(3)
    correct = 0
    for start in range(0, n, chunk):
        idx = np.arange(start, min(n, start + chunk))
        x, a, y = data.batch(idx)
        _, probs, experts, _ = forward(model, x)
        L, L1, L2 = loss(probs, experts, a, y, config)
        tot += np.array([L, L1, L2]) * len(idx)
        correct += int(np.sum(np.argmax(probs[:, 0], axis=-1) == a[:, 0]))
    tot /= max(n, 1)
    return {"loss": tot[0], "L1": tot[1], "L2": tot[2], "accuracy": correct / max(n, 1)}


def train(model: GmoeModel, train_set: WindowSet, val_set: WindowSet, config: TrainConfig | None = None,
          fit_normalization: bool = True, callback=None):
    """Mini-batch Adam with plateau learning-rate decay and early stopping.

    The returned model carries the weights of the best validation epoch.
    ``callback(epoch_record)`` is called after each epoch when given.
    """
    config = config or TrainConfig()
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation splits must be non-empty")
    model = model.copy()
    report = TrainReport()
    if config.max_epochs == 0:
        report.stop_reason = "max_epochs"
        return model, report

    if fit_normalization:
        model.set_normalization(train_set.features)
    tr = train_set.normalized(model).subsample(config.anchor_stride)
    va = val_set.normalized(model)

    rng = np.random.default_rng(config.seed)
    opt = Adam(model.params, config.learning_rate, config.beta1, config.beta2, config.epsilon)
    best = math.inf
    best_params = {k: v.copy() for k, v in model.params.items()}
    since_best = 0
    since_lr = 0
    n = len(tr)
    bs = n if config.batch_size is None else min(config.batch_size, n)

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n) if bs < n else np.arange(n)
        acc = np.zeros(3)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            x, a, y = tr.batch(idx)
            grads, terms = gradients(model, x, a, y, config)
            if not math.isfinite(terms[0]):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            acc += np.array(terms) * len(idx)
            opt.step(model.params, grads)
        acc /= n
        val = evaluate(model, va, config)
        if not math.isfinite(val["loss"]):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")
        rec = {"epoch": epoch, "train_loss": acc[0], "train_L1": acc[1], "train_L2": acc[2],
               "val_loss": val["loss"], "val_L1": val["L1"], "val_L2": val["L2"],
               "val_accuracy": val["accuracy"], "learning_rate": opt.lr}
        report.epochs.append(rec)
        log.info("epoch %d train %.4f val %.4f acc %.3f lr %.2e", epoch, acc[0], val["loss"],
                 val["accuracy"], opt.lr)
        if callback is not None:
            callback(rec)

        if val["loss"] < best:
            best = val["loss"]
            best_params = {k: v.copy() for k, v in model.params.items()}
            report.best_epoch = epoch
            since_best = 0
            since_lr = 0
        else:
            since_best += 1
            since_lr += 1
            if since_lr >= config.lr_patience:
                opt.lr *= config.lr_decay
                since_lr = 0
            if since_best >= config.patience:
                report.stop_epoch = epoch
                report.stop_reason = "early_stopping"
                break
    else:
        report.stop_epoch = config.max_epochs
        report.stop_reason = "max_epochs"

    model.params = best_params
    report.final = {f"val_{k}": v for k, v in evaluate(model, va, config).items()}
    return model, report


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
