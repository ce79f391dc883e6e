"""Offline evaluation: confusion matrix, classification scores, motion error."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import MOTION_COLUMNS, N_ACTIONS, ActionLabel
from .kinematics import ANGLE_INDEX

DEFAULT_STEPS = (0, 19, 49)
DEFAULT_PROBES = ("left_knee_flexion", "right_elbow_flexion")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows indexed by the true label, columns by the prediction."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (N_ACTIONS, N_ACTIONS) or np.any(c < 0):
            raise ValueError(f"confusion matrix must be a nonnegative {N_ACTIONS}x{N_ACTIONS} array")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)


def confusion(predicted, true) -> ConfusionMatrix:
    p = np.asarray(predicted, dtype=int).ravel()
    t = np.asarray(true, dtype=int).ravel()
    if p.shape != t.shape:
        raise ValueError(f"label sequences differ in length: {p.size} vs {t.size}")
    if p.size and (p.min() < 0 or t.min() < 0 or p.max() >= N_ACTIONS or t.max() >= N_ACTIONS):
        raise ValueError("labels outside the action range")
    counts = np.zeros((N_ACTIONS, N_ACTIONS), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


@dataclass
class MetricsReport:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    undefined: dict          # metric name -> list of class names with a zero denominator
    support: np.ndarray
    motion: dict = field(default_factory=dict)

    @property
    def macro_precision(self) -> float:
        return float(np.mean(self.precision))

    @property
    def macro_recall(self) -> float:
        return float(np.mean(self.recall))

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.f1))

    def records(self) -> list[dict]:
        rows = [{"kind": "summary", "accuracy": self.accuracy,
                 "macro_precision": self.macro_precision, "macro_recall": self.macro_recall,
                 "macro_f1": self.macro_f1}]
        for k, label in enumerate(ActionLabel):
            rows.append({"kind": "class", "label": label.text, "support": int(self.support[k]),
                         "precision": float(self.precision[k]), "recall": float(self.recall[k]),
                         "f1": float(self.f1[k]),
                         "undefined": [m for m, names in self.undefined.items() if label.text in names]})
        for step, err in sorted(self.motion.items()):
            rows.append({"kind": "motion", "step": int(step), **err})
        return rows

    def summary(self) -> str:
        lines = [f"accuracy        {self.accuracy:.3f}",
                 f"{'class':<10}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>10}"]
        for k, label in enumerate(ActionLabel):
            lines.append(f"{label.text:<10}{self.precision[k]:>10.3f}{self.recall[k]:>10.3f}"
                         f"{self.f1[k]:>10.3f}{int(self.support[k]):>10d}")
        lines.append(f"{'macro':<10}{self.macro_precision:>10.3f}{self.macro_recall:>10.3f}"
                     f"{self.macro_f1:>10.3f}")
        for metric, names in self.undefined.items():
            if names:
                lines.append(f"{metric} undefined (reported as 0) for: {', '.join(names)}")
        if self.motion:
            lines.append("motion RMSE by future step")
            for step, err in sorted(self.motion.items()):
                cols = "  ".join(f"{k}={v:.4f}" for k, v in err.items())
                lines.append(f"  step {step:>2}: {cols}")
        return "\n".join(lines)


def _ratio(num, den):
    den = np.asarray(den, dtype=float)
    safe = np.where(den > 0, den, 1.0)
    return np.where(den > 0, num / safe, 0.0), den == 0


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    c = cm.counts.astype(float)
    if cm.total == 0:
        raise ValueError("cannot score an empty confusion matrix")
    tp = np.diag(c)
    precision, p_undef = _ratio(tp, c.sum(axis=0))
    recall, r_undef = _ratio(tp, c.sum(axis=1))
    f1, f_undef = _ratio(2 * precision * recall, precision + recall)
    names = [label.text for label in ActionLabel]
    undefined = {
        "precision": [n for n, u in zip(names, p_undef) if u],
        "recall": [n for n, u in zip(names, r_undef) if u],
        "f1": [n for n, u in zip(names, f_undef) if u],
    }
    return MetricsReport(float(tp.sum() / c.sum()), precision, recall, f1, undefined,
                         cm.counts.sum(axis=1))


def probe_columns(probes=DEFAULT_PROBES) -> list[int]:
    """Positions of named joint angles within the 43 motion features."""
    cols = []
    motion_cols = list(MOTION_COLUMNS)
    for name in probes:
        if name not in ANGLE_INDEX:
            raise KeyError(f"probe feature {name!r} is not in the joint layout")
        cols.append(motion_cols.index(ANGLE_INDEX[name]))
    return cols


def motion_error(model, data, steps=DEFAULT_STEPS, probes=DEFAULT_PROBES, chunk: int = 2048,
                 predict_fn=None) -> dict:
    """RMSE per requested future step for each probe angle and over all 43 features.

    ``data`` is a training.WindowSet of raw (unnormalized) features.
    ``predict_fn(model, x)`` must return ``(probs, motion)`` in physical
    units; it defaults to :func:`liftrisk.gmoe.predict_batch`.
    """
    if predict_fn is None:
        from .gmoe import predict_batch

        def predict_fn(m, x):
            return predict_batch(m, x)[:2]

    cols = probe_columns(probes)
    steps = [int(s) for s in steps]
    if any(s < 0 or s >= data.horizon for s in steps):
        raise ValueError(f"steps must lie in [0, {data.horizon})")
    n = len(data)
    if n == 0:
        raise ValueError("no windows to evaluate")
    sq = np.zeros((len(steps), len(cols)))
    sq_all = np.zeros(len(steps))
    for start in range(0, n, chunk):
        x, _, y = data.batch(np.arange(start, min(n, start + chunk)))
        _, motion = predict_fn(model, x)
        err = (np.asarray(motion) - y)[:, steps]       # (B, S, F)
        sq += np.sum(err[:, :, cols] ** 2, axis=0)
        sq_all += np.sum(err ** 2, axis=(0, 2))
    out = {}
    for k, s in enumerate(steps):
        row = {name: float(np.sqrt(sq[k, j] / n)) for j, name in enumerate(probes)}
        row["all"] = float(np.sqrt(sq_all[k] / (n * y.shape[-1])))
        out[s] = row
    return out


def gate_predictions(model, data, chunk: int = 2048):
    """Step-0 predicted and true labels for every window of a WindowSet."""
    from .gmoe import predict_batch
    pred, true = [], []
    for start in range(0, len(data), chunk):
        x, a, _ = data.batch(np.arange(start, min(len(data), start + chunk)))
        probs = predict_batch(model, x)[0]
        pred.append(np.argmax(probs[:, 0], axis=-1))
        true.append(a[:, 0])
    return np.concatenate(pred), np.concatenate(true)


def evaluate_model(model, data, steps=DEFAULT_STEPS, probes=DEFAULT_PROBES) -> MetricsReport:
    """Full held-out report: step-0 classification plus motion error."""
    p, t = gate_predictions(model, data)
    report = metrics(confusion(p, t))
    report.motion = motion_error(model, data, steps, probes)
    return report


def write_report(report: MetricsReport, cm: ConfusionMatrix | None, path_prefix) -> tuple[str, str]:
    """Write ``<prefix>.jsonl`` records and a ``<prefix>.txt`` summary."""
    prefix = str(path_prefix)
    rows = report.records()
    if cm is not None:
        rows.append({"kind": "confusion", "rows": "true", "columns": "predicted",
                     "labels": [a.text for a in ActionLabel], "counts": cm.counts.tolist()})
    with open(prefix + ".jsonl", "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    with open(prefix + ".txt", "w", encoding="utf-8") as fh:
        fh.write(report.summary() + "\n")
    return prefix + ".jsonl", prefix + ".txt"
