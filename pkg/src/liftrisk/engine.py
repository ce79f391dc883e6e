"""Online risk engine: action tracking, risk horizon and haptic alerts.

Per incoming frame the engine assembles a window, runs the network, updates
the action tracker, evaluates the lifting index over the predicted horizon and
maps the worst predicted value to a haptic command.
"""
from __future__ import annotations

import enum
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

import numpy as np

from .core import (
    HORIZON,
    N_ACTIONS,
    N_FEATURES,
    N_JOINTS,
    ActionLabel,
    MotionPrediction,
    StateFrame,
    WindowAssembler,
    validate_frame,
)
from .gmoe import GmoeModel, predict_batch
from .kinematics import Skeleton, hand_geometry
from .rnle import Coupling, CouplingMode, Duration, Rounding, lifting_index_series, _enum


class EngineError(RuntimeError):
    pass


class FeatureMismatch(EngineError):
    pass


# --------------------------------------------------------------------------
# action tracking

class TransitionTracker:
    """Delay-compensating action tracker.

    The current label is kept while its probability stays within ``drop`` of
    its peak over the recent history.  Once it has dropped that far, the first
    other label (in code order) whose probability has risen at least ``rise``
    above its recent trough takes over.  The history is cleared on every
    switch, so two transitions are always at least ``history`` cycles apart.

    A fallback covers slow crossovers that never satisfy the windowed drop:
    if another label beats the current one by at least ``drop`` over a full
    history, the tracker switches to it.
    """

    def __init__(self, history: int = 10, drop: float = 0.2, rise: float = 0.2,
                 n_actions: int = N_ACTIONS):
        if not 0.0 < drop < 1.0 or not 0.0 < rise < 1.0:
            raise ValueError("thresholds must lie in (0, 1)")
        if int(history) < 2:
            raise ValueError("history length must be at least 2")
        self.history = int(history)
        self.drop = float(drop)
        self.rise = float(rise)
        self.n_actions = n_actions
        self.current: ActionLabel | None = None
        self._buf: deque = deque(maxlen=self.history)
        self.cycles = 0

    def reset(self):
        self.current = None
        self._buf.clear()
        self.cycles = 0

    def _check(self, probs) -> np.ndarray:
        p = np.asarray(probs, dtype=float)
        if p.shape != (self.n_actions,) or not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError(f"invalid probability vector {p!r}")
        return p

    def update(self, probs) -> ActionLabel | None:
        """Feed the step-0 probabilities of one cycle; return the new label on a switch."""
        p = self._check(probs)
        self.cycles += 1
        if self.current is None:
            self.current = ActionLabel(int(np.argmax(p)))
            self._buf.append(p)
            return None
        self._buf.append(p)
        if len(self._buf) < self.history:
            return None
        hist = np.asarray(self._buf)
        cur = int(self.current)
        new = None
        if hist[:, cur].max() - p[cur] >= self.drop:
            for k in range(self.n_actions):
                if k != cur and p[k] - hist[:, k].min() >= self.rise:
                    new = k
                    break
        if new is None:
            lead = hist - hist[:, [cur]]
            lead[:, cur] = -np.inf
            sustained = np.all(lead >= self.drop, axis=0)
            if sustained.any():
                new = int(np.argmax(sustained))
        if new is None:
            return None
        self.current = ActionLabel(new)
        self._buf.clear()
        return self.current


def update_transition(tracker: TransitionTracker, probs) -> ActionLabel | None:
    return tracker.update(probs)


# --------------------------------------------------------------------------
# risk horizon

@dataclass(frozen=True)
class NioshContext:
    """Task parameters the kinematics cannot supply."""

    payload: float = 7.0
    A: float = 0.0
    F: float = 7.0
    duration: Duration = Duration.SHORT
    coupling: Coupling = Coupling.FAIR
    rounding: Rounding = Rounding.EXACT
    coupling_mode: CouplingMode = CouplingMode.PAPER_FLAT

    def __post_init__(self):
        for name, cls in (("duration", Duration), ("coupling", Coupling),
                          ("rounding", Rounding), ("coupling_mode", CouplingMode)):
            object.__setattr__(self, name, _enum(cls, getattr(self, name)))
        if not self.payload >= 0 or not self.A >= 0 or not self.F >= 0:
            raise ValueError("payload, A and F must be nonnegative")


@dataclass(frozen=True)
class RiskHorizon:
    """Lifting index over the predicted steps of one anchor.

    ``origin_step[i]`` is -1 when step i measures travel from the engine
    origin, otherwise the predicted step whose posture served as origin.
    """

    anchor_time: float
    li: np.ndarray
    rwl: np.ndarray
    H: np.ndarray
    V: np.ndarray
    D: np.ndarray
    actions: np.ndarray
    origin_step: np.ndarray
    context: NioshContext = field(repr=False, default=None)

    def __len__(self) -> int:
        return len(self.li)

    @property
    def max_li(self) -> float:
        return float(np.max(self.li)) if len(self.li) else 0.0

    def detail(self, step: int):
        """Full multiplier breakdown for one step (LI gating not applied)."""
        from .rnle import NioshInput, rwl
        c = self.context
        inp = NioshInput(float(self.H[step]), float(self.V[step]), float(self.D[step]),
                         c.A, c.F, c.duration, c.coupling, c.payload)
        return rwl(inp, c.rounding, c.coupling_mode)


def step_actions(current: ActionLabel, prediction: MotionPrediction, n: int) -> np.ndarray:
    """Action per horizon step: the tracked label at step 0, the gate argmax after."""
    acts = np.argmax(prediction.action_probs[:n], axis=1)
    acts[0] = int(current)
    return acts


def risk_horizon(current: ActionLabel | None, prediction: MotionPrediction, origin,
                 context: NioshContext, skeleton: Skeleton, n_steps: int = 30) -> RiskHorizon:
    """Lifting index for the first ``n_steps`` predicted frames.

    Travel distance is measured from ``origin`` (a StateFrame or angle vector)
    until the predicted action changes; from then on the first predicted frame
    of the new action is the origin.  Steps not in the Rising phase get LI 0.
    """
    if current is None or origin is None:
        raise EngineError("risk engine is not initialized (no action or origin)")
    if not 1 <= n_steps <= prediction.horizon:
        raise ValueError(f"horizon must be in [1, {prediction.horizon}], got {n_steps}")
    q_origin = origin.q if isinstance(origin, StateFrame) else np.asarray(origin, dtype=float)
    H, V = hand_geometry(skeleton, prediction.joint_angles[:n_steps])[:2]
    v0 = float(hand_geometry(skeleton, q_origin)[1])
    acts = step_actions(current, prediction, n_steps)
    return _horizon_from_geometry(prediction.anchor_time, acts, H, V, v0, context)


def _horizon_from_geometry(anchor_time, acts, H, V, v0, context: NioshContext) -> RiskHorizon:
    li, rwl, D, origin_step = _horizon_arrays(acts[None], H[None], V[None], np.array([v0]), context)
    return RiskHorizon(anchor_time, li[0], rwl[0], H, V, D[0], acts, origin_step[0], context)


def _horizon_arrays(acts, H, V, v0, context: NioshContext):
    """Vectorised risk horizon for B anchors: arrays of shape (B, N) plus v0 (B,).

    Travel runs from ``v0`` until the first predicted action change; after a
    change it runs from the height at the changing step.  Every operation is
    elementwise, so a row's values do not depend on the other rows.
    """
    B, n = acts.shape
    steps = np.arange(n)
    changed = np.zeros((B, n), dtype=bool)
    changed[:, 1:] = acts[:, 1:] != acts[:, :-1]
    origin_step = np.maximum.accumulate(np.where(changed, steps, -1), axis=1)
    ref = np.where(origin_step >= 0, np.take_along_axis(V, np.maximum(origin_step, 0), axis=1),
                   np.asarray(v0, dtype=float)[:, None])
    D = np.abs(V - ref)
    c = context
    rwl, li = lifting_index_series(H, V, D, c.payload, c.A, c.F, c.duration, c.coupling,
                                   c.rounding, c.coupling_mode)
    li = np.where(acts == int(ActionLabel.RISING), li, 0.0)
    return li, rwl, D, origin_step


# --------------------------------------------------------------------------
# haptics

class HapticLevel(enum.IntEnum):
    OFF = 0
    SLIGHT = 1
    MEDIUM = 2
    STRONG = 3

    @property
    def text(self) -> str:
        return self.name.lower()


DEFAULT_BANDS = (0.5, 0.85, 1.2)


@dataclass(frozen=True)
class HapticCommand:
    level: HapticLevel
    intensity: float

    def __post_init__(self):
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError(f"intensity {self.intensity} outside [0, 1]")


def haptic_level(li: float, bands=DEFAULT_BANDS) -> HapticCommand:
    """Band the (maximum predicted) lifting index into an alert level."""
    li = float(li)
    if not li >= 0:
        raise ValueError(f"lifting index must be nonnegative, got {li}")
    if not (len(bands) == 3 and 0 < bands[0] < bands[1] < bands[2]):
        raise ValueError(f"bands must be three increasing positive values, got {bands}")
    level = HapticLevel(int(np.searchsorted(bands, li, side="right")))
    return HapticCommand(level, min(li / 2.0, 1.0))


# --------------------------------------------------------------------------
# engine

@dataclass(frozen=True)
class EngineSettings:
    horizon: int = 30
    history: int = 10
    drop: float = 0.2
    rise: float = 0.2
    bands: tuple = DEFAULT_BANDS
    origin: str = "predicted"   # or "measured"

    def __post_init__(self):
        object.__setattr__(self, "bands", tuple(float(b) for b in self.bands))
        if not 1 <= self.horizon <= HORIZON:
            raise ValueError(f"horizon must be in [1, {HORIZON}]")
        if self.origin not in ("predicted", "measured"):
            raise ValueError(f"origin must be 'predicted' or 'measured', got {self.origin!r}")
        TransitionTracker(self.history, self.drop, self.rise)
        haptic_level(0.0, self.bands)


def replace_settings(settings: EngineSettings, **overrides) -> EngineSettings:
    """Copy of ``settings`` with the non-None overrides applied."""
    return replace(settings, **{k: v for k, v in overrides.items() if v is not None})


@dataclass(frozen=True)
class EngineRecord:
    t: float
    action: ActionLabel
    probs: np.ndarray
    risk: RiskHorizon
    haptic: HapticCommand
    prediction: MotionPrediction = field(repr=False, default=None)
    latency: float = 0.0

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "action": self.action.text,
            "probs": [float(p) for p in self.probs],
            "li": [float(v) for v in self.risk.li],
            "max_li": self.risk.max_li,
            "haptic_level": self.haptic.level.text,
            "haptic_intensity": self.haptic.intensity,
        }


@dataclass(frozen=True)
class WarningRecord:
    t: float
    message: str

    def to_dict(self) -> dict:
        return {"t": self.t, "warning": self.message}


class RiskEngine:
    """Single-consumer streaming engine.

    Feed frames in time order with :meth:`step`, or hand whole chunks to
    :meth:`process`.  Network inference and kinematics are batch-invariant,
    so chunking changes throughput but never the records.
    """

    def __init__(self, model: GmoeModel, skeleton: Skeleton | None = None,
                 context: NioshContext | None = None, settings: EngineSettings | None = None):
        if model.n_in != N_FEATURES:
            raise FeatureMismatch(
                f"feature mismatch: model expects {model.n_in} features, frames carry {N_FEATURES}")
        settings = settings or EngineSettings()
        if settings.horizon > model.horizon:
            raise ValueError(f"risk horizon {settings.horizon} exceeds model horizon {model.horizon}")
        self.model = model
        self.skeleton = skeleton or Skeleton()
        self.context = context or NioshContext()
        self.settings = settings
        self.tracker = TransitionTracker(settings.history, settings.drop, settings.rise,
                                         model.n_actions)
        self.assembler = WindowAssembler(model.window)
        self.origin: np.ndarray | None = None
        self._origin_v: float | None = None
        self._last_t: float | None = None

    def reset(self):
        self.tracker.reset()
        self.assembler.reset()
        self.origin = None
        self._origin_v = None
        self._last_t = None

    def process(self, frames) -> list:
        """Process a chunk of frames; returns EngineRecords and WarningRecords in input order."""
        start = time.perf_counter()
        items = []
        for frame in frames:
            n = frame.q.size + frame.dq.size + frame.w.size
            if n != self.model.n_in:
                raise FeatureMismatch(
                    f"feature mismatch: model expects {self.model.n_in} features, frame has {n}")
            verdict = validate_frame(frame, self._last_t)
            if not verdict:
                items.append(WarningRecord(float(frame.t), f"frame skipped: {verdict.reason}"))
                continue
            self._last_t = float(frame.t)
            window = self.assembler.push(frame)
            if window is not None:
                items.append((frame, window.features()))
        ready = [it for it in items if isinstance(it, tuple)]
        if not ready:
            return items
        N = self.settings.horizon
        probs, motion, experts = predict_batch(self.model, np.stack([w for _, w in ready]))
        H, V = hand_geometry(self.skeleton, motion[:, :N, :N_JOINTS])[:2]
        if self.settings.origin == "measured":
            v_meas = hand_geometry(self.skeleton, np.stack([f.q for f, _ in ready]))[1]
        current = np.empty(len(ready), dtype=int)
        v0 = np.empty(len(ready))
        for k, (frame, _) in enumerate(ready):
            changed = self.tracker.update(probs[k, 0])
            if self.origin is None or changed is not None:
                if self.settings.origin == "measured":
                    self.origin, self._origin_v = frame.q.copy(), float(v_meas[k])
                else:
                    self.origin, self._origin_v = motion[k, 0, :N_JOINTS].copy(), float(V[k, 0])
            current[k] = int(self.tracker.current)
            v0[k] = self._origin_v
        acts = np.argmax(probs[:, :N], axis=2)
        acts[:, 0] = current
        li, rwl, D, origin_step = _horizon_arrays(acts, H, V, v0, self.context)
        max_li = li.max(axis=1)
        levels = np.searchsorted(self.settings.bands, max_li, side="right")
        intensity = np.minimum(max_li / 2.0, 1.0)
        elapsed = (time.perf_counter() - start) / len(ready)
        out = []
        k = 0
        for it in items:
            if not isinstance(it, tuple):
                out.append(it)
                continue
            t = float(it[0].t)
            pred = MotionPrediction(t, probs[k], motion[k], experts[k])
            risk = RiskHorizon(t, li[k], rwl[k], H[k], V[k], D[k], acts[k], origin_step[k],
                               self.context)
            cmd = HapticCommand(HapticLevel(int(levels[k])), float(intensity[k]))
            out.append(EngineRecord(t, ActionLabel(int(current[k])), probs[k, 0].copy(), risk, cmd,
                                    pred, elapsed))
            k += 1
        return out

    def step(self, frame: StateFrame):
        """Process one frame; returns an EngineRecord, a WarningRecord or None (warm-up)."""
        out = self.process([frame])
        return out[0] if out else None

    def run(self, frames: Iterable[StateFrame], chunk: int = 1) -> Iterator:
        """Yield records for a frame stream, processing ``chunk`` frames at a time."""
        if chunk < 1:
            raise ValueError("chunk must be >= 1")
        buf = []
        for frame in frames:
            buf.append(frame)
            if len(buf) >= chunk:
                yield from self.process(buf)
                buf = []
        if buf:
            yield from self.process(buf)


def run_engine(frames: Iterable[StateFrame], model: GmoeModel, skeleton: Skeleton | None = None,
               context: NioshContext | None = None, settings: EngineSettings | None = None,
               chunk: int = 256) -> list:
    """Run a fresh engine over a finite stream and collect its records."""
    return list(RiskEngine(model, skeleton, context, settings).run(frames, chunk))


# --------------------------------------------------------------------------
# replay

_END = object()


def replay(frames: Iterable[StateFrame], rate: float = 1.0, maxsize: int = 256) -> Iterator[StateFrame]:
    """Yield frames from a producer thread paced at ``rate`` times real time.

    ``rate`` 0 disables pacing.  Frames pass through a bounded FIFO queue so
    ordering is preserved; producer errors are re-raised in the consumer.
    """
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    q: queue.Queue = queue.Queue(maxsize=maxsize)
    stop = threading.Event()

    def produce():
        try:
            t0 = None
            wall0 = time.perf_counter()
            for frame in frames:
                if stop.is_set():
                    return
                if rate > 0:
                    if t0 is None:
                        t0 = frame.t
                    due = wall0 + (frame.t - t0) / rate
                    delay = due - time.perf_counter()
                    if delay > 0:
                        time.sleep(delay)
                q.put(frame)
            q.put(_END)
        except BaseException as exc:  # handed to the consumer
            q.put(exc)

    worker = threading.Thread(target=produce, daemon=True)
    worker.start()
    try:
        while True:
            item = q.get()
            if item is _END:
                break
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        # unblock a producer waiting on a full queue
        while worker.is_alive():
            try:
                q.get_nowait()
            except queue.Empty:
                worker.join(timeout=0.01)
