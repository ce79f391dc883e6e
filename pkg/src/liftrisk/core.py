"""Domain types, frame validation and sliding-window assembly.

Frames are 100 Hz samples of the human state: 31 joint angles, 31 joint
velocities and 12 foot wrench components (left foot first, each as
``fx, fy, fz, tx, ty, tz``).  The flat 74-vector layout used by the network
is ``q | dq | w``.
"""
from __future__ import annotations

import enum
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

N_JOINTS = 31
N_WRENCH = 12
N_FEATURES = 2 * N_JOINTS + N_WRENCH  # 74
N_MOTION = N_JOINTS + N_WRENCH  # 43, velocities are not predicted

SAMPLE_RATE = 100.0
DT = 1.0 / SAMPLE_RATE
WINDOW_LEN = 10
SPACING = 3
HORIZON = 50
WARMUP = (WINDOW_LEN - 1) * SPACING  # 27 raw frames before the first anchor

# columns of the 74-vector that make up the 43 motion features
MOTION_COLUMNS = np.r_[0:N_JOINTS, 2 * N_JOINTS:N_FEATURES]


class ActionLabel(enum.IntEnum):
    STANDING = 0
    SQUATTING = 1
    RISING = 2

    @property
    def text(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value) -> "ActionLabel":
        if isinstance(value, ActionLabel):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ValueError(f"unknown action label {value!r}") from None
        return cls(int(value))


N_ACTIONS = len(ActionLabel)


class FrameError(ValueError):
    """A frame violates one of the StateFrame invariants."""


@dataclass(frozen=True)
class StateFrame:
    t: float
    q: np.ndarray
    dq: np.ndarray
    w: np.ndarray
    label: ActionLabel | None = None

    def __post_init__(self):
        for name in ("q", "dq", "w"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "t", float(self.t))
        if self.label is not None:
            object.__setattr__(self, "label", ActionLabel.parse(self.label))

    @property
    def features(self) -> np.ndarray:
        return flatten_frame(self)

    def motion(self) -> np.ndarray:
        """The 43 predicted quantities: joint angles followed by wrenches."""
        return np.concatenate([self.q, self.w])


def flatten_frame(frame: StateFrame) -> np.ndarray:
    return np.concatenate([frame.q, frame.dq, frame.w])


def unflatten_frame(t: float, features, label=None) -> StateFrame:
    x = np.asarray(features, dtype=float)
    if x.shape != (N_FEATURES,):
        raise FrameError(f"feature count: expected {N_FEATURES}, got {x.shape}")
    return StateFrame(
        t,
        x[:N_JOINTS],
        x[N_JOINTS:2 * N_JOINTS],
        x[2 * N_JOINTS:],
        label,
    )


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def validate_frame(frame: StateFrame, previous_t: float | None = None) -> Verdict:
    """Check a frame against the StateFrame invariants.

    ``previous_t`` enables the stream-context check that timestamps strictly
    increase.  The first violated invariant is reported.
    """
    sizes = (np.size(frame.q), np.size(frame.dq), np.size(frame.w))
    if sizes != (N_JOINTS, N_JOINTS, N_WRENCH):
        return Verdict(False, f"feature count: got q={sizes[0]}, dq={sizes[1]}, w={sizes[2]}")
    if not math.isfinite(frame.t):
        return Verdict(False, "non-finite timestamp")
    for name in ("q", "dq", "w"):
        arr = getattr(frame, name)
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            return Verdict(False, f"non-finite value in {name}[{bad}]")
    if previous_t is not None and not frame.t > previous_t:
        return Verdict(False, f"non-monotone timestamp: {frame.t} after {previous_t}")
    return Verdict(True)


@dataclass(frozen=True)
class InputWindow:
    frames: tuple[StateFrame, ...]
    indices: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.frames) != WINDOW_LEN:
            raise ValueError(f"window needs {WINDOW_LEN} frames, got {len(self.frames)}")

    @property
    def anchor_time(self) -> float:
        return self.frames[-1].t

    @property
    def spacing(self) -> int:
        return SPACING

    def features(self) -> np.ndarray:
        """(10, 74) array, oldest frame first."""
        return np.stack([flatten_frame(f) for f in self.frames])


class WindowAssembler:
    """Ring buffer producing one window per incoming frame once 28 have arrived.

    Single writer: call :meth:`push` from one producer only.
    """

    def __init__(self, window: int = WINDOW_LEN, spacing: int = SPACING):
        self.window = window
        self.spacing = spacing
        self.span = (window - 1) * spacing + 1
        self._buf: deque[tuple[int, StateFrame]] = deque(maxlen=self.span)
        self._count = 0

    def push(self, frame: StateFrame) -> InputWindow | None:
        self._buf.append((self._count, frame))
        self._count += 1
        if len(self._buf) < self.span:
            return None
        picked = [self._buf[i] for i in range(0, self.span, self.spacing)]
        return InputWindow(tuple(f for _, f in picked), tuple(i for i, _ in picked))

    def reset(self):
        self._buf.clear()
        self._count = 0


def window_stream(stream: Iterable[StateFrame]) -> Iterator[InputWindow]:
    """Dense windows over a stream: one per anchor index k >= 27."""
    assembler = WindowAssembler()
    for frame in stream:
        win = assembler.push(frame)
        if win is not None:
            yield win


def window_indices(n_frames: int, window: int = WINDOW_LEN, spacing: int = SPACING) -> np.ndarray:
    """Raw stream indices of every dense window, shape (n_windows, window)."""
    first = (window - 1) * spacing
    anchors = np.arange(first, n_frames)
    return anchors[:, None] + spacing * np.arange(-(window - 1), 1)[None, :]


# -- frame stream file format -------------------------------------------------
# One JSON object per line: {"t": .., "q": [31], "dq": [31], "w": [12], "label": ..}.
# json writes floats with repr(), i.e. the shortest string that round-trips, so
# the format is lossless (and always carries enough significant digits).


def frame_to_record(frame: StateFrame) -> dict:
    rec = {
        "t": frame.t,
        "q": [float(v) for v in frame.q],
        "dq": [float(v) for v in frame.dq],
        "w": [float(v) for v in frame.w],
    }
    if frame.label is not None:
        rec["label"] = frame.label.text
    return rec


def frame_from_record(rec: dict) -> StateFrame:
    try:
        return StateFrame(rec["t"], rec["q"], rec["dq"], rec["w"], rec.get("label"))
    except KeyError as exc:
        raise FrameError(f"missing field {exc.args[0]!r}") from None


def write_frames(frames: Iterable[StateFrame], fh: IO[str]) -> int:
    n = 0
    for frame in frames:
        fh.write(json.dumps(frame_to_record(frame), separators=(",", ":")))
        fh.write("\n")
        n += 1
    return n


def read_frames(fh: IO[str]) -> Iterator[StateFrame]:
    """Parse a frame stream; malformed lines raise FrameError with the line number."""
    for lineno, line in enumerate(fh, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            yield frame_from_record(json.loads(line))
        except (ValueError, TypeError) as exc:
            raise FrameError(f"line {lineno}: {exc}") from None


@dataclass
class FrameArrays:
    """Column view of a frame sequence, convenient for vectorised work."""

    t: np.ndarray
    q: np.ndarray
    dq: np.ndarray
    w: np.ndarray
    labels: np.ndarray | None = None  # int codes, -1 when absent

    @classmethod
    def from_frames(cls, frames: Sequence[StateFrame]) -> "FrameArrays":
        labels = np.array([-1 if f.label is None else int(f.label) for f in frames], dtype=int)
        return cls(
            np.array([f.t for f in frames]),
            np.stack([f.q for f in frames]),
            np.stack([f.dq for f in frames]),
            np.stack([f.w for f in frames]),
            labels,
        )

    def __len__(self) -> int:
        return len(self.t)

    @property
    def features(self) -> np.ndarray:
        return np.concatenate([self.q, self.dq, self.w], axis=1)

    def frames(self) -> list[StateFrame]:
        out = []
        for k in range(len(self.t)):
            label = None
            if self.labels is not None and self.labels[k] >= 0:
                label = ActionLabel(int(self.labels[k]))
            out.append(StateFrame(self.t[k], self.q[k], self.dq[k], self.w[k], label))
        return out


@dataclass(frozen=True)
class MotionPrediction:
    """Network output for one window.

    ``motion`` is the probability-blended prediction in physical units,
    shape (50, 43); ``action_probs`` has shape (50, 3).  ``experts`` keeps the
    raw per-expert outputs (3, 50, 43) for training and diagnostics.
    """

    anchor_time: float
    action_probs: np.ndarray
    motion: np.ndarray
    experts: np.ndarray = field(repr=False, default=None)
    step_dt: float = SPACING * DT

    @property
    def horizon(self) -> int:
        return self.action_probs.shape[0]

    @property
    def joint_angles(self) -> np.ndarray:
        return self.motion[:, :N_JOINTS]

    @property
    def wrenches(self) -> np.ndarray:
        return self.motion[:, N_JOINTS:]

    def step_time(self, step: int) -> float:
        return self.anchor_time + (step + 1) * self.step_dt
