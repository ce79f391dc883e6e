"""Revised NIOSH Lifting Equation.

Multiplier closed forms and the frequency/coupling tables follow the NIOSH
applications manual (Waters et al., 1994).  Distances are centimeters, the
asymmetry angle is in degrees, frequency in lifts per minute.  The multiplier
functions accept scalars or numpy arrays.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

LOAD_CONSTANT = 23.0  # kg

TABLES_VERSION = "niosh-1994.1"


class Coupling(enum.Enum):
    GOOD = "good"
    FAIR = "fair"
    POOR = "poor"


class Duration(enum.Enum):
    SHORT = "1h"     # <= 1 hour
    MODERATE = "2h"  # <= 2 hours
    LONG = "8h"      # <= 8 hours


class CouplingMode(enum.Enum):
    PAPER_FLAT = "paper-flat"
    NIOSH_STANDARD = "niosh-standard"


class Rounding(enum.Enum):
    EXACT = "exact"
    TABLE_PARITY = "table-parity"


def _enum(cls, value):
    return value if isinstance(value, cls) else cls(value)


# Frequency multiplier table: lifts/min -> (V<75, V>=75) per duration.
FREQUENCY_TABLE = {
    "frequencies": (0.2, 0.5, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15),
    Duration.SHORT: (
        (1.00, 1.00), (0.97, 0.97), (0.94, 0.94), (0.91, 0.91), (0.88, 0.88),
        (0.84, 0.84), (0.80, 0.80), (0.75, 0.75), (0.70, 0.70), (0.60, 0.60),
        (0.52, 0.52), (0.45, 0.45), (0.41, 0.41), (0.37, 0.37), (0.00, 0.34),
        (0.00, 0.31), (0.00, 0.28),
    ),
    Duration.MODERATE: (
        (0.95, 0.95), (0.92, 0.92), (0.88, 0.88), (0.84, 0.84), (0.79, 0.79),
        (0.72, 0.72), (0.60, 0.60), (0.50, 0.50), (0.42, 0.42), (0.35, 0.35),
        (0.30, 0.30), (0.26, 0.26), (0.00, 0.23), (0.00, 0.21), (0.00, 0.00),
        (0.00, 0.00), (0.00, 0.00),
    ),
    Duration.LONG: (
        (0.85, 0.85), (0.81, 0.81), (0.75, 0.75), (0.65, 0.65), (0.55, 0.55),
        (0.45, 0.45), (0.35, 0.35), (0.27, 0.27), (0.22, 0.22), (0.18, 0.18),
        (0.00, 0.15), (0.00, 0.13), (0.00, 0.00), (0.00, 0.00), (0.00, 0.00),
        (0.00, 0.00), (0.00, 0.00),
    ),
}

# Coupling multiplier: (V<75, V>=75)
COUPLING_TABLE = {
    Coupling.GOOD: (1.00, 1.00),
    Coupling.FAIR: (0.95, 1.00),
    Coupling.POOR: (0.90, 0.90),
}


def dump_tables() -> dict:
    """The embedded constant tables in a JSON-friendly form."""
    return {
        "version": TABLES_VERSION,
        "load_constant_kg": LOAD_CONSTANT,
        "frequency": {
            "lifts_per_min": list(FREQUENCY_TABLE["frequencies"]),
            **{d.value: [list(row) for row in FREQUENCY_TABLE[d]] for d in Duration},
            "columns": ["V<75", "V>=75"],
        },
        "coupling": {c.value: list(v) for c, v in COUPLING_TABLE.items()},
    }


def horizontal_multiplier(H):
    H = np.asarray(H, dtype=float)
    with np.errstate(divide="ignore"):
        hm = np.where(H <= 25.0, 1.0, np.where(H <= 63.0, 25.0 / np.maximum(H, 25.0), 0.0))
    return hm[()] if hm.ndim == 0 else hm


def vertical_multiplier(V):
    V = np.asarray(V, dtype=float)
    vm = np.where(V <= 175.0, 1.0 - 0.003 * np.abs(V - 75.0), 0.0)
    vm = np.clip(vm, 0.0, 1.0)
    return vm[()] if vm.ndim == 0 else vm


def distance_multiplier(D):
    D = np.asarray(D, dtype=float)
    dm = np.where(D <= 25.0, 1.0, np.where(D <= 175.0, 0.82 + 4.5 / np.maximum(D, 25.0), 0.0))
    return dm[()] if dm.ndim == 0 else dm


def asymmetry_multiplier(A):
    A = np.asarray(A, dtype=float)
    am = np.where(A <= 135.0, 1.0 - 0.0032 * A, 0.0)
    return am[()] if am.ndim == 0 else am


class FrequencyOutOfRange(UserWarning):
    pass


def frequency_multiplier(F: float, duration=Duration.SHORT, V=0.0, *, return_flag=False):
    """Table lookup with linear interpolation between tabulated frequencies.

    Frequencies above 15 lifts/min clamp to the last row and raise a
    :class:`FrequencyOutOfRange` warning (also returned when ``return_flag``).
    """
    duration = _enum(Duration, duration)
    freqs = np.asarray(FREQUENCY_TABLE["frequencies"], dtype=float)
    col = 1 if V >= 75.0 else 0
    values = np.array([row[col] for row in FREQUENCY_TABLE[duration]])
    flagged = False
    if F < 0:
        raise ValueError(f"frequency must be nonnegative, got {F}")
    if F > freqs[-1]:
        warnings.warn(f"lift frequency {F}/min above table, clamped to {freqs[-1]}",
                      FrequencyOutOfRange, stacklevel=2)
        flagged = True
    fm = float(np.interp(F, freqs, values))
    return (fm, flagged) if return_flag else fm


def coupling_multiplier(coupling=Coupling.FAIR, V=0.0, mode=CouplingMode.PAPER_FLAT):
    coupling = _enum(Coupling, coupling)
    mode = _enum(CouplingMode, mode)
    if mode is CouplingMode.PAPER_FLAT:
        return COUPLING_TABLE[coupling][0]
    V = np.asarray(V, dtype=float)
    lo, hi = COUPLING_TABLE[coupling]
    cm = np.where(V >= 75.0, hi, lo)
    return cm[()] if cm.ndim == 0 else cm


def round2(x):
    """Round half up to two decimals, robust to binary representation (0.985 -> 0.99)."""
    x = np.asarray(x, dtype=float)
    r = np.floor(np.round(x * 100.0, 6) + 0.5) / 100.0
    return r[()] if r.ndim == 0 else r


@dataclass(frozen=True)
class NioshInput:
    H: float
    V: float
    D: float
    A: float = 0.0
    F: float = 7.0
    duration: Duration = Duration.SHORT
    coupling: Coupling = Coupling.FAIR
    payload: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "duration", _enum(Duration, self.duration))
        object.__setattr__(self, "coupling", _enum(Coupling, self.coupling))
        for name in ("H", "V", "D", "A", "F", "payload"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")


@dataclass(frozen=True)
class NioshResult:
    HM: float
    VM: float
    DM: float
    AM: float
    FM: float
    CM: float
    RWL: float
    LI: float
    LC: float = LOAD_CONSTANT
    frequency_clamped: bool = False

    @property
    def multipliers(self) -> tuple[float, ...]:
        return (self.HM, self.VM, self.DM, self.AM, self.FM, self.CM)


def lifting_index(payload, rwl_kg):
    """payload / RWL; 0 for no payload, +inf when RWL is 0 and payload > 0."""
    payload = np.asarray(payload, dtype=float)
    rwl_kg = np.asarray(rwl_kg, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        li = np.where(payload == 0.0, 0.0,
                      np.where(rwl_kg == 0.0, np.inf, payload / np.where(rwl_kg == 0.0, 1.0, rwl_kg)))
    return li[()] if li.ndim == 0 else li


def rwl(inp: NioshInput, rounding=Rounding.EXACT, coupling_mode=CouplingMode.PAPER_FLAT) -> NioshResult:
    """Recommended weight limit and lifting index for one lift geometry."""
    rounding = _enum(Rounding, rounding)
    fm, clamped = frequency_multiplier(inp.F, inp.duration, inp.V, return_flag=True)
    mults = [
        float(horizontal_multiplier(inp.H)),
        float(vertical_multiplier(inp.V)),
        float(distance_multiplier(inp.D)),
        float(asymmetry_multiplier(inp.A)),
        fm,
        float(coupling_multiplier(inp.coupling, inp.V, coupling_mode)),
    ]
    if rounding is Rounding.TABLE_PARITY:
        mults = [float(round2(m)) for m in mults]
    value = LOAD_CONSTANT
    for m in mults:
        value *= m
    return NioshResult(*mults, RWL=value, LI=float(lifting_index(inp.payload, value)),
                       frequency_clamped=clamped)


def lifting_index_series(H, V, D, payload, A=0.0, F=7.0, duration=Duration.SHORT,
                         coupling=Coupling.FAIR, rounding=Rounding.EXACT,
                         coupling_mode=CouplingMode.PAPER_FLAT):
    """Vectorised RWL/LI over arrays of H, V, D; returns ``(rwl, li)`` arrays.

    Uses the same multiplier functions and product order as :func:`rwl`.
    """
    rounding = _enum(Rounding, rounding)
    H, V, D = (np.asarray(x, dtype=float) for x in (H, V, D))
    freqs = FREQUENCY_TABLE["frequencies"]
    if F > freqs[-1]:
        warnings.warn(f"lift frequency {F}/min above table, clamped to {freqs[-1]}",
                      FrequencyOutOfRange, stacklevel=2)
    fm_lo = frequency_multiplier(min(F, freqs[-1]), duration, 0.0)
    fm_hi = frequency_multiplier(min(F, freqs[-1]), duration, 75.0)
    mults = [
        horizontal_multiplier(H),
        vertical_multiplier(V),
        distance_multiplier(D),
        np.broadcast_to(asymmetry_multiplier(A), H.shape),
        np.where(V >= 75.0, fm_hi, fm_lo),
        np.broadcast_to(coupling_multiplier(coupling, V, coupling_mode), H.shape),
    ]
    if rounding is Rounding.TABLE_PARITY:
        mults = [round2(m) for m in mults]
    value = np.full(H.shape, LOAD_CONSTANT)
    for m in mults:
        value = value * m
    return value, lifting_index(payload, value)
