"""Exponential-moving-average state shared by the adaptive subgradient loops.

The accumulator keeps the triple (m, v, v_hat): a first-moment average of
gradients, a second-moment average of squared gradients, and a max-corrected
second moment that is nondecreasing coordinatewise.  Fixing the decay
parameters recovers the usual family: (b1, 0, 0) is a running max of |g|
with momentum, (b1, b2, 0) is AMSGrad, beta1=0 is RMSProp, and the identity
mode is plain SGD.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NonFiniteError

__all__ = ["AccumulatorMode", "DecaySchedule", "EmaState", "Preset", "preset", "PRESET_NAMES"]

DEFAULT_Q_FILL = 1e-8


class AccumulatorMode(enum.Enum):
    # max-corrected recursion: v_hat_t = b3*v_hat_{t-1} + (1-b3)*max(v_hat_{t-1}, v_t)
    EMA = "ema"
    # plain second-moment average in place of v_hat (Adam); not monotone
    NO_MAX = "no_max"
    # m = g and v_hat = q forever (SGD)
    IDENTITY = "identity"


@dataclass(frozen=True)
class DecaySchedule:
    """Decay parameters (beta1_t, beta2, beta3) with beta1_t constant or geometric.

    Geometric mode uses beta1_t = beta1 * pi**(t-1) clamped to beta1, so the
    constraint beta1_t <= beta1 holds at t = 0 as well.
    """

    beta1: float
    beta2: float
    beta3: float
    pi: float | None = None  # None -> constant beta1_t = beta1

    def __post_init__(self):
        for name in ("beta1", "beta2", "beta3"):
            b = getattr(self, name)
            if not (0.0 <= b < 1.0):
                raise DomainError(f"{name} must lie in [0, 1), got {b}")
        if self.pi is not None and not (0.0 < self.pi < 1.0):
            raise DomainError(f"pi must lie in (0, 1), got {self.pi}")
        if self.beta2 > 0.0 and self.beta1 / np.sqrt(self.beta2) >= 1.0:
            warnings.warn(
                f"beta1/sqrt(beta2) = {self.beta1 / np.sqrt(self.beta2):.4f} >= 1; "
                "the convergence guarantees do not cover this schedule",
                stacklevel=2,
            )

    @property
    def tau(self) -> float:
        """beta1/sqrt(beta2); infinite when beta2 = 0 and beta1 > 0."""
        if self.beta2 > 0.0:
            return self.beta1 / float(np.sqrt(self.beta2))
        return 0.0 if self.beta1 == 0.0 else float("inf")

    def beta1_at(self, t: int) -> float:
        if self.pi is None:
            return self.beta1
        return min(self.beta1, self.beta1 * self.pi ** (t - 1))


@dataclass
class EmaState:
    """Mutable accumulator advanced once per stochastic gradient.

    Arrays may be (d,) for a single run or (R, d) for runs advanced in
    lockstep; every update is elementwise so the two behave identically.
    """

    m: np.ndarray
    v: np.ndarray
    v_hat: np.ndarray
    q: np.ndarray
    t: int
    mode: AccumulatorMode

    @classmethod
    def fresh(cls, q, mode: AccumulatorMode = AccumulatorMode.EMA) -> "EmaState":
        q = np.asarray(q, dtype=np.float64)
        if np.any(q <= 0.0):
            raise DomainError("v_hat initialization q must be strictly positive")
        zeros = np.zeros_like(q)
        return cls(m=zeros.copy(), v=zeros.copy(), v_hat=q.copy(), q=q.copy(), t=0, mode=mode)

    def update(self, g: np.ndarray, schedule: DecaySchedule) -> "EmaState":
        """Advance one step with gradient ``g``; returns self."""
        if not np.isfinite(g).all():
            raise NonFiniteError(f"gradient at step {self.t} contains non-finite entries")
        if self.mode is AccumulatorMode.IDENTITY:
            self.m = np.array(g, dtype=np.float64, copy=True)
            self.t += 1
            return self
        b1 = schedule.beta1_at(self.t)
        b2, b3 = schedule.beta2, schedule.beta3
        self.m = b1 * self.m + (1.0 - b1) * g
        self.v = b2 * self.v + (1.0 - b2) * (g * g)
        if self.mode is AccumulatorMode.NO_MAX:
            # Adam: v_hat follows the plain second moment, seeded at q so it
            # stays strictly positive
            self.v_hat = b2 * self.v_hat + (1.0 - b2) * (g * g)
        elif b3 == 0.0:
            # exact running max, so the AMSGrad reduction is bitwise
            self.v_hat = np.maximum(self.v_hat, self.v)
        else:
            # increment form of b3*v_hat + (1-b3)*max(v_hat, v): adding a
            # nonnegative term keeps monotonicity exact in floating point
            self.v_hat = self.v_hat + (1.0 - b3) * np.maximum(self.v - self.v_hat, 0.0)
        self.t += 1
        return self

    def snapshot(self) -> dict:
        """JSON-serializable state for checkpoint/resume."""
        return {
            "t": self.t,
            "mode": self.mode.value,
            "m": self.m.tolist(),
            "v": self.v.tolist(),
            "v_hat": self.v_hat.tolist(),
            "q": self.q.tolist(),
        }

    @classmethod
    def from_snapshot(cls, data: dict) -> "EmaState":
        return cls(
            m=np.asarray(data["m"], dtype=np.float64),
            v=np.asarray(data["v"], dtype=np.float64),
            v_hat=np.asarray(data["v_hat"], dtype=np.float64),
            q=np.asarray(data["q"], dtype=np.float64),
            t=int(data["t"]),
            mode=AccumulatorMode(data["mode"]),
        )


@dataclass(frozen=True)
class Preset:
    name: str
    schedule: DecaySchedule
    mode: AccumulatorMode
    q_fill: float = DEFAULT_Q_FILL


_PRESETS = {
    "FEMA1": Preset("FEMA1", DecaySchedule(0.9, 0.0, 0.0), AccumulatorMode.EMA),
    "FEMA2": Preset("FEMA2", DecaySchedule(0.9, 0.999, 0.0), AccumulatorMode.EMA),
    "FEMA3": Preset("FEMA3", DecaySchedule(0.9, 0.999, 0.9), AccumulatorMode.EMA),
    # AMSGrad is the beta3 = 0 member of the family
    "AMSGRAD": Preset("AMSGRAD", DecaySchedule(0.9, 0.999, 0.0), AccumulatorMode.EMA),
    "RMSPROP": Preset("RMSPROP", DecaySchedule(0.0, 0.999, 0.0), AccumulatorMode.EMA),
    # Adam drops the max correction; kept for comparison runs, no guarantee
    "ADAM": Preset("ADAM", DecaySchedule(0.9, 0.999, 0.0), AccumulatorMode.NO_MAX),
    "SGD": Preset("SGD", DecaySchedule(0.0, 0.0, 0.0), AccumulatorMode.IDENTITY, q_fill=1.0),
}

PRESET_NAMES = tuple(_PRESETS)


def preset(name: str) -> Preset:
    """Look up a named accumulator preset (case-insensitive)."""
    key = name.upper()
    if key not in _PRESETS:
        raise DomainError(f"unknown preset {name!r}; expected one of {sorted(_PRESETS)}")
    return _PRESETS[key]
