"""Dense float64 vectors and positive diagonal scaling metrics.

Vectors are plain one-dimensional numpy arrays.  The helpers here enforce
the two package-wide conventions: binary operations require equal lengths,
and non-finite values raise instead of propagating.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, DomainError, NonFiniteError

__all__ = [
    "as_vector",
    "check_same_length",
    "elementwise",
    "scaled_norm_sq",
    "DiagonalMetric",
]


def as_vector(x, name: str = "x") -> np.ndarray:
    """Validate and return ``x`` as a finite 1-d float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{name} contains non-finite entries")
    return arr


def check_same_length(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatchError(f"length mismatch: {a.shape[-1]} vs {b.shape[-1]}")


_ELEMENTWISE_OPS = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
    "max": np.maximum,
}


def elementwise(a, b, op: str) -> np.ndarray:
    """Coordinatewise add/sub/mul/div/max of two equal-length vectors."""
    va = as_vector(a, "a")
    vb = as_vector(b, "b")
    check_same_length(va, vb)
    if op not in _ELEMENTWISE_OPS:
        raise DomainError(f"unknown elementwise op {op!r}")
    if op == "div" and np.any(vb == 0.0):
        raise NonFiniteError("elementwise division by a zero coordinate")
    out = _ELEMENTWISE_OPS[op](va, vb)
    if not np.isfinite(out).all():
        raise NonFiniteError(f"elementwise {op} produced non-finite entries")
    return out


@dataclass(frozen=True)
class DiagonalMetric:
    """A positive diagonal matrix diag(q) defining scaled norms and proxes.

    Exposes the elementwise powers q^(1/2), q^(1/4) and their inverses; the
    entries must be strictly positive so all powers are well defined.
    """

    q: np.ndarray

    def __post_init__(self):
        q = as_vector(self.q, "q")
        if np.any(q <= 0.0):
            raise DomainError("metric diagonal must be strictly positive")
        object.__setattr__(self, "q", q)

    @classmethod
    def identity(cls, d: int) -> "DiagonalMetric":
        return cls(np.ones(int(d)))

    @classmethod
    def uniform(cls, d: int, value: float) -> "DiagonalMetric":
        return cls(np.full(int(d), float(value)))

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    @property
    def sqrt(self) -> np.ndarray:
        return np.sqrt(self.q)

    @property
    def quarter(self) -> np.ndarray:
        return self.q ** 0.25

    @property
    def inv_sqrt(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.q)

    @property
    def inv_quarter(self) -> np.ndarray:
        return self.q ** -0.25


def metric_diag(metric) -> np.ndarray:
    """Diagonal entries of a metric given as DiagonalMetric or a raw array.

    Raw arrays are trusted (hot loops construct them already validated).
    """
    if isinstance(metric, DiagonalMetric):
        return metric.q
    return np.asarray(metric, dtype=np.float64)


def scaled_norm_sq(x, metric, power: float = 0.5) -> float:
    """The squared scaled norm sum_i q_i^(2*power) * x_i^2.

    ``power`` selects between the two scalings used throughout: 1/2 gives
    ||Q^(1/2) x||^2 and 1/4 gives ||Q^(1/4) x||^2.
    """
    v = as_vector(x, "x")
    q = metric_diag(metric)
    check_same_length(v, q)
    if power == 0.5:
        weights = q
    elif power == 0.25:
        weights = np.sqrt(q)
    else:
        raise DomainError(f"power must be 1/2 or 1/4, got {power}")
    out = float((weights * v * v).sum())
    if not np.isfinite(out):
        raise NonFiniteError("scaled norm overflowed")
    return out
