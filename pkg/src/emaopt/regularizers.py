"""Convex regularizers with scaled proximal operators.

Each regularizer supplies ``value(x)`` and ``prox(x, step, metric)`` where
the prox solves

    argmin_y  h(y) + (1/(2*step)) * ||M^(1/2) (x - y)||^2

for a positive diagonal metric M.  Indicator kinds are step-invariant, so
their prox is the scaled projection onto the set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, DomainError
from .vectors import as_vector, metric_diag

__all__ = [
    "Regularizer",
    "ZeroRegularizer",
    "L1Penalty",
    "BoxConstraint",
    "BallConstraint",
    "scaled_project",
]

# relative slack for ball membership; radial scaling can overshoot by rounding
_BALL_MEMBERSHIP_SLACK = 1e-9


class Regularizer:
    """Base interface: a closed convex function with a scaled prox."""

    is_indicator = False

    def value(self, x) -> float:
        raise NotImplementedError

    def prox(self, x, step, metric) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroRegularizer(Regularizer):
    """The zero function; its prox is the identity."""

    def value(self, x) -> float:
        return 0.0

    def prox(self, x, step, metric) -> np.ndarray:
        return x


@dataclass(frozen=True)
class L1Penalty(Regularizer):
    """weight * ||x||_1, prox is coordinatewise soft-thresholding.

    Under metric M and step a the per-coordinate threshold is a*weight/M_ii;
    a coordinate exactly at its threshold maps to 0.
    """

    weight: float

    def __post_init__(self):
        if not np.isfinite(self.weight) or self.weight < 0.0:
            raise DomainError("l1 weight must be a finite nonnegative real")

    def value(self, x) -> float:
        return float(self.weight * np.abs(x).sum())

    def prox(self, x, step, metric) -> np.ndarray:
        thresh = step * self.weight / metric_diag(metric)
        return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)


@dataclass(frozen=True)
class BoxConstraint(Regularizer):
    """Indicator of {lower <= x <= upper}; prox is the coordinatewise clamp."""

    lower: np.ndarray
    upper: np.ndarray
    is_indicator = True

    def __post_init__(self):
        lo = as_vector(self.lower, "lower")
        hi = as_vector(self.upper, "upper")
        if lo.shape != hi.shape:
            raise DomainError("box bounds must have equal lengths")
        if np.any(lo > hi):
            raise DomainError("box requires lower <= upper elementwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def value(self, x) -> float:
        inside = np.all(x >= self.lower) and np.all(x <= self.upper)
        return 0.0 if inside else float("inf")

    def prox(self, x, step, metric) -> np.ndarray:
        # separable under any diagonal metric, and step-invariant
        return np.minimum(np.maximum(x, self.lower), self.upper)


@dataclass(frozen=True)
class BallConstraint(Regularizer):
    """Indicator of the Euclidean ball {||x|| <= radius}.

    Under a uniform metric the projection is the radial scaling.  Under a
    non-uniform diagonal metric there is no closed form; the multiplier of
    the dual problem is found by a 1-d Newton iteration.
    """

    radius: float
    is_indicator = True

    def __post_init__(self):
        if not np.isfinite(self.radius) or self.radius <= 0.0:
            raise DomainError("ball radius must be a finite positive real")

    def value(self, x) -> float:
        nrm = float(np.sqrt((np.asarray(x) ** 2).sum()))
        return 0.0 if nrm <= self.radius * (1.0 + _BALL_MEMBERSHIP_SLACK) else float("inf")

    def prox(self, x, step, metric) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise CapabilityError("ball projection supports single vectors only")
        nrm = float(np.sqrt((x * x).sum()))
        if nrm <= self.radius:
            return x
        m = metric_diag(metric)
        if np.all(m == m[0]):
            return x * (self.radius / nrm)
        return self._dual_newton(x, m)

    def _dual_newton(self, x, m, tol=1e-12, max_iter=100):
        # project under diag(m): y = m*x/(m+lam) with lam >= 0 chosen so that
        # ||y|| = radius; g(lam) is convex decreasing, so Newton from 0
        # increases monotonically toward the root
        r_sq = self.radius * self.radius
        lam = 0.0
        for _ in range(max_iter):
            denom = m + lam
            y = (m / denom) * x
            val = float((y * y).sum()) - r_sq
            if abs(val) <= tol * max(r_sq, 1.0):
                break
            deriv = float((-2.0 * m * m * x * x / denom**3).sum())
            lam -= val / deriv
        return (m / (m + lam)) * x


def scaled_project(constraint: Regularizer, x, metric) -> np.ndarray:
    """Scaled Euclidean projection onto an indicator regularizer's set."""
    if not constraint.is_indicator:
        raise CapabilityError("scaled_project requires an indicator regularizer")
    return constraint.prox(x, 1.0, metric)
