"""Stochastic composite problems: oracles, instances, and generators.

A composite problem is f(x) + h(x) with f weakly convex and h a prox-friendly
regularizer.  Stochastic oracles take a sample index xi drawn uniformly from
[n]; averaging over all indices recovers the deterministic quantities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import CapabilityError, DimensionMismatchError, DomainError, NonFiniteError
from .regularizers import BoxConstraint, L1Penalty, Regularizer, ZeroRegularizer
from .rng import stream
from .vectors import DiagonalMetric, as_vector

__all__ = [
    "CompositeProblem",
    "PhaseRetrievalInstance",
    "generate_phase_retrieval",
    "save_instance",
    "load_instance",
    "make_test_quadratic",
    "make_l1_regression",
]


@dataclass(frozen=True)
class CompositeProblem:
    """f + h with stochastic value/subgradient oracles for f.

    ``rho`` is the weak-convexity constant of f measured in the metric
    ``metric`` (f + rho/2 * ||Q^(1/2) x||^2 is convex).  ``value`` and
    ``subgradient`` take (x, xi); ``objective`` is the deterministic f.
    ``model_prox``, when present, solves
    argmin_y f(y) + h(y) + 1/(2*zeta) ||M^(1/2)(y - x)||^2 exactly.
    """

    dim: int
    rho: float
    metric: DiagonalMetric
    regularizer: Regularizer
    n_samples: Optional[int]
    value: Callable[[np.ndarray, int], float]
    subgradient: Callable[[np.ndarray, int], np.ndarray]
    objective: Callable[[np.ndarray], float]
    full_subgradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lipschitz: Optional[float] = None
    model_prox: Optional[Callable] = None

    def composite_value(self, x) -> float:
        return float(self.objective(x)) + self.regularizer.value(x)


@dataclass(frozen=True)
class PhaseRetrievalInstance:
    """Measurements (a_i, b_i) with planted unit-norm signal x_star.

    The objective is the mean absolute residual of the squared measurements,
    f(x) = (1/n) sum_i |<a_i, x>^2 - b_i|; with noiseless targets f(x_star)
    is exactly zero and f(x) = f(-x) for all x.
    """

    a: np.ndarray
    b: np.ndarray
    x_star: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        xs = as_vector(self.x_star, "x_star")
        if a.ndim != 2:
            raise DimensionMismatchError("measurement matrix must be 2-d")
        if b.shape != (a.shape[0],):
            raise DimensionMismatchError("need one target per measurement row")
        if xs.shape != (a.shape[1],):
            raise DimensionMismatchError("signal length must match measurement length")
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            raise NonFiniteError("instance data contains non-finite entries")
        if np.any(b < 0.0):
            raise DomainError("targets are squared magnitudes and must be nonnegative")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "x_star", xs)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def d(self) -> int:
        return self.a.shape[1]

    @property
    def rho(self) -> float:
        """Weak-convexity constant (2/n) * sum_i ||a_i||^2 under the identity metric."""
        return float(2.0 * (self.a * self.a).sum() / self.n)

    def value(self, x, i) -> float:
        row = self.a[i]
        ip = (row * x).sum(axis=-1)
        return float(np.abs(ip * ip - self.b[i]))

    def subgradient(self, x, i) -> np.ndarray:
        # chain rule through |.|, taking 0 at the kink
        row = self.a[i]
        ip = (row * x).sum(axis=-1)
        s = np.sign(ip * ip - self.b[i])
        return (2.0 * s * ip) * row

    def objective(self, x) -> float:
        z = (self.a * x).sum(axis=-1)
        return float(np.abs(z * z - self.b).mean())

    def full_subgradient(self, x) -> np.ndarray:
        # same reduction order as averaging the per-index oracle, so the
        # finite-sum identity holds exactly
        z = (self.a * x).sum(axis=-1)
        s = np.sign(z * z - self.b)
        return ((2.0 * s * z)[:, None] * self.a).mean(axis=0)

    def lipschitz_in_ball(self, radius: float) -> float:
        """Upper bound on the per-sample value Lipschitz constant over ||x|| <= radius.

        This is an estimate tied to the ball, not a global constant: the
        per-sample slope is 2|<a_i, x>| ||a_i|| <= 2 radius max_i ||a_i||^2.
        """
        row_sq = (self.a * self.a).sum(axis=-1)
        return float(2.0 * radius * row_sq.max())

    def to_problem(self, regularizer: Regularizer | None = None, q=None) -> CompositeProblem:
        reg = regularizer if regularizer is not None else ZeroRegularizer()
        metric = DiagonalMetric(np.ones(self.d) if q is None else q)
        return CompositeProblem(
            dim=self.d,
            rho=self.rho,
            metric=metric,
            regularizer=reg,
            n_samples=self.n,
            value=self.value,
            subgradient=self.subgradient,
            objective=self.objective,
            full_subgradient=self.full_subgradient,
        )


def generate_phase_retrieval(d: int, n: int, seed) -> PhaseRetrievalInstance:
    """Gaussian measurements, unit-sphere signal, noiseless squared targets."""
    if d < 1 or n < 1:
        raise DomainError("need d >= 1 and n >= 1")
    a = stream(seed, "data").standard_normal((n, d))
    z = stream(seed, "signal").standard_normal(d)
    x_star = z / np.sqrt((z * z).sum(axis=-1))
    b = ((a * x_star).sum(axis=-1)) ** 2
    seed_int = seed if isinstance(seed, int) else None
    return PhaseRetrievalInstance(a=a, b=b, x_star=x_star, seed=seed_int)


def save_instance(inst: PhaseRetrievalInstance, path) -> None:
    """Write an instance in the flat text format (exact float round-trip)."""
    lines = ["phase-retrieval-instance v1"]
    lines.append(f"d {inst.d}")
    lines.append(f"n {inst.n}")
    lines.append(f"seed {inst.seed if inst.seed is not None else 'none'}")
    lines.append("x_star " + " ".join(repr(float(v)) for v in inst.x_star))
    for i in range(inst.n):
        lines.append(" ".join(repr(float(v)) for v in inst.a[i]) + " " + repr(float(inst.b[i])))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_instance(path) -> PhaseRetrievalInstance:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0].strip() != "phase-retrieval-instance v1":
        raise DomainError(f"{path}: not a phase-retrieval instance file")
    d = int(text[1].split()[1])
    n = int(text[2].split()[1])
    seed_tok = text[3].split()[1]
    seed = None if seed_tok == "none" else int(seed_tok)
    x_star = np.array([float(v) for v in text[4].split()[1:]])
    rows = [[float(v) for v in line.split()] for line in text[5 : 5 + n]]
    arr = np.array(rows)
    if arr.shape != (n, d + 1):
        raise DomainError(f"{path}: expected {n} rows of {d + 1} numbers")
    return PhaseRetrievalInstance(a=arr[:, :d], b=arr[:, d], x_star=x_star, seed=seed)


def make_test_quadratic(
    spectrum,
    linear,
    *,
    noise_scale: float = 0.0,
    n_samples: int = 64,
    seed=0,
    regularizer: Regularizer | None = None,
    q=None,
) -> CompositeProblem:
    """Diagonal quadratic f(x) = sum_i A_i x_i^2 + <c, x> with exact gradient.

    The stochastic oracle adds a bounded zero-mean perturbation drawn from a
    recentered table of ``n_samples`` vectors; ``noise_scale`` 0 makes the
    oracles deterministic.  Weak convexity under the identity metric is
    rho = max(0, -2 min_i A_i).  The model prox has a closed form for the
    zero, l1, and box regularizers.
    """
    A = as_vector(spectrum, "spectrum")
    c = as_vector(linear, "linear")
    if A.shape != c.shape:
        raise DimensionMismatchError("spectrum and linear term must have equal lengths")
    d = A.shape[0]
    reg = regularizer if regularizer is not None else ZeroRegularizer()

    delta = stream(seed, "quad-noise").uniform(-noise_scale, noise_scale, size=(n_samples, d))
    delta -= delta.mean(axis=0)

    def objective(x):
        return float((A * x * x).sum(axis=-1) + (c * x).sum(axis=-1))

    def gradient(x):
        return 2.0 * A * x + c

    def value(x, i):
        return objective(x) + float((delta[i] * x).sum(axis=-1))

    def subgradient(x, i):
        return gradient(x) + delta[i]

    model_prox = _quadratic_model_prox(A, c, reg)

    return CompositeProblem(
        dim=d,
        rho=float(max(0.0, -2.0 * A.min())),
        metric=DiagonalMetric(np.ones(d) if q is None else q),
        regularizer=reg,
        n_samples=n_samples,
        value=value,
        subgradient=subgradient,
        objective=objective,
        full_subgradient=gradient,
        model_prox=model_prox,
    )


def _quadratic_model_prox(A, c, reg):
    """Closed-form prox of the quadratic model for separable regularizers."""

    def prox(x, zeta, m):
        # per-coordinate minimizer of A y^2 + c y + h(y) + m (y-x)^2 / (2 zeta),
        # written so the zero-objective case reduces to the identity exactly
        denom = 1.0 + 2.0 * zeta * A / m
        if np.any(denom <= 0.0):
            raise DomainError("model prox requires zeta below the curvature limit")
        base = x - zeta * c / m
        if isinstance(reg, ZeroRegularizer):
            return base / denom
        if isinstance(reg, L1Penalty):
            thresh = zeta * reg.weight / m
            shrunk = np.sign(base) * np.maximum(np.abs(base) - thresh, 0.0)
            return shrunk / denom
        if isinstance(reg, BoxConstraint):
            return np.minimum(np.maximum(base / denom, reg.lower), reg.upper)
        raise CapabilityError(
            f"no closed-form model prox for regularizer {type(reg).__name__}"
        )

    if isinstance(reg, (ZeroRegularizer, L1Penalty, BoxConstraint)):
        return prox
    return None


def make_l1_regression(rows, targets, regularizer: Regularizer | None = None) -> CompositeProblem:
    """Convex nonsmooth f(x) = (1/m) ||Ax - b||_1 as a finite-sum problem."""
    a = np.asarray(rows, dtype=np.float64)
    b = np.asarray(targets, dtype=np.float64)
    if a.ndim != 2 or b.shape != (a.shape[0],):
        raise DimensionMismatchError("rows must be (m, d) with one target per row")
    reg = regularizer if regularizer is not None else ZeroRegularizer()
    m, d = a.shape

    def value(x, i):
        return float(np.abs((a[i] * x).sum(axis=-1) - b[i]))

    def subgradient(x, i):
        s = np.sign((a[i] * x).sum(axis=-1) - b[i])
        return s * a[i]

    def objective(x):
        return float(np.abs((a * x).sum(axis=-1) - b).mean())

    def full_subgradient(x):
        s = np.sign((a * x).sum(axis=-1) - b)
        return (s[:, None] * a).mean(axis=0)

    return CompositeProblem(
        dim=d,
        rho=0.0,
        metric=DiagonalMetric.identity(d),
        regularizer=reg,
        n_samples=m,
        value=value,
        subgradient=subgradient,
        objective=objective,
        full_subgradient=full_subgradient,
        lipschitz=float(np.sqrt((a * a).sum(axis=-1)).max()),
    )
