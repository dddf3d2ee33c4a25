"""Scaled Moreau envelope: prox points, envelope gradients, theory bounds.

For a weakly convex composite psi = f + h, a positive diagonal metric M, and
zeta below the inverse weak-convexity constant, the envelope

    env(x) = min_y  psi(y) + 1/(2*zeta) ||M^(1/2)(x - y)||^2

is differentiable with gradient zeta^{-1} M (x - prox(x)), and the size of
that gradient is the near-stationarity measure used by all the convergence
diagnostics here.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .accumulators import DecaySchedule
from .errors import CapabilityError, DomainError
from .optimizers import RunTrace, StepsizeSchedule
from .problems import CompositeProblem
from .vectors import DiagonalMetric, as_vector, metric_diag

__all__ = [
    "InnerCertificate",
    "StationarityReport",
    "effective_weak_convexity",
    "scaled_prox_point",
    "moreau_envelope_value",
    "moreau_gradient",
    "theory_bound",
]


@dataclass(frozen=True)
class InnerCertificate:
    """Termination record of the inner prox solver."""

    converged: bool
    iterations: int
    residual: float  # scaled distance between the last two inner iterates


@dataclass(frozen=True)
class StationarityReport:
    """Envelope gradient at x, with everything needed to audit it.

    The three near-stationarity facts are checkable from the fields:
    ||M (prox - x)|| = zeta * ||gradient|| holds by construction,
    psi_at_prox <= psi_at_x up to the inner tolerance, and the subgradient
    distance at the prox point is bounded by ||gradient||.
    """

    x: np.ndarray
    zeta: float
    metric: np.ndarray
    prox_point: np.ndarray
    gradient: np.ndarray
    grad_norm_sq: float
    psi_at_x: float
    psi_at_prox: float
    envelope_value: float
    inner: InnerCertificate


def effective_weak_convexity(problem: CompositeProblem, metric) -> float:
    """Weak-convexity constant of f transferred to the supplied metric.

    If f + rho/2 ||Q^(1/2) x||^2 is convex then f + r/2 ||M^(1/2) x||^2 is
    convex for any r with r*M >= rho*Q elementwise.
    """
    m = metric_diag(metric)
    ratio = problem.metric.q / m
    if problem.rho >= 0.0:
        return float(problem.rho * ratio.max())
    return float(problem.rho * ratio.min())


def scaled_prox_point(
    problem: CompositeProblem,
    x,
    zeta: float,
    metric,
    tol: float = 1e-9,
    max_iter: int = 5000,
    method: str = "auto",
):
    """Minimizer of psi(y) + 1/(2*zeta) ||M^(1/2)(x - y)||^2, with certificate.

    Uses the problem's exact model prox when available (method="auto"), or a
    deterministic proximal-subgradient iteration on the strongly convex model
    with stepsizes 2/((1/zeta - rho)(k + 2)), stopping when the scaled
    distance between successive iterates drops below ``tol``.
    """
    x = as_vector(x, "x")
    m = metric_diag(metric)
    if zeta <= 0.0:
        raise DomainError("zeta must be positive")
    rho_eff = effective_weak_convexity(problem, m)
    if zeta * rho_eff >= 1.0:
        raise DomainError(
            f"zeta = {zeta} is not below 1/rho = {1.0 / rho_eff if rho_eff > 0 else np.inf}"
            " under this metric; the prox subproblem is not strongly convex"
        )
    if method not in ("auto", "closed_form", "iterative"):
        raise DomainError(f"unknown method {method!r}")
    if method in ("auto", "closed_form") and problem.model_prox is not None:
        y = problem.model_prox(x, zeta, m)
        return y, InnerCertificate(converged=True, iterations=0, residual=0.0)
    if method == "closed_form":
        raise CapabilityError("problem does not supply a closed-form model prox")
    if problem.full_subgradient is None:
        raise CapabilityError("iterative prox needs a deterministic full subgradient")

    modulus = 1.0 / zeta - rho_eff
    y = x.copy()
    residual = float("inf")
    iterations = max_iter
    for k in range(max_iter):
        step = 2.0 / (modulus * (k + 2))
        grad = problem.full_subgradient(y) / m + (y - x) / zeta
        y_next = problem.regularizer.prox(y - step * grad, step, m)
        residual = float(np.sqrt((m * (y_next - y) ** 2).sum()))
        y = y_next
        if residual < tol:
            iterations = k + 1
            break
    return y, InnerCertificate(converged=residual < tol, iterations=iterations, residual=residual)


def moreau_envelope_value(problem, x, zeta, metric, **kwargs) -> float:
    """Envelope value at x, evaluated through the prox point."""
    x = as_vector(x, "x")
    m = metric_diag(metric)
    y, _ = scaled_prox_point(problem, x, zeta, m, **kwargs)
    quad = float((m * (x - y) ** 2).sum()) / (2.0 * zeta)
    return problem.composite_value(y) + quad


def moreau_gradient(problem, x, zeta, metric, **kwargs) -> StationarityReport:
    """Envelope gradient zeta^{-1} M (x - prox(x)) packaged as a report."""
    x = as_vector(x, "x")
    m = metric_diag(metric)
    y, cert = scaled_prox_point(problem, x, zeta, m, **kwargs)
    grad = (m * (x - y)) / zeta
    quad = float((m * (x - y) ** 2).sum()) / (2.0 * zeta)
    psi_x = problem.composite_value(x)
    psi_y = problem.composite_value(y)
    return StationarityReport(
        x=x,
        zeta=float(zeta),
        metric=m,
        prox_point=y,
        gradient=grad,
        grad_norm_sq=float((grad * grad).sum()),
        psi_at_x=psi_x,
        psi_at_prox=psi_y,
        envelope_value=psi_y + quad,
        inner=cert,
    )


# ---------------------------------------------------------------------------
# a-priori bounds on E ||grad env||^2 from the convergence theorems
# ---------------------------------------------------------------------------

_VARIANTS = ("projected_fema", "proximal_fema", "projected_zema", "proximal_zema")


def theory_bound(
    variant: str,
    *,
    rho: float,
    rho_bar: float,
    g_inf: float,
    d_inf: float,
    dim: int,
    T: int,
    schedule: DecaySchedule,
    steps: StepsizeSchedule,
    delta_psi: float = 0.0,
    mu: Optional[float] = None,
    lipschitz: Optional[float] = None,
    lambda_min_q: Optional[float] = None,
    trace: Optional[RunTrace] = None,
) -> float:
    """Worst-case bound on the expected squared envelope gradient at x_{t*}.

    A diagnostic, never a runtime control.  By default the moment sums are
    replaced by their closed-form bounds (dense-gradient worst case); passing
    a ``trace`` recorded with per-iteration norms switches to the empirical
    single-sample sums instead.
    """
    if variant not in _VARIANTS:
        raise DomainError(f"unknown variant {variant!r}; expected one of {_VARIANTS}")
    zeroth = variant.endswith("zema")
    proximal = variant.startswith("proximal")

    if rho_bar <= rho:
        raise DomainError("need rho_bar > rho")
    if proximal and rho_bar > 2.0 * rho:
        raise DomainError("proximal variants need rho_bar in (rho, 2*rho]")
    tau = schedule.tau
    if not tau < 1.0:
        raise DomainError("need tau = beta1/sqrt(beta2) < 1")
    if g_inf <= 0.0 or d_inf <= 0.0 or dim < 1:
        raise DomainError("g_inf, d_inf must be positive and dim >= 1")
    if zeroth:
        if mu is None or lipschitz is None:
            raise DomainError("zeroth-order bounds need mu and lipschitz")
        if mu <= 0.0 or lipschitz <= 0.0:
            raise DomainError("mu and lipschitz must be positive")
    if proximal and lambda_min_q is None:
        raise DomainError("proximal bounds need lambda_min_q")

    b1, b2, b3 = schedule.beta1, schedule.beta2, schedule.beta3
    # infinity-norm bound on the gradient estimates that feed the accumulator
    g_bound = dim * lipschitz if zeroth else g_inf

    alphas = steps.values(T)
    sum_a = float(alphas.sum())
    root = float(np.sqrt((1.0 - b2) * (1.0 - b3)))

    if proximal:
        if np.any(alphas > 1.0 / rho_bar):
            warnings.warn(
                "stepsizes exceed 1/rho_bar; the proximal guarantee assumes "
                "alpha_t <= 1/rho_bar", stacklevel=2,
            )
        c1_head = (2.0 / ((1.0 - tau) * (1.0 - b1)) + 1.0) * dim * g_bound / root
        c1 = c1_head + dim * g_bound**2 / lambda_min_q
    else:
        c1 = dim * g_bound / ((1.0 - tau) * (1.0 - b1) * root)

    if schedule.pi is not None:
        if schedule.pi >= 0.5:
            raise DomainError("the geometric-decay constant needs pi < 1/2")
        momentum_factor = b1**2 / (1.0 - 2.0 * schedule.pi) + 1.0
    else:
        momentum_factor = b1**2 * (T + 1) + 1.0
    c2 = 0.5 * dim * d_inf**2 * g_bound * momentum_factor

    if trace is not None:
        c1_sum, c2 = _trace_sums(trace, schedule, d_inf, proximal, dim, g_bound, lambda_min_q)
    else:
        c1_sum = float((alphas**2).sum()) * c1

    num = rho_bar * delta_psi + rho_bar**2 * (c1_sum + c2)
    den = (rho_bar - rho) * sum_a
    if not proximal:
        den *= 1.0 - b1
    bound = num / den

    if zeroth:
        c3 = 2.0 * mu * lipschitz
        extra = (rho_bar**2 if not proximal else rho_bar) * c3 / (rho_bar - rho)
        bound += extra
    return float(bound)


def _trace_sums(trace, schedule, d_inf, proximal, dim, g_bound, lambda_min_q):
    """Empirical sums sum_t alpha_t^2 C1_t and C2_T from a recorded trace."""
    if trace.grad_l1 is None or trace.vhat_sqrt_l1 is None:
        raise DomainError("trace was recorded without per-iteration norms")
    alphas = trace.stepsizes
    b1, b2, b3 = schedule.beta1, schedule.beta2, schedule.beta3
    tau = schedule.tau
    root = np.sqrt((1.0 - b2) * (1.0 - b3))
    T = alphas.shape[0] - 1

    # running geometric accumulator S_t = sum_k tau^(t-k) ||g_k||_1
    s = 0.0
    c1_sum = 0.0
    for t in range(T + 1):
        s = tau * s + trace.grad_l1[t]
        head = s / ((1.0 - b1) * root)
        if proximal:
            c1_t = 2.0 * head + dim * g_bound / root + dim * g_bound**2 / lambda_min_q
        else:
            c1_t = head
        c1_sum += alphas[t] ** 2 * c1_t

    betas = np.array([schedule.beta1_at(t) for t in range(T + 1)])
    c2 = 0.5 * d_inf**2 * float((betas**2 * trace.vhat_sqrt_l1).sum() + trace.vhat_sqrt_l1[-1])
    return float(c1_sum), c2
