"""FEMA and ZEMA loops, stepsize schedules, and randomized iterate selection.

One run executes T+1 iterations: draw a sample, form a stochastic (sub)gradient
or its two-point estimate, advance the EMA accumulator, then take a scaled
proximal step with metric diag(sqrt(v_hat)).  The reported iterate x_{t*} is
drawn before the loop with probability proportional to the stepsizes, so it
is captured in a single pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .accumulators import AccumulatorMode, DecaySchedule, EmaState, preset
from .errors import CapabilityError, DomainError, NonFiniteError
from .problems import CompositeProblem
from .rng import stream
from .vectors import as_vector
from .zeroth_order import estimate_gradient, sample_direction

__all__ = [
    "StepsizeSchedule",
    "RunTrace",
    "select_tstar",
    "fema_run",
    "zema_run",
    "sgd_baseline_run",
    "zsgd_baseline_run",
]


@dataclass(frozen=True)
class StepsizeSchedule:
    """Either alpha/sqrt(T+1) for all t, or an explicit positive sequence."""

    alpha: Optional[float] = None
    explicit: Optional[np.ndarray] = None

    @classmethod
    def constant_over_sqrt(cls, alpha: float) -> "StepsizeSchedule":
        if alpha <= 0.0 or not np.isfinite(alpha):
            raise DomainError("alpha must be a finite positive real")
        return cls(alpha=float(alpha))

    @classmethod
    def from_sequence(cls, seq) -> "StepsizeSchedule":
        arr = as_vector(seq, "stepsizes")
        if np.any(arr <= 0.0):
            raise DomainError("all stepsizes must be positive")
        return cls(explicit=arr)

    def values(self, T: int) -> np.ndarray:
        """The stepsize sequence alpha_0..alpha_T (length T+1)."""
        if T < 0:
            raise DomainError("T must be nonnegative")
        if self.explicit is not None:
            if self.explicit.shape[0] != T + 1:
                raise DomainError(
                    f"explicit schedule has {self.explicit.shape[0]} entries, need {T + 1}"
                )
            return self.explicit
        if self.alpha is None:
            raise DomainError("schedule has neither alpha nor an explicit sequence")
        return np.full(T + 1, self.alpha / np.sqrt(T + 1.0))


def select_tstar(stepsizes, rng) -> int:
    """Draw an index t with probability alpha_t / sum(alpha).

    ``rng`` is either a Generator or a seed label for a dedicated stream.
    """
    alphas = as_vector(stepsizes, "stepsizes")
    if alphas.shape[0] == 0:
        raise DomainError("stepsize sequence is empty")
    if np.any(alphas <= 0.0):
        raise DomainError("all stepsizes must be positive")
    gen = rng if isinstance(rng, np.random.Generator) else stream(rng, "tstar")
    return _draw_tstar(alphas, gen)


def _draw_tstar(alphas: np.ndarray, gen: np.random.Generator) -> int:
    cum = np.cumsum(alphas)
    r = gen.random() * cum[-1]
    idx = int(np.searchsorted(cum, r, side="right"))
    return min(idx, alphas.shape[0] - 1)


@dataclass
class RunTrace:
    """Per-run record: stepsizes, the selected iterate, and optional logs."""

    stepsizes: np.ndarray
    tstar: int
    x_tstar: np.ndarray
    vhat_tstar: np.ndarray
    x_final: np.ndarray
    seed: object
    mu: Optional[float] = None
    epoch_length: Optional[int] = None
    objective_epochs: Optional[np.ndarray] = None
    store_every: int = 0
    iterates: Optional[np.ndarray] = None
    grad_l1: Optional[np.ndarray] = None
    vhat_sqrt_l1: Optional[np.ndarray] = None
    final_state: Optional[dict] = None

    @property
    def T(self) -> int:
        return self.stepsizes.shape[0] - 1


def fema_run(
    problem: CompositeProblem,
    schedule: DecaySchedule,
    steps: StepsizeSchedule,
    T: int,
    x0,
    seed,
    *,
    mode: AccumulatorMode = AccumulatorMode.EMA,
    q=None,
    epoch_length: Optional[int] = None,
    store_every: int = 0,
    record_norms: bool = False,
) -> RunTrace:
    """Run the first-order loop for T+1 iterations; deterministic given seed."""
    return _run_loop(
        problem, schedule, steps, T, x0, seed,
        mode=mode, q=q, mu=None, zeroth=False,
        epoch_length=epoch_length, store_every=store_every, record_norms=record_norms,
    )


def zema_run(
    problem: CompositeProblem,
    schedule: DecaySchedule,
    steps: StepsizeSchedule,
    T: int,
    x0,
    seed,
    *,
    mu: Optional[float] = None,
    mode: AccumulatorMode = AccumulatorMode.EMA,
    q=None,
    epoch_length: Optional[int] = None,
    store_every: int = 0,
    record_norms: bool = False,
) -> RunTrace:
    """Zeroth-order loop: the gradient is replaced by the two-point estimate.

    ``mu`` defaults to d/sqrt(T+1).  Each iteration consumes one sample index,
    one direction, and exactly two value-oracle calls.
    """
    if mu is None:
        mu = problem.dim / np.sqrt(T + 1.0)
    if mu <= 0.0:
        raise DomainError("mu must be positive")
    return _run_loop(
        problem, schedule, steps, T, x0, seed,
        mode=mode, q=q, mu=float(mu), zeroth=True,
        epoch_length=epoch_length, store_every=store_every, record_norms=record_norms,
    )


def sgd_baseline_run(problem, steps, T, x0, seed, **kwargs) -> RunTrace:
    """Proximal SGD: the identity-accumulator member of the family, q = 1."""
    p = preset("SGD")
    return fema_run(problem, p.schedule, steps, T, x0, seed,
                    mode=p.mode, q=np.full(problem.dim, p.q_fill), **kwargs)


def zsgd_baseline_run(problem, steps, T, x0, seed, *, mu=None, **kwargs) -> RunTrace:
    """Zeroth-order proximal SGD baseline."""
    p = preset("SGD")
    return zema_run(problem, p.schedule, steps, T, x0, seed, mu=mu,
                    mode=p.mode, q=np.full(problem.dim, p.q_fill), **kwargs)


def _run_loop(problem, schedule, steps, T, x0, seed, *, mode, q, mu, zeroth,
              epoch_length, store_every, record_norms) -> RunTrace:
    x = as_vector(x0, "x0").copy()
    if x.shape[0] != problem.dim:
        raise DomainError(f"x0 has length {x.shape[0]}, problem dimension is {problem.dim}")
    if problem.regularizer.value(x) == float("inf"):
        raise DomainError("x0 must lie in the domain of the regularizer")
    n = problem.n_samples
    if n is None:
        raise CapabilityError("runs require a finite sample space")
    d = problem.dim

    alphas = steps.values(T)
    tstar = _draw_tstar(alphas, stream(seed, "tstar"))
    gen_xi = stream(seed, "xi")
    gen_u = stream(seed, "u") if zeroth else None

    if q is None:
        # v_hat starts at the problem's weak-convexity metric diagonal
        q = problem.metric.q
    state = EmaState.fresh(np.asarray(q, dtype=np.float64), mode)

    x_ts = None
    vhat_ts = None
    obj_epochs = [] if epoch_length else None
    iterates = [x.copy()] if store_every else None
    grad_l1 = np.empty(T + 1) if record_norms else None
    vhat_sqrt_l1 = np.empty(T + 1) if record_norms else None

    for t in range(T + 1):
        xi = int(gen_xi.integers(0, n))
        if zeroth:
            u = sample_direction(d, gen_u)
            g = estimate_gradient(problem.value, x, xi, u, mu, d)
        else:
            g = problem.subgradient(x, xi)
        if not np.isfinite(g).all():
            raise NonFiniteError(f"stochastic gradient became non-finite at iteration {t}")
        state.update(g, schedule)
        if record_norms:
            grad_l1[t] = np.abs(g).sum()
            vhat_sqrt_l1[t] = np.sqrt(state.v_hat).sum()
        if t == tstar:
            x_ts = x.copy()
            vhat_ts = state.v_hat.copy()
        a_t = alphas[t]
        metric = np.sqrt(state.v_hat)
        y = x - a_t * (state.m / metric)
        x = problem.regularizer.prox(y, a_t, metric)
        if not np.isfinite(x).all():
            raise NonFiniteError(f"iterate became non-finite at iteration {t}")
        if store_every and (t + 1) % store_every == 0:
            iterates.append(x.copy())
        if epoch_length and (t + 1) % epoch_length == 0:
            obj_epochs.append(problem.composite_value(x))

    return RunTrace(
        stepsizes=alphas,
        tstar=tstar,
        x_tstar=x_ts,
        vhat_tstar=vhat_ts,
        x_final=x,
        seed=seed,
        mu=mu,
        epoch_length=epoch_length,
        objective_epochs=np.asarray(obj_epochs) if obj_epochs is not None else None,
        store_every=store_every,
        iterates=np.asarray(iterates) if iterates is not None else None,
        grad_l1=grad_l1,
        vhat_sqrt_l1=vhat_sqrt_l1,
        final_state=state.snapshot(),
    )
