"""Lockstep execution of a stepsize-grid sweep on phase retrieval.

All (stepsize, repetition) runs of one algorithm advance together as (R, d)
arrays; per-run random streams are identical to the ones the single-run
loops in :mod:`emaopt.optimizers` would consume, so a sweep run reproduces
the corresponding individual run bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .accumulators import EmaState, preset
from .errors import DomainError
from .optimizers import _draw_tstar
from .problems import PhaseRetrievalInstance
from .regularizers import Regularizer, ZeroRegularizer
from .rng import label_code, stream

__all__ = ["SweepRun", "phase_retrieval_block", "BASE_PRESET"]

CHUNK = 4096

# sweep algorithm names -> accumulator preset; Z* variants use the
# two-point estimator in place of the stochastic subgradient
BASE_PRESET = {
    "FEMA1": "FEMA1",
    "FEMA2": "FEMA2",
    "FEMA3": "FEMA3",
    "SGD": "SGD",
    "ZEMA1": "FEMA1",
    "ZEMA2": "FEMA2",
    "ZEMA3": "FEMA3",
    "ZSGD": "SGD",
}


@dataclass
class SweepRun:
    """Outcome of one (algorithm, stepsize, repetition) run."""

    algorithm: str
    grid_index: int
    repetition: int
    alpha: float
    seed: int
    tstar: int
    x_tstar: np.ndarray
    vhat_tstar: np.ndarray
    x_final: np.ndarray
    gaps: np.ndarray  # composite objective after each epoch
    mu: Optional[float]
    failed_epoch: Optional[int] = None

    @property
    def ok(self) -> bool:
        return self.failed_epoch is None


def run_seed(master_seed: int, algorithm: str, grid_index: int, repetition: int) -> int:
    """Derived integer seed identifying one run's random streams."""
    return label_code((master_seed, algorithm, grid_index, repetition))


def phase_retrieval_block(
    algorithm: str,
    instances: list[PhaseRetrievalInstance],
    x0s: list[np.ndarray],
    grid: np.ndarray,
    epochs: int,
    master_seed: int,
    mu: Optional[float] = None,
    regularizer: Optional[Regularizer] = None,
) -> list[SweepRun]:
    """Run every (stepsize, repetition) pair of one algorithm in lockstep."""
    if algorithm not in BASE_PRESET:
        raise DomainError(f"unknown sweep algorithm {algorithm!r}")
    zeroth = algorithm.startswith("Z")
    if zeroth and (mu is None or mu <= 0.0):
        raise DomainError("zeroth-order algorithms need a positive mu")
    reg = regularizer if regularizer is not None else ZeroRegularizer()

    reps = len(instances)
    if len(x0s) != reps:
        raise DomainError("need one initial point per repetition")
    n, d = instances[0].n, instances[0].d
    runs = [(gi, rep) for gi in range(len(grid)) for rep in range(reps)]
    R = len(runs)
    rep_idx = np.array([rep for _, rep in runs])
    alpha_of = np.array([grid[gi] for gi, _ in runs])
    seeds = [run_seed(master_seed, algorithm, gi, rep) for gi, rep in runs]

    T = epochs * n - 1
    a_run = alpha_of / np.sqrt(T + 1.0)
    step_col = a_run[:, None]

    A = np.stack([inst.a for inst in instances])
    B = np.stack([inst.b for inst in instances])
    X = np.stack([x0s[rep] for _, rep in runs]).astype(np.float64)

    p = preset(BASE_PRESET[algorithm])
    schedule = p.schedule
    # the benchmark problem's weak-convexity metric is the identity, so
    # v_hat starts at the all-ones vector for every algorithm
    state = EmaState.fresh(np.ones((R, d)), p.mode)

    tmap: dict[int, list[int]] = {}
    for r in range(R):
        ts = _draw_tstar(np.full(T + 1, a_run[r]), stream(seeds[r], "tstar"))
        tmap.setdefault(ts, []).append(r)
    tstars = {r: ts for ts, rows in tmap.items() for r in rows}

    gens_xi = [stream(s, "xi") for s in seeds]
    gens_u = [stream(s, "u") for s in seeds] if zeroth else None
    idx_buf = np.empty((R, CHUNK), dtype=np.int64)
    z_buf = np.empty((R, CHUNK, d)) if zeroth else None
    d_over_mu = d / mu if zeroth else None

    x_ts = np.zeros((R, d))
    vh_ts = np.ones((R, d))
    gaps = np.full((R, epochs), np.nan)
    failed_epoch = np.full(R, -1, dtype=np.int64)
    alive = np.ones(R, dtype=bool)

    for t in range(T + 1):
        k = t % CHUNK
        if k == 0:
            clen = min(CHUNK, T + 1 - t)
            for r in range(R):
                idx_buf[r, :clen] = gens_xi[r].integers(0, n, size=clen)
                if zeroth:
                    z_buf[r, :clen] = gens_u[r].standard_normal((clen, d))
        idx = idx_buf[:, k]
        arow = A[rep_idx, idx]
        brow = B[rep_idx, idx]
        if zeroth:
            z = z_buf[:, k, :]
            u = z / np.sqrt((z * z).sum(axis=-1))[:, None]
            xp = X + mu * u
            ip1 = (arow * xp).sum(axis=-1)
            f1 = np.abs(ip1 * ip1 - brow)
            ip0 = (arow * X).sum(axis=-1)
            f0 = np.abs(ip0 * ip0 - brow)
            g = (d_over_mu * (f1 - f0))[:, None] * u
        else:
            ip = (arow * X).sum(axis=-1)
            s = np.sign(ip * ip - brow)
            g = (2.0 * s * ip)[:, None] * arow
        bad = ~np.isfinite(g).all(axis=1)
        if bad.any():
            g[bad] = 0.0
        state.update(g, schedule)
        if t in tmap:
            for r in tmap[t]:
                x_ts[r] = X[r]
                vh_ts[r] = state.v_hat[r]
        metric = np.sqrt(state.v_hat)
        Y = X - step_col * (state.m / metric)
        X = reg.prox(Y, step_col, metric)
        if (t + 1) % n == 0:
            e = (t + 1) // n - 1
            finite = np.isfinite(X).all(axis=1)
            newly = alive & ~finite
            if newly.any():
                failed_epoch[newly] = e
                alive &= finite
                # park failed rows on benign values so NaNs stop spreading
                X[newly] = 0.0
                state.m[newly] = 0.0
                state.v[newly] = 0.0
                state.v_hat[newly] = 1.0
            for r in range(R):
                if alive[r]:
                    inst = instances[rep_idx[r]]
                    gaps[r, e] = float(inst.objective(X[r])) + reg.value(X[r])

    out = []
    for r, (gi, rep) in enumerate(runs):
        out.append(SweepRun(
            algorithm=algorithm,
            grid_index=gi,
            repetition=rep,
            alpha=float(grid[gi]),
            seed=seeds[r],
            tstar=tstars[r],
            x_tstar=x_ts[r].copy(),
            vhat_tstar=vh_ts[r].copy(),
            x_final=X[r].copy(),
            gaps=gaps[r].copy(),
            mu=mu,
            failed_epoch=int(failed_epoch[r]) if failed_epoch[r] >= 0 else None,
        ))
    return out
