"""Two-point gradient estimation from function values.

The estimator perturbs along a uniform unit-sphere direction u and rescales
the forward difference:

    G_mu(x, xi, u) = (d / mu) * (F(x + mu*u, xi) - F(x, xi)) * u

Its expectation over u is the gradient of the ball-smoothed function
f_mu(x) = mean of f over the radius-mu ball around x.  The Monte Carlo
reference for f_mu lives here too, for tests only; optimizer code paths
never integrate over the ball.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, NonFiniteError

__all__ = ["sample_direction", "estimate_gradient", "smoothed_value_reference"]


def sample_direction(d: int, gen: np.random.Generator) -> np.ndarray:
    """Uniform unit-sphere direction via a normalized Gaussian draw."""
    if d < 1:
        raise DomainError("need d >= 1")
    z = gen.standard_normal(d)
    return z / np.sqrt((z * z).sum(axis=-1))


def estimate_gradient(value_oracle, x, xi, u, mu: float, dim: int | None = None) -> np.ndarray:
    """Two-point estimate of the smoothed gradient; exactly two oracle calls."""
    if mu <= 0.0:
        raise DomainError("smoothing radius mu must be positive")
    d = int(dim) if dim is not None else int(np.asarray(x).shape[-1])
    f_plus = value_oracle(x + mu * u, xi)
    f_base = value_oracle(x, xi)
    if not (np.isfinite(f_plus) and np.isfinite(f_base)):
        raise NonFiniteError("value oracle returned a non-finite number")
    return (d / mu) * (f_plus - f_base) * u


def smoothed_value_reference(f, x, mu: float, n_samples: int, gen: np.random.Generator):
    """Monte Carlo estimate of the ball-smoothed value f_mu(x).

    ``f`` must be vectorized: it maps an (m, d) array of points to (m,)
    values.  Points are drawn uniformly in the radius-mu ball by radial
    resampling of sphere directions.  Returns (estimate, standard_error).
    """
    if mu <= 0.0:
        raise DomainError("smoothing radius mu must be positive")
    if n_samples < 1:
        raise DomainError("need at least one sample")
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    z = gen.standard_normal((n_samples, d))
    z /= np.sqrt((z * z).sum(axis=-1))[:, None]
    radii = gen.random(n_samples) ** (1.0 / d)
    points = x + (mu * radii)[:, None] * z
    vals = np.asarray(f(points), dtype=np.float64)
    if vals.shape != (n_samples,):
        raise DomainError("f must map (m, d) points to (m,) values")
    if not np.isfinite(vals).all():
        raise NonFiniteError("f returned non-finite values inside the sampling ball")
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else float("inf")
    return est, se
