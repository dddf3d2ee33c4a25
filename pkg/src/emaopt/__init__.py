"""Adaptive EMA subgradient methods for weakly convex composite optimization.

The package provides the FEMA family of first-order methods and its
zeroth-order counterpart ZEMA, the scaled Moreau-envelope machinery used to
measure their stationarity, problem generators (robust phase retrieval and
synthetic test functions), and a reproducible benchmark harness with a CLI.
"""

from .accumulators import AccumulatorMode, DecaySchedule, EmaState, Preset, preset
from .errors import (
    CapabilityError,
    ConfigError,
    DimensionMismatchError,
    DomainError,
    NonFiniteError,
)
from .moreau import (
    InnerCertificate,
    StationarityReport,
    effective_weak_convexity,
    moreau_envelope_value,
    moreau_gradient,
    scaled_prox_point,
    theory_bound,
)
from .optimizers import (
    RunTrace,
    StepsizeSchedule,
    fema_run,
    select_tstar,
    sgd_baseline_run,
    zema_run,
    zsgd_baseline_run,
)
from .problems import (
    CompositeProblem,
    PhaseRetrievalInstance,
    generate_phase_retrieval,
    load_instance,
    make_l1_regression,
    make_test_quadratic,
    save_instance,
)
from .regularizers import (
    BallConstraint,
    BoxConstraint,
    L1Penalty,
    Regularizer,
    ZeroRegularizer,
    scaled_project,
)
from .rng import label_code, stream, stream_key
from .vectors import DiagonalMetric, elementwise, scaled_norm_sq
from .zeroth_order import estimate_gradient, sample_direction, smoothed_value_reference

__version__ = "0.1.0"

__all__ = [
    "AccumulatorMode",
    "BallConstraint",
    "BoxConstraint",
    "CapabilityError",
    "CompositeProblem",
    "ConfigError",
    "DecaySchedule",
    "DiagonalMetric",
    "DimensionMismatchError",
    "DomainError",
    "EmaState",
    "InnerCertificate",
    "L1Penalty",
    "NonFiniteError",
    "PhaseRetrievalInstance",
    "Preset",
    "Regularizer",
    "RunTrace",
    "StationarityReport",
    "StepsizeSchedule",
    "ZeroRegularizer",
    "effective_weak_convexity",
    "elementwise",
    "estimate_gradient",
    "fema_run",
    "generate_phase_retrieval",
    "label_code",
    "load_instance",
    "make_l1_regression",
    "make_test_quadratic",
    "moreau_envelope_value",
    "moreau_gradient",
    "preset",
    "sample_direction",
    "save_instance",
    "scaled_norm_sq",
    "scaled_project",
    "scaled_prox_point",
    "select_tstar",
    "sgd_baseline_run",
    "smoothed_value_reference",
    "stream",
    "stream_key",
    "theory_bound",
    "zema_run",
    "zsgd_baseline_run",
]
