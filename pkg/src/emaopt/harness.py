"""Experiment orchestration: config files, sweeps, CSV output, traces.

A configuration names a problem, a set of algorithms, a stepsize grid, and
repetition/seeding rules.  ``run_experiment`` executes every (algorithm,
stepsize, repetition) run deterministically from the master seed, measures
the per-epoch objective gap and the final Moreau stationarity, and the
emitters write the delimited results plus summary.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import sweep
from .accumulators import preset
from .errors import CapabilityError, ConfigError, DomainError
from .moreau import effective_weak_convexity, moreau_gradient
from .optimizers import StepsizeSchedule, fema_run, zema_run
from .problems import (
    CompositeProblem,
    generate_phase_retrieval,
    make_test_quadratic,
)
from .regularizers import BoxConstraint, L1Penalty, Regularizer, ZeroRegularizer
from .rng import label_code, stream
from .sweep import BASE_PRESET, SweepRun, phase_retrieval_block, run_seed

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "RunRecord",
    "load_config",
    "default_config_path",
    "run_experiment",
    "emit_csv",
    "write_summary",
    "save_traces",
    "problem_from_trace",
]

CSV_HEADER = "algorithm,alpha,repetition,epoch,objective_gap,moreau_grad_norm_sq,tstar_index,seed"
SUMMARY_HEADER = "algorithm,alpha,mean_final_gap,mean_moreau_grad_norm_sq"
OUTPUT_ENV_VAR = "EMAOPT_OUTPUT_DIR"

_KNOWN_KEYS = {
    "problem": {
        "kind", "d", "n", "regularizer", "l1_weight", "box_lower", "box_upper",
        "spectrum", "linear", "noise_scale", "oracle_table",
    },
    "algorithms": {"names"},
    "grid": {"count", "min", "max", "spacing"},
    "run": {"epochs", "repetitions", "master_seed", "mu_rule", "mu", "output"},
}

MU_RULES = ("paper_experiment", "corollary", "explicit")


@dataclass
class ExperimentConfig:
    problem_kind: str
    d: int
    n: int
    algorithms: list[str]
    epochs: int
    grid_count: int
    grid_min: float
    grid_max: float
    grid_spacing: str
    repetitions: int
    master_seed: int
    mu_rule: str = "paper_experiment"
    mu_value: Optional[float] = None
    regularizer_kind: str = "zero"
    l1_weight: float = 0.0
    box_lower: Optional[float] = None
    box_upper: Optional[float] = None
    spectrum: Optional[list[float]] = None
    linear: Optional[list[float]] = None
    noise_scale: float = 0.0
    oracle_table: int = 64
    output: Optional[str] = None

    def validate(self) -> None:
        if self.problem_kind not in ("phase_retrieval", "quadratic"):
            raise ConfigError(f"unknown problem kind {self.problem_kind!r}")
        if self.problem_kind == "phase_retrieval":
            if self.d < 1 or self.n < 1:
                raise ConfigError("phase retrieval needs d >= 1 and n >= 1")
        else:
            if not self.spectrum or not self.linear:
                raise ConfigError("quadratic problems need spectrum and linear")
            if len(self.spectrum) != len(self.linear):
                raise ConfigError("spectrum and linear must have equal lengths")
            if min(self.spectrum) <= 0.0:
                raise ConfigError(
                    "quadratic harness runs need a strictly positive spectrum "
                    "so the optimality gap is well defined"
                )
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        for name in self.algorithms:
            if name not in BASE_PRESET:
                raise ConfigError(
                    f"unknown algorithm {name!r}; expected one of {sorted(BASE_PRESET)}"
                )
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigError("duplicate algorithm names")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.grid_count < 1:
            raise ConfigError("grid count must be >= 1")
        if not (self.grid_min > 0.0 and self.grid_max > 0.0):
            raise ConfigError("grid endpoints must be positive")
        if self.grid_count > 1 and not self.grid_min < self.grid_max:
            raise ConfigError("grid needs min < max")
        if self.grid_spacing not in ("linear", "log"):
            raise ConfigError(f"unknown grid spacing {self.grid_spacing!r}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.mu_rule not in MU_RULES:
            raise ConfigError(f"unknown mu rule {self.mu_rule!r}; expected one of {MU_RULES}")
        if self.mu_rule == "explicit" and (self.mu_value is None or self.mu_value <= 0.0):
            raise ConfigError("explicit mu rule needs a positive mu value")
        if self.regularizer_kind not in ("zero", "l1", "box"):
            raise ConfigError(f"unknown regularizer {self.regularizer_kind!r}")
        if self.regularizer_kind == "box" and (self.box_lower is None or self.box_upper is None):
            raise ConfigError("box regularizer needs box_lower and box_upper")

    def grid(self) -> np.ndarray:
        if self.grid_count == 1:
            return np.array([self.grid_min])
        if self.grid_spacing == "linear":
            return np.linspace(self.grid_min, self.grid_max, self.grid_count)
        return np.geomspace(self.grid_min, self.grid_max, self.grid_count)

    @property
    def total_iterations(self) -> int:
        """Stochastic draws per run; one epoch is n of them."""
        return self.epochs * self.n

    def resolve_mu(self) -> float:
        if self.mu_rule == "paper_experiment":
            return 10.0 / np.sqrt(self.total_iterations)
        if self.mu_rule == "corollary":
            return self.d / np.sqrt(self.total_iterations)
        return float(self.mu_value)

    def build_regularizer(self) -> Regularizer:
        if self.regularizer_kind == "zero":
            return ZeroRegularizer()
        if self.regularizer_kind == "l1":
            return L1Penalty(self.l1_weight)
        return BoxConstraint(
            np.full(self.d, self.box_lower), np.full(self.d, self.box_upper)
        )


def default_config_path() -> Path:
    """The bundled phase-retrieval reference configuration."""
    return Path(__file__).parent / "configs" / "paper_default.cfg"


def _parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def load_config(path) -> ExperimentConfig:
    """Parse and validate a sectioned key-value config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in parser[section]:
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
    for required in ("problem", "algorithms", "grid", "run"):
        if required not in parser:
            raise ConfigError(f"{path}: missing section [{required}]")

    prob = parser["problem"]
    grid = parser["grid"]
    run = parser["run"]
    try:
        cfg = ExperimentConfig(
            problem_kind=prob.get("kind", "phase_retrieval"),
            d=prob.getint("d", fallback=0),
            n=prob.getint("n", fallback=0),
            regularizer_kind=prob.get("regularizer", "zero"),
            l1_weight=prob.getfloat("l1_weight", fallback=0.0),
            box_lower=prob.getfloat("box_lower", fallback=None),
            box_upper=prob.getfloat("box_upper", fallback=None),
            spectrum=_parse_floats(prob.get("spectrum")) if prob.get("spectrum") else None,
            linear=_parse_floats(prob.get("linear")) if prob.get("linear") else None,
            noise_scale=prob.getfloat("noise_scale", fallback=0.0),
            oracle_table=prob.getint("oracle_table", fallback=64),
            algorithms=[tok.strip() for tok in parser["algorithms"]["names"].split(",") if tok.strip()],
            epochs=run.getint("epochs"),
            grid_count=grid.getint("count"),
            grid_min=grid.getfloat("min"),
            grid_max=grid.getfloat("max"),
            grid_spacing=grid.get("spacing", "linear"),
            repetitions=run.getint("repetitions"),
            master_seed=run.getint("master_seed"),
            mu_rule=run.get("mu_rule", "paper_experiment"),
            mu_value=run.getfloat("mu", fallback=None),
            output=run.get("output", fallback=None),
        )
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if cfg.problem_kind == "quadratic" and cfg.spectrum is not None:
        cfg.d = len(cfg.spectrum)
        cfg.n = cfg.oracle_table
    cfg.validate()
    return cfg


@dataclass
class RunRecord:
    """One completed run plus its stationarity measurement."""

    run: SweepRun
    zeta: float
    moreau_grad_norm_sq: float
    inner_iterations: int
    inner_converged: bool
    moreau_identity_grad_norm_sq: Optional[float] = None
    zeta_identity: Optional[float] = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[RunRecord]
    failures: list[tuple[str, str]] = field(default_factory=list)
    instance_seeds: list[int] = field(default_factory=list)

    def best_mean_curves(self) -> dict[str, np.ndarray]:
        """Per algorithm: pointwise-in-epoch min over alpha of the rep-mean gap."""
        curves = {}
        for algo in self.config.algorithms:
            per_alpha = []
            for gi in range(self.config.grid_count):
                gaps = [r.run.gaps for r in self.records
                        if r.run.algorithm == algo and r.run.grid_index == gi]
                if gaps:
                    per_alpha.append(np.mean(gaps, axis=0))
            if per_alpha:
                curves[algo] = np.min(per_alpha, axis=0)
        return curves

    def final_gaps(self, algo: str) -> np.ndarray:
        """Final-epoch gaps as a (grid, repetitions) array (NaN where failed)."""
        out = np.full((self.config.grid_count, self.config.repetitions), np.nan)
        for r in self.records:
            if r.run.algorithm == algo:
                out[r.run.grid_index, r.run.repetition] = r.run.gaps[-1]
        return out


def _instance_seed(master_seed: int, rep: int) -> int:
    return label_code((master_seed, "instance", rep))


def _initial_point(master_seed: int, rep: int, d: int) -> np.ndarray:
    z = stream(master_seed, "init", rep).standard_normal(d)
    return z / np.sqrt((z * z).sum(axis=-1))


def run_experiment(config: ExperimentConfig, progress: bool = False) -> ExperimentResult:
    """Execute the full sweep; deterministic given the master seed."""
    config.validate()
    if config.problem_kind == "phase_retrieval":
        return _run_phase_retrieval(config, progress)
    return _run_quadratic(config, progress)


def _note(progress, msg):
    if progress:
        import sys

        print(msg, file=sys.stderr, flush=True)


def _run_phase_retrieval(config, progress) -> ExperimentResult:
    reg = config.build_regularizer()
    inst_seeds = [_instance_seed(config.master_seed, rep) for rep in range(config.repetitions)]
    instances = [generate_phase_retrieval(config.d, config.n, s) for s in inst_seeds]
    x0s = [_initial_point(config.master_seed, rep, config.d) for rep in range(config.repetitions)]
    problems = [inst.to_problem(reg) for inst in instances]
    grid = config.grid()
    mu = config.resolve_mu()

    records: list[RunRecord] = []
    failures: list[tuple[str, str]] = []
    for algo in config.algorithms:
        _note(progress, f"[emaopt] running {algo}: {len(grid)} stepsizes x "
                        f"{config.repetitions} repetitions, {config.epochs} epochs")
        runs = phase_retrieval_block(
            algo, instances, x0s, grid, config.epochs, config.master_seed,
            mu=mu if algo.startswith("Z") else None, regularizer=reg,
        )
        for run in runs:
            key = f"{algo} alpha={run.alpha!r} rep={run.repetition}"
            if not run.ok:
                failures.append((key, f"iterate became non-finite in epoch {run.failed_epoch}"))
                continue
            try:
                records.append(_measure_run(problems[run.repetition], run))
            except (DomainError, CapabilityError) as exc:
                failures.append((key, f"stationarity measurement failed: {exc}"))
        _note(progress, f"[emaopt] {algo} done")
    return ExperimentResult(config=config, records=records,
                            failures=failures, instance_seeds=inst_seeds)


def _measure_run(problem: CompositeProblem, run: SweepRun, with_identity: bool = False) -> RunRecord:
    metric = np.sqrt(run.vhat_tstar)
    zeta = _default_zeta(problem, metric)
    report = moreau_gradient(problem, run.x_tstar, zeta, metric)
    rec = RunRecord(
        run=run,
        zeta=zeta,
        moreau_grad_norm_sq=report.grad_norm_sq,
        inner_iterations=report.inner.iterations,
        inner_converged=report.inner.converged,
    )
    if with_identity:
        zeta_id = _default_zeta(problem, np.ones(problem.dim))
        rec.zeta_identity = zeta_id
        rec.moreau_identity_grad_norm_sq = moreau_gradient(
            problem, run.x_tstar, zeta_id, np.ones(problem.dim)
        ).grad_norm_sq
    return rec


def _default_zeta(problem: CompositeProblem, metric: np.ndarray) -> float:
    """zeta = 1/(2 rho) shrunk when the metric makes the transfer constant larger."""
    rho_eff = effective_weak_convexity(problem, metric)
    rho_bar = 2.0 * max(problem.rho, rho_eff)
    if rho_bar <= 0.0:
        return 1.0  # convex problem: any positive zeta is admissible
    return 1.0 / rho_bar


def _run_quadratic(config, progress) -> ExperimentResult:
    reg = config.build_regularizer()
    problem = make_test_quadratic(
        config.spectrum, config.linear,
        noise_scale=config.noise_scale, n_samples=config.oracle_table,
        seed=_instance_seed(config.master_seed, 0), regularizer=reg,
    )
    # gap is measured against the unconstrained minimum of the quadratic
    A = np.asarray(config.spectrum)
    c = np.asarray(config.linear)
    psi_star = float((-c * c / (4.0 * A)).sum())
    grid = config.grid()
    mu = config.resolve_mu()
    T = config.total_iterations - 1

    records, failures = [], []
    for algo in config.algorithms:
        _note(progress, f"[emaopt] running {algo} (per-run path)")
        p = preset(BASE_PRESET[algo])
        zeroth = algo.startswith("Z")
        for gi, alpha in enumerate(config.grid()):
            for rep in range(config.repetitions):
                seed = run_seed(config.master_seed, algo, gi, rep)
                x0 = stream(config.master_seed, "init", rep).standard_normal(config.d)
                steps = StepsizeSchedule.constant_over_sqrt(alpha)
                kwargs = dict(mode=p.mode, epoch_length=config.n)
                key = f"{algo} alpha={alpha!r} rep={rep}"
                try:
                    if zeroth:
                        trace = zema_run(problem, p.schedule, steps, T, x0, seed,
                                         mu=mu, **kwargs)
                    else:
                        trace = fema_run(problem, p.schedule, steps, T, x0, seed, **kwargs)
                    run = SweepRun(
                        algorithm=algo, grid_index=gi, repetition=rep,
                        alpha=float(alpha), seed=seed, tstar=trace.tstar,
                        x_tstar=trace.x_tstar, vhat_tstar=trace.vhat_tstar,
                        x_final=trace.x_final,
                        gaps=trace.objective_epochs - psi_star,
                        mu=mu if zeroth else None,
                    )
                    records.append(_measure_run(problem, run))
                except (DomainError, CapabilityError, FloatingPointError, ValueError) as exc:
                    failures.append((key, str(exc)))
    return ExperimentResult(config=config, records=records, failures=failures,
                            instance_seeds=[_instance_seed(config.master_seed, 0)])


# ---------------------------------------------------------------------------
# delimited output
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_csv(result: ExperimentResult, path) -> Path:
    """Write per-epoch rows; deterministic order (algorithm, alpha, repetition, epoch)."""
    if not result.records:
        raise DomainError("no successful runs to write")
    path = Path(path)
    lines = [CSV_HEADER]
    for rec in _sorted_records(result):
        r = rec.run
        for e in range(r.gaps.shape[0]):
            lines.append(",".join([
                r.algorithm,
                _fmt(r.alpha),
                str(r.repetition),
                str(e + 1),
                _fmt(r.gaps[e]),
                _fmt(rec.moreau_grad_norm_sq),
                str(r.tstar),
                str(r.seed),
            ]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_summary(result: ExperimentResult, path) -> Path:
    """Per (algorithm, alpha): repetition means of final gap and stationarity."""
    if not result.records:
        raise DomainError("no successful runs to write")
    path = Path(path)
    lines = [SUMMARY_HEADER]
    cfg = result.config
    by_key: dict[tuple[str, int], list[RunRecord]] = {}
    for rec in _sorted_records(result):
        by_key.setdefault((rec.run.algorithm, rec.run.grid_index), []).append(rec)
    for algo in cfg.algorithms:
        for gi in range(cfg.grid_count):
            recs = by_key.get((algo, gi))
            if not recs:
                continue
            finals = np.array([r.run.gaps[-1] for r in recs])
            moreaus = np.array([r.moreau_grad_norm_sq for r in recs])
            lines.append(",".join([
                algo,
                _fmt(recs[0].run.alpha),
                _fmt(finals.mean()),
                _fmt(moreaus.mean()),
            ]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _sorted_records(result: ExperimentResult) -> list[RunRecord]:
    order = {name: i for i, name in enumerate(result.config.algorithms)}
    return sorted(
        result.records,
        key=lambda rec: (order[rec.run.algorithm], rec.run.grid_index, rec.run.repetition),
    )


def resolve_output_dir(cli_value, config: ExperimentConfig) -> Path:
    """CLI flag wins, then the environment override, then the config."""
    if cli_value:
        return Path(cli_value)
    env = os.environ.get(OUTPUT_ENV_VAR)
    if env:
        return Path(env)
    if config.output:
        return Path(config.output)
    raise ConfigError(
        "no output directory: pass --output-dir, set "
        f"{OUTPUT_ENV_VAR}, or add output= to [run]"
    )


# ---------------------------------------------------------------------------
# trace files for post-hoc stationarity evaluation
# ---------------------------------------------------------------------------


def save_traces(result: ExperimentResult, outdir) -> list[Path]:
    """One JSON per run with the selected iterate and both stationarity reports."""
    import json

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    paths = []
    for rec in _sorted_records(result):
        r = rec.run
        if rec.moreau_identity_grad_norm_sq is None and cfg.problem_kind == "phase_retrieval":
            inst = generate_phase_retrieval(cfg.d, cfg.n, result.instance_seeds[r.repetition])
            full = _measure_run(inst.to_problem(cfg.build_regularizer()), r, with_identity=True)
            rec.moreau_identity_grad_norm_sq = full.moreau_identity_grad_norm_sq
            rec.zeta_identity = full.zeta_identity
        payload = {
            "format": "emaopt-trace v1",
            "problem": _problem_descriptor(cfg, result.instance_seeds, r.repetition),
            "algorithm": r.algorithm,
            "alpha": r.alpha,
            "grid_index": r.grid_index,
            "repetition": r.repetition,
            "seed": r.seed,
            "mu": r.mu,
            "tstar": r.tstar,
            "x_tstar": r.x_tstar.tolist(),
            "vhat_tstar": r.vhat_tstar.tolist(),
            "x_final": r.x_final.tolist(),
            "stationarity": {
                "vhat_metric": {"zeta": rec.zeta, "grad_norm_sq": rec.moreau_grad_norm_sq},
                "identity_metric": {
                    "zeta": rec.zeta_identity,
                    "grad_norm_sq": rec.moreau_identity_grad_norm_sq,
                },
            },
        }
        p = outdir / f"{r.algorithm}_g{r.grid_index}_r{r.repetition}.json"
        p.write_text(json.dumps(payload, indent=1), encoding="utf-8")
        paths.append(p)
    return paths


def _problem_descriptor(cfg: ExperimentConfig, instance_seeds, rep: int) -> dict:
    desc = {
        "kind": cfg.problem_kind,
        "regularizer": cfg.regularizer_kind,
        "l1_weight": cfg.l1_weight,
        "box_lower": cfg.box_lower,
        "box_upper": cfg.box_upper,
    }
    if cfg.problem_kind == "phase_retrieval":
        desc.update({"d": cfg.d, "n": cfg.n, "instance_seed": instance_seeds[rep]})
    else:
        desc.update({
            "spectrum": cfg.spectrum, "linear": cfg.linear,
            "noise_scale": cfg.noise_scale, "oracle_table": cfg.oracle_table,
            "instance_seed": instance_seeds[0],
        })
    return desc


def problem_from_trace(descriptor: dict) -> CompositeProblem:
    """Rebuild the problem a trace was recorded on."""
    kind = descriptor["kind"]
    reg_kind = descriptor.get("regularizer", "zero")
    if reg_kind == "zero":
        reg = ZeroRegularizer()
    elif reg_kind == "l1":
        reg = L1Penalty(descriptor.get("l1_weight", 0.0))
    elif reg_kind == "box":
        d = descriptor["d"] if kind == "phase_retrieval" else len(descriptor["spectrum"])
        reg = BoxConstraint(np.full(d, descriptor["box_lower"]),
                            np.full(d, descriptor["box_upper"]))
    else:
        raise ConfigError(f"unknown regularizer {reg_kind!r} in trace")
    if kind == "phase_retrieval":
        inst = generate_phase_retrieval(
            descriptor["d"], descriptor["n"], descriptor["instance_seed"]
        )
        return inst.to_problem(reg)
    if kind == "quadratic":
        return make_test_quadratic(
            descriptor["spectrum"], descriptor["linear"],
            noise_scale=descriptor.get("noise_scale", 0.0),
            n_samples=descriptor.get("oracle_table", 64),
            seed=descriptor["instance_seed"], regularizer=reg,
        )
    raise ConfigError(f"unknown problem kind {kind!r} in trace")
