"""Experiment harness: seeded sweeps over (sample size, flip rate, class
ratio) cells, with the noise-corrected method and the noise-ignorant
baseline run side by side on identical data.

Every cell x repetition derives its own integer seed from the root seed by
spawn keys, so results are independent of execution order. Within one
repetition the child streams are, in order: 0 mixture spec, 1 source
sample, 2 label flips, 3 target sample, 4 location-scale draw (and the
flip-rate estimation seed), 5 fit seed, 6 classifier seed. Records carry
the derived seed, the fitted prior, and the priors used for the ratio, so
every reported number is recomputable.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from .classifier import TrainConfig, predict, predict_proba, train
from .data import (ClassPrior, Dataset, TransitionMatrix, empirical_prior,
                   symmetric_noise)
from .linear import LinearFitConfig, fit
from .noise import (GammaWeights, clean_prior_from_noisy,
                    estimate_transition_anchor, gamma_weights)
from .rng import child_generator, child_seed
from .synth import (SCALE_HIGH, SCALE_LOW, SHIFT_RANGE, apply_location_scale,
                    flip_labels, sample_dataset, sample_gmm_spec,
                    sample_location_scale)

SCENARIOS = ("tars_beta_sweep", "tars_rho_sweep", "tars_size_sweep",
             "getars_accuracy")
Q_SOURCES = ("true", "estimated")
METHODS = ("dcic", "cic")

SOURCE_PRIOR = np.array([0.5, 0.5])
N_CLASSES = 2
DIM = 2

CSV_COLUMNS = ("scenario", "rep", "seed", "rho", "beta1", "n_source",
               "n_target", "method", "beta_error", "alpha_error", "accuracy",
               "wall_time_s")

GETARS_FIT = dict(max_outer_iters=10, w_cg_iters=5, objective_tol=1e-9)
GETARS_TRAIN = dict(hidden_units=32, learning_rate=0.1, epochs=30,
                    batch_size=100, l2_coeff=1e-4)


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep. Unset grids fall back to the scenario's defaults.

    q_source 'true' hands methods the generating flip-rate matrix;
    'estimated' re-estimates it per repetition from the noisy source via
    anchor points on MLP posteriors. q_override (rows of a fixed matrix)
    bypasses both: data is still generated at each grid rho, but methods
    receive the override. beta1 is the target-to-source ratio of class 1,
    so the target prior is (0.5 * beta1, 1 - 0.5 * beta1).
    """

    scenario: str
    repetitions: int = 20
    sample_sizes: tuple | None = None
    rho_grid: tuple | None = None
    beta_grid: tuple | None = None
    q_source: str = "true"
    q_override: tuple | None = None
    d_prime: int = 1
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.q_source not in Q_SOURCES:
            raise ValueError(f"q_source must be one of {Q_SOURCES}")
        for name in ("sample_sizes", "rho_grid", "beta_grid"):
            val = getattr(self, name)
            if val is not None:
                if len(val) == 0:
                    raise ValueError(f"{name} must be nonempty when given")
                object.__setattr__(self, name, tuple(val))
        if self.q_override is not None:
            rows = tuple(tuple(float(v) for v in row) for row in self.q_override)
            TransitionMatrix(np.asarray(rows))  # validate early
            object.__setattr__(self, "q_override", rows)
        if self.d_prime < 1:
            raise ValueError("d_prime must be >= 1")


def scenario_defaults(scenario: str):
    """(sample_sizes, rho_grid, beta_grid) defaults per scenario."""
    betas_full = tuple(round(0.2 * k, 1) for k in range(1, 10))
    rhos_full = (0.0, 0.1, 0.2, 0.3, 0.4)
    if scenario == "tars_beta_sweep":
        return (500,), (0.4,), betas_full
    if scenario == "tars_rho_sweep":
        return (500,), rhos_full, (1.4,)
    if scenario == "tars_size_sweep":
        return (200, 500, 1000, 2000), (0.4,), (1.4,)
    if scenario == "getars_accuracy":
        return (500,), rhos_full, (1.4, 1.6, 1.8)
    raise ValueError(f"unknown scenario {scenario!r}")


def resolved_grids(config: ExperimentConfig):
    sizes, rhos, betas = scenario_defaults(config.scenario)
    return (config.sample_sizes or sizes, config.rho_grid or rhos,
            config.beta_grid or betas)


@dataclass
class MetricRecord:
    scenario: str
    rep: int
    seed: int
    rho: float
    beta1: float
    n_source: int
    n_target: int
    method: str
    beta_error: float
    alpha_error: float
    accuracy: float | None
    wall_time_s: float
    alpha: list | None = None
    ratio_prior: list | None = None  # denominator prior behind beta_est
    beta_star: list | None = None
    target_prior: list | None = None
    converged: bool | None = None
    w: list | None = None               # fitted projection, rows = input dims
    objective_trace: list | None = None
    error: str | None = None


def _safe_gamma(alpha: np.ndarray, q: TransitionMatrix,
                noisy_prior: ClassPrior) -> GammaWeights:
    # a fitted prior can sit exactly on a simplex vertex; nudge it inside
    a = np.maximum(alpha, 1e-9)
    return gamma_weights(ClassPrior(a / a.sum()), q, noisy_prior)


def estimate_q_mlp(features: np.ndarray, noisy_labels: np.ndarray,
                   n_classes: int, seed: int, percentile: float = 97.0,
                   train_cfg: TrainConfig | None = None) -> TransitionMatrix:
    """Flip-rate estimate from noisy data alone: fit the classifier with
    plain unweighted cross entropy (so the head approximates noisy-label
    posteriors), then read anchor rows at the given percentile."""
    if train_cfg is None:
        train_cfg = TrainConfig(hidden_units=32, learning_rate=0.1, epochs=30,
                                batch_size=100, l2_coeff=1e-4, seed=seed)
    identity = TransitionMatrix(np.eye(n_classes))
    flat = GammaWeights(np.ones(n_classes))
    model = train(features, noisy_labels, identity, flat, train_cfg)
    return estimate_transition_anchor(predict_proba(model, features), percentile)


def _method_q(config: ExperimentConfig, noisy: Dataset, seed: int,
              q_true: TransitionMatrix) -> TransitionMatrix:
    """The flip-rate matrix handed to the noise-corrected method."""
    if config.q_override is not None:
        return TransitionMatrix(np.asarray(config.q_override))
    if config.q_source == "estimated":
        return estimate_q_mlp(noisy.features, noisy.labels, N_CLASSES,
                              seed=child_seed(seed, 4))
    return q_true


def _beta_metrics(alpha_hat: np.ndarray, q_used: TransitionMatrix,
                  noisy_prior: ClassPrior, target_prior: ClassPrior):
    """(beta_error, alpha_error, ratio_prior, beta_star). The ratio prior
    is the method's own clean-source-prior estimate: inverting the flip
    rates it believes in (the identity, for the baseline)."""
    ratio_prior = clean_prior_from_noisy(noisy_prior, q_used)
    beta_est = alpha_hat / ratio_prior.p
    beta_star = target_prior.p / SOURCE_PRIOR
    beta_error = float(np.linalg.norm(beta_est - beta_star)
                       / np.linalg.norm(beta_star))
    alpha_error = float(np.abs(alpha_hat - target_prior.p).sum())
    return beta_error, alpha_error, ratio_prior, beta_star


def _failed_record(scenario, rep, seed, rho, beta1, n, method, msg,
                   with_accuracy):
    return MetricRecord(scenario, rep, seed, rho, beta1, n, n, method,
                        float("nan"), float("nan"),
                        float("nan") if with_accuracy else None,
                        0.0, error=msg)


def run_tars(config: ExperimentConfig) -> list:
    """Prior-recovery sweeps: no covariate change across domains, the
    projection pinned to the identity. Two records per repetition, one per
    method, on identical data."""
    if config.scenario == "getars_accuracy":
        raise ValueError("use run_getars for the accuracy scenario")
    sizes, rhos, betas = resolved_grids(config)
    records = []
    for si, n in enumerate(sizes):
        for ri, rho in enumerate(rhos):
            for bi, beta1 in enumerate(betas):
                for rep in range(config.repetitions):
                    seed = child_seed(config.seed, si, ri, bi, rep)
                    records.extend(_tars_rep(config, int(n), float(rho),
                                             float(beta1), rep, seed))
    return records


def _tars_rep(config, n, rho, beta1, rep, seed):
    scen = config.scenario
    try:
        q_true = symmetric_noise(N_CLASSES, rho)
        spec = sample_gmm_spec(N_CLASSES, DIM, child_generator(seed, 0))
        clean = sample_dataset(spec.with_priors(ClassPrior(SOURCE_PRIOR)), n,
                               child_generator(seed, 1))
        noisy = flip_labels(clean, q_true, child_generator(seed, 2))
        target_prior = ClassPrior([0.5 * beta1, 1.0 - 0.5 * beta1])
        target = sample_dataset(spec.with_priors(target_prior), n,
                                child_generator(seed, 3))
        q_method = _method_q(config, noisy, seed, q_true)
        noisy_prior = empirical_prior(noisy.labels, N_CLASSES)
    except Exception as exc:  # data generation failed: tag both arms
        return [_failed_record(scen, rep, seed, rho, beta1, n, m, str(exc), False)
                for m in METHODS]

    identity = TransitionMatrix(np.eye(N_CLASSES))
    records = []
    for method in METHODS:
        q_used = q_method if method == "dcic" else identity
        t0 = time.perf_counter()
        try:
            cfg = LinearFitConfig(d_prime=DIM, mode="tars_fixed_w", seed=seed)
            res = fit(cfg, noisy, target, q_used)
            b_err, a_err, ratio_prior, beta_star = _beta_metrics(
                res.alpha.p, q_used, noisy_prior, target_prior)
            records.append(MetricRecord(
                scen, rep, seed, rho, beta1, n, n, method, b_err, a_err, None,
                time.perf_counter() - t0, alpha=res.alpha.p.tolist(),
                ratio_prior=ratio_prior.p.tolist(), beta_star=beta_star.tolist(),
                target_prior=target_prior.p.tolist(), converged=res.converged,
                w=res.w.w.tolist(), objective_trace=list(res.objective_trace)))
        except Exception as exc:
            records.append(_failed_record(scen, rep, seed, rho, beta1, n,
                                          method, str(exc), False))
    return records


def run_getars(config: ExperimentConfig) -> list:
    """Full pipeline under class-conditional change: fit the invariant
    projection, train the downstream classifier on projected noisy source,
    score accuracy on clean-labeled target samples."""
    if config.scenario != "getars_accuracy":
        raise ValueError("run_getars expects the getars_accuracy scenario")
    sizes, rhos, betas = resolved_grids(config)
    records = []
    for si, n in enumerate(sizes):
        for ri, rho in enumerate(rhos):
            for bi, beta1 in enumerate(betas):
                for rep in range(config.repetitions):
                    seed = child_seed(config.seed, si, ri, bi, rep)
                    records.extend(_getars_rep(config, int(n), float(rho),
                                               float(beta1), rep, seed))
    return records


def _getars_rep(config, n, rho, beta1, rep, seed):
    scen = config.scenario
    try:
        q_true = symmetric_noise(N_CLASSES, rho)
        spec = sample_gmm_spec(N_CLASSES, DIM, child_generator(seed, 0))
        clean = sample_dataset(spec.with_priors(ClassPrior(SOURCE_PRIOR)), n,
                               child_generator(seed, 1))
        noisy = flip_labels(clean, q_true, child_generator(seed, 2))
        target_prior = ClassPrior([0.5 * beta1, 1.0 - 0.5 * beta1])
        target_clean = sample_dataset(spec.with_priors(target_prior), n,
                                      child_generator(seed, 3))
        shift = sample_location_scale(N_CLASSES, DIM, child_generator(seed, 4))
        target = apply_location_scale(target_clean, shift)
        q_method = _method_q(config, noisy, seed, q_true)
        noisy_prior = empirical_prior(noisy.labels, N_CLASSES)
    except Exception as exc:
        return [_failed_record(scen, rep, seed, rho, beta1, n, m, str(exc), True)
                for m in METHODS]

    identity = TransitionMatrix(np.eye(N_CLASSES))
    records = []
    for method in METHODS:
        q_used = q_method if method == "dcic" else identity
        mode = "dcic" if method == "dcic" else "cic_baseline"
        t0 = time.perf_counter()
        try:
            fit_cfg = LinearFitConfig(d_prime=config.d_prime, mode=mode,
                                      seed=child_seed(seed, 5), **GETARS_FIT)
            res = fit(fit_cfg, noisy, target, q_used)
            s_proj = noisy.features @ res.w.w
            t_proj = target.features @ res.w.w
            gamma = _safe_gamma(res.alpha.p, q_used, noisy_prior)
            train_cfg = TrainConfig(seed=child_seed(seed, 6), **GETARS_TRAIN)
            model = train(s_proj, noisy.labels, q_used, gamma, train_cfg)
            accuracy = float(np.mean(predict(model, t_proj) == target.labels))
            b_err, a_err, ratio_prior, beta_star = _beta_metrics(
                res.alpha.p, q_used, noisy_prior, target_prior)
            records.append(MetricRecord(
                scen, rep, seed, rho, beta1, n, n, method, b_err, a_err,
                accuracy, time.perf_counter() - t0, alpha=res.alpha.p.tolist(),
                ratio_prior=ratio_prior.p.tolist(), beta_star=beta_star.tolist(),
                target_prior=target_prior.p.tolist(), converged=res.converged,
                w=res.w.w.tolist(), objective_trace=list(res.objective_trace)))
        except Exception as exc:
            records.append(_failed_record(scen, rep, seed, rho, beta1, n,
                                          method, str(exc), True))
    return records


def run_experiment(config: ExperimentConfig) -> list:
    if config.scenario == "getars_accuracy":
        return run_getars(config)
    return run_tars(config)


def emit_results(records: list, path: str,
                 config: ExperimentConfig | None = None) -> None:
    """CSV with the fixed column order, plus a JSON sidecar at <path>.json
    holding the config and the full records (including per-record priors
    and any error tags)."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in records:
                writer.writerow([
                    r.scenario, r.rep, r.seed, repr(float(r.rho)),
                    repr(float(r.beta1)), r.n_source, r.n_target, r.method,
                    repr(float(r.beta_error)), repr(float(r.alpha_error)),
                    "" if r.accuracy is None else repr(float(r.accuracy)),
                    repr(float(r.wall_time_s)),
                ])
        sidecar = {
            "config": None if config is None else asdict(config),
            "location_scale_law": {"shift_range": SHIFT_RANGE,
                                   "scale_low": SCALE_LOW,
                                   "scale_high": SCALE_HIGH},
            "records": [asdict(r) for r in records],
        }
        with open(path + ".json", "w") as fh:
            json.dump(sidecar, fh, indent=1)
    except OSError as exc:
        raise OSError(f"writing results to {path!r} failed: {exc}") from exc
