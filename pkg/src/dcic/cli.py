"""Command-line front end.

Subcommands: ``tars`` and ``getars`` run experiment sweeps and write the
CSV plus JSON sidecar; ``fit`` runs one linear fit on CSV datasets;
``train`` fits the downstream classifier; ``estimate-q`` estimates a
flip-rate matrix from noisy data. A JSON config file (--config) overrides
the corresponding flags, except --seed which always wins.

Exit codes: 0 success, 1 when any repetition failed (its record carries
the error), 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .classifier import TrainConfig, train
from .data import TransitionMatrix, empirical_prior, read_dataset_csv
from .harness import (ExperimentConfig, emit_results, estimate_q_mlp,
                      run_experiment)
from .linear import LinearFitConfig, fit
from .noise import GammaWeights, gamma_weights
from .data import ClassPrior

CONFIG_ERRORS = (ValueError, OSError, KeyError, TypeError,
                 json.JSONDecodeError)


def _floats(text: str):
    return tuple(float(v) for v in text.split(","))


def _ints(text: str):
    return tuple(int(v) for v in text.split(","))


def _file_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return obj


def _run_sweep(args, scenario: str) -> int:
    kwargs: dict = {"scenario": scenario}
    if args.reps is not None:
        kwargs["repetitions"] = args.reps
    if args.out is not None:
        kwargs["out"] = args.out
    for flag, key in (("sizes", "sample_sizes"), ("rhos", "rho_grid"),
                      ("betas", "beta_grid")):
        val = getattr(args, flag)
        if val is not None:
            kwargs[key] = val
    if args.q_source is not None:
        kwargs["q_source"] = args.q_source
    if args.d_prime is not None:
        kwargs["d_prime"] = args.d_prime
    file_cfg = _file_config(args.config)
    file_cfg.pop("seed", None)  # --seed always wins over the file
    kwargs.update(file_cfg)
    if args.seed is not None:
        kwargs["seed"] = args.seed
    config = ExperimentConfig(**kwargs)

    records = run_experiment(config)
    out = config.out or f"{config.scenario}.csv"
    emit_results(records, out, config)
    failed = [r for r in records if r.error is not None]
    print(f"{len(records)} records -> {out} ({len(failed)} failed)")
    for r in failed[:10]:
        print(f"  failed: {r.method} rho={r.rho} beta1={r.beta1} "
              f"rep={r.rep}: {r.error}", file=sys.stderr)
    return 1 if failed else 0


def _cmd_tars(args) -> int:
    scenario = f"tars_{args.sweep}_sweep"
    return _run_sweep(args, scenario)


def _cmd_getars(args) -> int:
    return _run_sweep(args, "getars_accuracy")


def _merged(args, keys) -> dict:
    """flags -> dict, file config layered on top (seed exempt)."""
    out = {k: getattr(args, k) for k in keys if getattr(args, k) is not None}
    file_cfg = _file_config(args.config)
    file_cfg.pop("seed", None)
    out.update(file_cfg)
    if args.seed is not None:
        out["seed"] = args.seed
    return out


def _cmd_fit(args) -> int:
    opts = _merged(args, ("source", "target", "q", "mode", "d_prime"))
    source = read_dataset_csv(opts.pop("source"), label_kind="noisy")
    target = read_dataset_csv(opts.pop("target"))
    with open(opts.pop("q")) as fh:
        q = TransitionMatrix.from_json(fh.read())
    cfg = LinearFitConfig(d_prime=int(opts.pop("d_prime", 1)), **opts)
    result = fit(cfg, source, target, q)
    text = result.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text)
    return 0


def _cmd_train(args) -> int:
    opts = _merged(args, ("features", "q", "alpha"))
    data = read_dataset_csv(opts.pop("features"), label_kind="noisy")
    with open(opts.pop("q")) as fh:
        q = TransitionMatrix.from_json(fh.read())
    alpha = opts.pop("alpha", None)
    noisy_prior = empirical_prior(data.labels, q.n_classes)
    if alpha is None:
        gamma = GammaWeights(np.ones(q.n_classes))
    else:
        vec = np.asarray(alpha if isinstance(alpha, (list, tuple)) else _floats(alpha))
        gamma = gamma_weights(ClassPrior(vec), q, noisy_prior)
    cfg_fields = {k: v for k, v in opts.items()
                  if k in ("hidden_units", "learning_rate", "epochs",
                           "batch_size", "l2_coeff", "seed")}
    model = train(data.features, data.labels, q, gamma, TrainConfig(**cfg_fields))
    text = model.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text)
    return 0


def _cmd_estimate_q(args) -> int:
    opts = _merged(args, ("features", "percentile"))
    data = read_dataset_csv(opts.pop("features"), label_kind="noisy")
    q_hat = estimate_q_mlp(data.features, data.labels, data.n_classes,
                           seed=int(opts.get("seed", 0)),
                           percentile=float(opts.pop("percentile", 97.0)))
    text = q_hat.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcic",
        description="Label-noise-robust class-prior estimation and invariant "
                    "components across domains")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; overrides flags except --seed")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)

    p_tars = sub.add_parser("tars", help="prior-recovery sweeps (no covariate change)")
    p_tars.add_argument("--sweep", choices=("beta", "rho", "size"), default="beta")
    p_getars = sub.add_parser("getars", help="accuracy sweep with per-class location-scale change")
    for p in (p_tars, p_getars):
        common(p)
        p.add_argument("--reps", type=int, default=None)
        p.add_argument("--sizes", type=_ints, default=None)
        p.add_argument("--rhos", type=_floats, default=None)
        p.add_argument("--betas", type=_floats, default=None)
        p.add_argument("--q-source", dest="q_source", choices=("true", "estimated"), default=None)
        p.add_argument("--d-prime", dest="d_prime", type=int, default=None)
    p_tars.set_defaults(func=_cmd_tars)
    p_getars.set_defaults(func=_cmd_getars)

    p_fit = sub.add_parser("fit", help="one linear fit from CSV datasets")
    common(p_fit)
    p_fit.add_argument("--source", help="noisy labeled source CSV")
    p_fit.add_argument("--target", help="target CSV (labels ignored)")
    p_fit.add_argument("--q", help="flip-rate matrix JSON")
    p_fit.add_argument("--mode", choices=("dcic", "cic_baseline", "tars_fixed_w"), default=None)
    p_fit.add_argument("--d-prime", dest="d_prime", type=int, default=None)
    p_fit.set_defaults(func=_cmd_fit)

    p_train = sub.add_parser("train", help="train the corrected classifier")
    common(p_train)
    p_train.add_argument("--features", help="noisy labeled CSV")
    p_train.add_argument("--q", help="flip-rate matrix JSON")
    p_train.add_argument("--alpha", default=None,
                         help="target prior as comma-separated floats (enables reweighting)")
    p_train.set_defaults(func=_cmd_train)

    p_est = sub.add_parser("estimate-q", help="anchor-point flip-rate estimate")
    common(p_est)
    p_est.add_argument("--features", help="noisy labeled CSV")
    p_est.add_argument("--percentile", type=float, default=None)
    p_est.set_defaults(func=_cmd_estimate_q)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
