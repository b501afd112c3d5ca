"""Command-line front end: fit, summarize, predict, cv, and simulate
subcommands with a declarative config file and reproducible outputs."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np
import yaml

from . import __version__
from .analysis import (compute_pips, format_contrast, indexwise_curve,
                       interaction_grid, overall_contrast)
from .comparators import named_configuration, qgc_fit
from .data import DataError, Dataset, StandardizationRecord, load_csv, standardize
from .kernels import NumericalError
from .likelihood import Hyperparameters
from .sampler import SamplerSettings, load_chain, run_chains, save_chain
from .simulation import (KernelMethod, QgcMethod, kfold_cv, run_simulation_study,
                         summarize_study)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    """Configuration file or flag problem."""


_DEFAULTS = {
    "data": {"path": None, "outcome": None, "exposures": None, "covariates": [],
             "standardize": True},
    "model": {"method": "bmim", "groups": None, "kernel": "gaussian",
              "degree": None, "q": 10},
    "hyper": {},
    "sampler": {},
    "output": {"dir": "bmim_out"},
}


def _deep_merge(base: dict, extra: dict) -> dict:
    out = {k: (v.copy() if isinstance(v, dict) else v) for k, v in base.items()}
    for key, val in (extra or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path: str | None, overrides: dict) -> dict:
    config = dict(_DEFAULTS)
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            try:
                loaded = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"could not parse config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config root must be a mapping of sections")
        config = _deep_merge(config, loaded)
    config = _deep_merge(config, overrides)
    return config


def _overrides_from_args(args) -> dict:
    """Map command-line flags (which win) onto config sections."""
    out: dict = {"data": {}, "model": {}, "sampler": {}, "output": {}}
    pairs = [
        ("data", "path", "data"), ("data", "outcome", "outcome"),
        ("model", "method", "method"), ("model", "groups", "groups"),
        ("model", "kernel", "kernel"), ("model", "degree", "degree"),
        ("model", "q", "q"),
        ("sampler", "iterations", "iters"), ("sampler", "burnin", "burnin"),
        ("sampler", "thin", "thin"), ("sampler", "chains", "chains"),
        ("sampler", "seed", "seed"),
        ("output", "dir", "out"),
    ]
    for section, key, attr in pairs:
        val = getattr(args, attr, None)
        if val is not None:
            out[section][key] = val
    if getattr(args, "exposures", None):
        out["data"]["exposures"] = [c.strip() for c in args.exposures.split(",")]
    if getattr(args, "covariates", None):
        out["data"]["covariates"] = [c.strip() for c in args.covariates.split(",")]
    return out


def _load_dataset(config: dict) -> Dataset:
    d = config["data"]
    if not d.get("path"):
        raise ConfigError("no data path configured (use --data or data.path)")
    if not os.path.exists(d["path"]):
        raise ConfigError(f"data file not found: {d['path']}")
    if not d.get("outcome"):
        raise ConfigError("no outcome column configured (data.outcome)")
    import pandas as pd

    header = list(pd.read_csv(d["path"], nrows=0).columns)
    if d["outcome"] not in header:
        raise DataError(f"column '{d['outcome']}' not found in {d['path']}")
    covariates = list(d.get("covariates") or [])
    exposures = d.get("exposures")
    if exposures is None:
        exposures = [c for c in header if c != d["outcome"] and c not in covariates]
    return load_csv(d["path"], d["outcome"], exposures, covariates)


def _kernel_kind(name: str) -> str:
    return {"poly": "polynomial"}.get(name, name)


def _model_pieces(config: dict, n_exposures: int):
    m = config["model"]
    degree = m.get("degree")
    kernel = _kernel_kind(m.get("kernel", "gaussian"))
    if kernel == "polynomial" and degree is None:
        degree = 2
    return named_configuration(m["method"], n_exposures, m.get("groups"),
                               kernel=kernel, degree=degree)


def _build(config: dict, cls, section: str):
    try:
        return cls(**(config.get(section) or {}))
    except (TypeError, DataError) as exc:
        raise ConfigError(f"bad [{section}] settings: {exc}") from exc


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_frame(frame, path: str) -> None:
    _atomic_write(path, frame.to_csv(index=False))


def _manifest(config: dict) -> dict:
    resolved = json.dumps(config, sort_keys=True, default=str)
    manifest = {
        "config": config,
        "config_sha256": hashlib.sha256(resolved.encode()).hexdigest(),
        "versions": {"bmim": __version__, "numpy": np.__version__},
    }
    path = config["data"].get("path")
    if path and os.path.exists(path):
        manifest["data_sha256"] = _sha256(path)
    return manifest


def _check_manifest(out_dir: str, config: dict) -> None:
    path = os.path.join(out_dir, "manifest.json")
    if not os.path.exists(path):
        return
    with open(path) as fh:
        stored = json.load(fh)
    data_path = config["data"].get("path")
    if data_path and os.path.exists(data_path) and "data_sha256" in stored:
        if stored["data_sha256"] != _sha256(data_path):
            print("warning: data file changed since the chain was fit "
                  "(manifest hash mismatch)", file=sys.stderr)


# -- subcommands ------------------------------------------------------------


def cmd_fit(config: dict) -> int:
    data = _load_dataset(config)
    out_dir = config["output"]["dir"]
    os.makedirs(out_dir, exist_ok=True)
    method = config["model"]["method"]
    if method == "qgc":
        fit = qgc_fit(data, int(config["model"].get("q", 10)))
        _write_frame(fit.weight_table(), os.path.join(out_dir, "qgc_weights.csv"))
        _atomic_write(os.path.join(out_dir, "qgc_summary.txt"), fit.summary() + "\n")
    else:
        index_spec, kernel_config = _model_pieces(config, data.n_exposures)
        hyper = _build(config, Hyperparameters, "hyper")
        settings = _build(config, SamplerSettings, "sampler")
        record = None
        if config["data"].get("standardize", True):
            X_std, record = standardize(data.X)
            data = Dataset(y=data.y, X=X_std, Z=data.Z,
                           exposure_names=data.exposure_names,
                           covariate_names=data.covariate_names,
                           outcome_name=data.outcome_name)
        chain = run_chains(data, index_spec, kernel_config, hyper, settings)
        extra = {"exposure_names": list(data.exposure_names),
                 "covariate_names": list(data.covariate_names)}
        if record is not None:
            extra["standardization"] = {"mean": [float(v) for v in record.mean],
                                        "sd": [float(v) for v in record.sd]}
        save_chain(chain, out_dir, exposure_names=data.exposure_names,
                   extra_meta=extra)
        summary = compute_pips(chain, index_spec)
        _write_frame(summary.table(index_spec, data.exposure_names),
                     os.path.join(out_dir, "weights.csv"))
    _atomic_write(os.path.join(out_dir, "manifest.json"),
                  json.dumps(_manifest(config), indent=1, sort_keys=True))
    return EXIT_OK


def _load_fit_artifacts(config: dict):
    out_dir = config["output"]["dir"]
    chain_path = os.path.join(out_dir, "chain.npy")
    if not os.path.exists(chain_path):
        raise ConfigError(f"no chain found in {out_dir}; run fit first")
    _check_manifest(out_dir, config)
    chain = load_chain(out_dir)
    data = _load_dataset(config)
    with open(os.path.join(out_dir, "chain_meta.json")) as fh:
        meta = json.load(fh)
    if "standardization" in meta:
        record = StandardizationRecord(
            mean=np.array([float(v) for v in meta["standardization"]["mean"]]),
            sd=np.array([float(v) for v in meta["standardization"]["sd"]]))
        data = Dataset(y=data.y, X=record.apply(data.X), Z=data.Z,
                       exposure_names=data.exposure_names,
                       covariate_names=data.covariate_names,
                       outcome_name=data.outcome_name)
    return chain, data, out_dir


def cmd_summarize(config: dict) -> int:
    chain, data, out_dir = _load_fit_artifacts(config)
    summary = compute_pips(chain, chain.index_spec)
    _write_frame(summary.table(chain.index_spec, data.exposure_names),
                 os.path.join(out_dir, "weights.csv"))
    for m in range(chain.index_spec.n_indices):
        if summary.index_pip[m] == 0.0:
            print(f"note: index {m + 1} never enters the model; "
                  "skipping its curve", file=sys.stderr)
            continue
        curve = indexwise_curve(chain, data, chain.index_spec,
                                chain.kernel_config, m)
        _write_frame(curve.frame(), os.path.join(out_dir, f"curve_index{m + 1}.csv"))
    return EXIT_OK


def cmd_predict(config: dict, q_hi: float, q_lo: float, interactions: bool) -> int:
    chain, data, out_dir = _load_fit_artifacts(config)
    import pandas as pd

    estimate, (lo, hi) = overall_contrast(chain, data, chain.index_spec,
                                          chain.kernel_config, q_hi, q_lo)
    frame = pd.DataFrame([{"estimate": estimate, "lower": lo, "upper": hi}])
    _write_frame(frame, os.path.join(out_dir, "contrast.csv"))
    print(f"contrast {q_hi:g} vs {q_lo:g}: {format_contrast(estimate, (lo, hi))}")
    if interactions and chain.index_spec.n_indices > 1:
        mm = chain.index_spec.n_indices
        for a in range(mm):
            for b in range(mm):
                if a == b:
                    continue
                try:
                    curves = interaction_grid(chain, data, chain.index_spec,
                                              chain.kernel_config, a, b)
                except DataError as exc:
                    print(f"note: {exc}", file=sys.stderr)
                    continue
                frames = [c.frame() for c in curves.values()]
                _write_frame(pd.concat(frames, ignore_index=True),
                             os.path.join(out_dir, f"interaction_m{a + 1}_m{b + 1}.csv"))
    return EXIT_OK


def cmd_cv(config: dict, k: int) -> int:
    data = _load_dataset(config)
    out_dir = config["output"]["dir"]
    os.makedirs(out_dir, exist_ok=True)
    method = _method_object(config)
    seed = int((config.get("sampler") or {}).get("seed", 0))
    score = kfold_cv(data, method, k, seed)
    import pandas as pd

    _write_frame(pd.DataFrame([{"method": config["model"]["method"], "k": k,
                                "cv_mse": score}]),
                 os.path.join(out_dir, "cv.csv"))
    print(f"{k}-fold CV MSE ({config['model']['method']}): {score:.4f}")
    return EXIT_OK


def _method_object(config: dict):
    m = config["model"]
    if m["method"] == "qgc":
        return QgcMethod(q=int(m.get("q", 10)))
    from .kernels import KernelConfig

    kernel = KernelConfig(kind=_kernel_kind(m.get("kernel", "gaussian")),
                          degree=m.get("degree"))
    return KernelMethod(kind=m["method"], groups=m.get("groups"), kernel=kernel,
                        hyper=_build(config, Hyperparameters, "hyper"),
                        settings=_build(config, SamplerSettings, "sampler"))


def cmd_simulate(config: dict, scenarios: list[str], methods: list[str],
                 replicates: int, sigma: float, n_train: int, n_test: int,
                 p: int, cv_folds: int | None, jobs: int) -> int:
    out_dir = config["output"]["dir"]
    os.makedirs(out_dir, exist_ok=True)
    settings = _build(config, SamplerSettings, "sampler")
    hyper = _build(config, Hyperparameters, "hyper")
    groups = config["model"].get("groups") or ("1-8;9-10;11-18" if p == 18
                                               else "1-4;5;6-9")
    table: dict = {}
    for name in methods:
        if name == "qgc":
            table[name] = QgcMethod(q=int(config["model"].get("q", 10)))
        else:
            table[name] = KernelMethod(kind=name, groups=groups, hyper=hyper,
                                       settings=settings)
    per_rep = run_simulation_study(scenarios, table, replicates, sigma,
                                   settings.seed, n_train=n_train, n_test=n_test,
                                   p=p, cv_folds=cv_folds, n_jobs=jobs)
    _write_frame(per_rep, os.path.join(out_dir, "simulation_replicates.csv"))
    _write_frame(summarize_study(per_rep), os.path.join(out_dir, "table1.csv"))
    return EXIT_OK


# -- argument parsing --------------------------------------------------------


def _add_common(sub):
    sub.add_argument("--config", help="YAML or JSON config file")
    sub.add_argument("--data", help="CSV data path")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--outcome", help="outcome column name")
    sub.add_argument("--exposures", help="comma-separated exposure columns")
    sub.add_argument("--covariates", help="comma-separated covariate columns")
    sub.add_argument("--method", choices=["qgc", "bsim", "bmim", "bkmr"])
    sub.add_argument("--groups", help="index groups, e.g. '1-8;9-10;11-18'")
    sub.add_argument("--kernel", choices=["gaussian", "poly"])
    sub.add_argument("--degree", type=int, help="polynomial kernel degree")
    sub.add_argument("--q", type=int, help="quantile groups for qgc")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--chains", type=int)
    sub.add_argument("--iters", type=int, dest="iters")
    sub.add_argument("--burnin", type=int)
    sub.add_argument("--thin", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bmim",
        description="Bayesian multiple index models for exposure mixtures")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    fit = subs.add_parser("fit", help="fit a model and persist the chain")
    _add_common(fit)

    summ = subs.add_parser("summarize", help="weight tables and index curves")
    _add_common(summ)

    pred = subs.add_parser("predict", help="overall contrasts and interactions")
    _add_common(pred)
    pred.add_argument("--q-hi", type=float, default=0.6)
    pred.add_argument("--q-lo", type=float, default=0.5)
    pred.add_argument("--interactions", action="store_true")

    cv = subs.add_parser("cv", help="k-fold cross validation")
    _add_common(cv)
    cv.add_argument("--k", type=int, default=5)

    sim = subs.add_parser("simulate", help="scenario comparison study")
    _add_common(sim)
    sim.add_argument("--scenarios", default="A,B")
    sim.add_argument("--methods", default="qgc,bsim,bmim,bkmr")
    sim.add_argument("--replicates", type=int, default=20)
    sim.add_argument("--sigma", type=float, default=0.5)
    sim.add_argument("--n-train", type=int, default=300)
    sim.add_argument("--n-test", type=int, default=200)
    sim.add_argument("--exposure-count", type=int, default=18)
    sim.add_argument("--cv-folds", type=int, default=None)
    sim.add_argument("--jobs", type=int, default=1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config, _overrides_from_args(args))
        if args.command == "fit":
            return cmd_fit(config)
        if args.command == "summarize":
            return cmd_summarize(config)
        if args.command == "predict":
            return cmd_predict(config, args.q_hi, args.q_lo, args.interactions)
        if args.command == "cv":
            return cmd_cv(config, args.k)
        if args.command == "simulate":
            return cmd_simulate(
                config, [s.strip() for s in args.scenarios.split(",")],
                [m.strip() for m in args.methods.split(",")],
                args.replicates, args.sigma, args.n_train, args.n_test,
                args.exposure_count, args.cv_folds, args.jobs)
        parser.error(f"unknown command {args.command}")
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
