"""Command-line interface.

Subcommands: simulate, fit-pdc, fit-dc, study, ladder, benchmark, metrics.
Settings come from an optional TOML config file; command-line flags
override config values.  Exit codes: 0 success, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import harness
from .data import Dataset, load_dataset, save_dataset
from .dc import DcConfig, dc_run
from .engine import ScheduleConfig, ScheduleError, pdc_run
from .kernels import KernelConfig, kernel_for
from .ladder import LadderConfig, ladder_run
from .models import get_model, model_names
from .params import ParamLayout
from .prob import OdeTarget, PriorSpec
from .solver import SolverConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

FLOAT_FMT = "%.17g"

KNOWN_CONFIG_KEYS = {
    "solver": {"rel_tol", "abs_tol", "max_steps"},
    "prior": {"mu", "sd_ode", "tau", "sd_x0", "a", "b"},
    "pdc": {
        "particles", "rcess", "resample_threshold", "kernel",
        "moves_per_step", "seed", "rw_step", "max_steps",
    },
    "dc": {"iterations", "thin"},
    "ladder": {"k_sequence", "init_mode", "lambda_threshold"},
}


class ConfigError(Exception):
    pass


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for section, values in cfg.items():
        if section not in KNOWN_CONFIG_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"config section [{section}] must be a table")
        unknown = set(values) - KNOWN_CONFIG_KEYS[section]
        if unknown:
            raise ConfigError(
                f"unknown keys in [{section}]: {', '.join(sorted(unknown))}"
            )
    return cfg


def _setting(args, cfg, section, key, flag_value, default):
    """Priority: explicit command-line flag > config file > default."""
    if flag_value is not None:
        return flag_value
    return cfg.get(section, {}).get(key, default)


def _solver_cfg(args, cfg):
    return SolverConfig(
        rel_tol=float(_setting(args, cfg, "solver", "rel_tol",
                               getattr(args, "rel_tol", None), 1e-6)),
        abs_tol=float(_setting(args, cfg, "solver", "abs_tol",
                               getattr(args, "abs_tol", None), 1e-8)),
        max_steps=int(_setting(args, cfg, "solver", "max_steps", None, 100000)),
    )


def _prior_for(model, cfg):
    layout = ParamLayout(model)
    base = harness.prior_for(model)
    section = cfg.get("prior", {})
    if not section:
        return base
    def arr(key, current):
        v = section.get(key)
        if v is None:
            return current
        out = np.asarray(v, dtype=np.float64)
        if out.ndim == 0:
            out = np.full(current.shape, float(out))
        if out.shape != current.shape:
            raise ConfigError(f"prior.{key} must have {current.size} entries")
        return out
    return PriorSpec(
        mu=arr("mu", base.mu), sd_ode=arr("sd_ode", base.sd_ode),
        tau=arr("tau", base.tau), sd_x0=arr("sd_x0", base.sd_x0),
        a=float(section.get("a", base.a)), b=float(section.get("b", base.b)),
    )


def _kernel_cfg(args, cfg):
    kind = _setting(args, cfg, "pdc", "kernel", getattr(args, "kernel", None),
                    "adaptive")
    if kind not in ("adaptive", "rwmh"):
        raise ConfigError(f"kernel must be 'adaptive' or 'rwmh', got {kind!r}")
    return KernelConfig(
        kind=kind,
        rw_step=float(_setting(args, cfg, "pdc", "rw_step",
                               getattr(args, "rw_step", None), 0.1)),
        n_moves=int(_setting(args, cfg, "pdc", "moves_per_step",
                             getattr(args, "moves", None), 1)),
    )


def _sched_cfg(args, cfg):
    return ScheduleConfig(
        eps_rcess=float(_setting(args, cfg, "pdc", "rcess",
                                 getattr(args, "rcess", None), 0.999)),
        zeta=float(_setting(args, cfg, "pdc", "resample_threshold",
                            getattr(args, "zeta", None), 0.5)),
        max_R=int(_setting(args, cfg, "pdc", "max_steps", None, 10_000)),
    )


def _seed(args, cfg):
    return int(_setting(args, cfg, "pdc", "seed", getattr(args, "seed", None), 0))


def _out_dir(args):
    out = args.out or os.environ.get("PDCLONE_OUT_DIR") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _provenance_sidecar(path, args, cfg, seed):
    """Record enough to reproduce byte-identically: resolved config + seed."""
    payload = {
        "command": args.command,
        "seed": seed,
        "config": cfg,
        "argv_overrides": {
            key: val for key, val in sorted(vars(args).items())
            if key not in ("command", "func", "out", "config") and val is not None
        },
    }
    blob = json.dumps(payload, sort_keys=True, default=str)
    payload["config_hash"] = hashlib.sha256(blob.encode()).hexdigest()
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(
                FLOAT_FMT % v if isinstance(v, float) else str(v) for v in row
            ) + "\n")


def _write_summary_csv(path, summary):
    rows = [
        (name, float(est), float(se), float(lo), float(hi))
        for name, est, se, lo, hi in zip(
            summary.names, summary.theta_hat, summary.se,
            summary.ci_lower, summary.ci_upper,
        )
    ]
    _write_csv(path, ("parameter", "estimate", "se", "ci_lower", "ci_upper"), rows)


def _write_trace_csv(path, trace):
    rows = [
        (int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4]))
        for r in trace
    ]
    _write_csv(path, ("r", "phi", "ress", "accept_rate", "logZ_increment"), rows)


def _add_common(p):
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--out", help="output directory (default: PDCLONE_OUT_DIR or .)")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--threads", type=int, default=1,
                   help="numba thread count (default 1)")
    p.add_argument("--rel-tol", dest="rel_tol", type=float, help="solver relative tolerance")
    p.add_argument("--abs-tol", dest="abs_tol", type=float, help="solver absolute tolerance")


def _add_fit_common(p):
    _add_common(p)
    p.add_argument("--model", required=True, choices=model_names())
    p.add_argument("--data", required=True, help="dataset CSV (from simulate)")
    p.add_argument("-k", "--clones", type=int, default=12)
    p.add_argument("--kernel", choices=("adaptive", "rwmh"))
    p.add_argument("--rw-step", dest="rw_step", type=float)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pdclone",
        description="Maximum-likelihood estimation for ODE models via "
                    "particle data cloning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--model", required=True, choices=model_names())
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-pdc", help="particle data cloning fit")
    _add_fit_common(p)
    p.add_argument("-M", "--particles", type=int)
    p.add_argument("--rcess", type=float)
    p.add_argument("--zeta", type=float, help="resampling threshold")
    p.add_argument("--moves", type=int, help="kernel moves per step")
    p.set_defaults(func=cmd_fit_pdc)

    p = sub.add_parser("fit-dc", help="MCMC data cloning fit")
    _add_fit_common(p)
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=cmd_fit_dc)

    p = sub.add_parser("study", help="replication coverage study")
    _add_fit_common(p)
    p.add_argument("--method", choices=("pdc", "dc"), default="pdc")
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("-M", "--particles", type=int)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("ladder", help="clone ladder with eigenvalue diagnostics")
    _add_fit_common(p)
    p.add_argument("-M", "--particles", type=int)
    p.add_argument("--k-sequence", help="comma-separated clone counts")
    p.add_argument("--init-mode", choices=("adaptive", "prior"))
    p.set_defaults(func=cmd_ladder)

    p = sub.add_parser("benchmark", help="kernel/method benchmark grid")
    _add_fit_common(p)
    p.add_argument("-M", "--particles", type=int)
    p.add_argument("--k-grid", help="comma-separated clone counts")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("metrics", help="rMSE and log-likelihood of a parameter vector")
    _add_common(p)
    p.add_argument("--model", required=True, choices=model_names())
    p.add_argument("--data", required=True)
    p.add_argument("--params", required=True,
                   help="comma-separated values: theta_ode, free initial "
                        "conditions, then one sigma per observed component")
    p.set_defaults(func=cmd_metrics)

    return parser


def _dataset(args):
    try:
        return load_dataset(args.data)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load dataset {args.data}: {exc}") from exc


def _target(args, cfg):
    model = get_model(args.model)
    dataset = _dataset(args)
    if dataset.y.shape[1] != model.n_obs_components:
        raise ConfigError(
            f"dataset has {dataset.y.shape[1]} observed components but model "
            f"{model.name} observes {model.n_obs_components}"
        )
    prior = _prior_for(model, cfg)
    return model, dataset, OdeTarget(model, dataset, prior,
                                     solver_cfg=_solver_cfg(args, cfg))


def cmd_simulate(args, cfg):
    model = get_model(args.model)
    seed = _seed(args, cfg)
    dataset = harness.simulate_default(model, seed)
    out = _out_dir(args)
    path = os.path.join(out, f"{model.name}_seed{seed}.csv")
    save_dataset(path, dataset)
    _provenance_sidecar(path + ".provenance.json", args, cfg, seed)
    print(f"wrote {path} ({dataset.times.size} observations)")
    return EXIT_OK


def cmd_fit_pdc(args, cfg):
    model, dataset, target = _target(args, cfg)
    seed = _seed(args, cfg)
    m = int(_setting(args, cfg, "pdc", "particles", args.particles, 500))
    kernel_cfg = _kernel_cfg(args, cfg)
    res = pdc_run(
        target, args.clones, m, kernel_for(target, kernel_cfg),
        _sched_cfg(args, cfg), np.random.default_rng(seed),
    )
    out = _out_dir(args)
    base = os.path.join(out, f"fit_pdc_{model.name}_k{args.clones}")
    _write_summary_csv(base + "_summary.csv", res.summary)
    _write_trace_csv(base + "_trace.csv", res.trace)
    _provenance_sidecar(base + ".provenance.json", args, cfg, seed)
    s = res.summary
    print(f"PDC k={args.clones} M={m}: {res.n_steps} steps, "
          f"{res.n_resampled} resamples, loglik {s.loglik_hat:.3f}")
    for name, est, se in zip(s.names, s.theta_hat, s.se):
        print(f"  {name:>14s} = {est: .6g}  (se {se:.3g})")
    print(f"wrote {base}_summary.csv, {base}_trace.csv")
    return EXIT_OK


def cmd_fit_dc(args, cfg):
    model, dataset, target = _target(args, cfg)
    seed = _seed(args, cfg)
    iters = int(_setting(args, cfg, "dc", "iterations", args.iterations, 300000))
    res = dc_run(
        target, args.clones,
        DcConfig(iterations=iters, kernel=_kernel_cfg(args, cfg),
                 thin=int(cfg.get("dc", {}).get("thin", 10))),
        rng=np.random.default_rng(seed),
    )
    out = _out_dir(args)
    base = os.path.join(out, f"fit_dc_{model.name}_k{args.clones}")
    _write_summary_csv(base + "_summary.csv", res.summary)
    _write_csv(
        base + "_chain.csv",
        ("iteration",) + res.summary.names,
        [(i,) + tuple(map(float, row)) for i, row in enumerate(res.chain)],
    )
    _provenance_sidecar(base + ".provenance.json", args, cfg, seed)
    s = res.summary
    print(f"DC k={args.clones}, {iters} iterations, accept {res.accept_rate:.3f}, "
          f"loglik {s.loglik_hat:.3f}")
    for w in res.warnings:
        print(f"  warning: {w}")
    for name, est, se in zip(s.names, s.theta_hat, s.se):
        print(f"  {name:>14s} = {est: .6g}  (se {se:.3g})")
    print(f"wrote {base}_summary.csv, {base}_chain.csv")
    return EXIT_OK


def cmd_study(args, cfg):
    model = get_model(args.model)
    seed = _seed(args, cfg)
    m = int(_setting(args, cfg, "pdc", "particles", args.particles, 500))
    report = harness.coverage_study(
        model, args.replicates, method=args.method, k=args.clones, m=m,
        kernel_cfg=_kernel_cfg(args, cfg), sched=_sched_cfg(args, cfg),
        solver_cfg=_solver_cfg(args, cfg), seed=seed,
        prior=_prior_for(model, cfg),
    )
    out = _out_dir(args)
    base = os.path.join(out, f"study_{args.method}_{model.name}_k{args.clones}")
    _write_csv(
        base + ".csv",
        ("parameter", "mean_estimate", "mean_se", "coverage"),
        [(n, float(e), float(s), float(c)) for n, e, s, c in
         zip(report.names, report.mean_estimate, report.mean_se, report.coverage)],
    )
    _provenance_sidecar(base + ".provenance.json", args, cfg, seed)
    print(f"{args.method.upper()} study, k={args.clones}, "
          f"{report.n_replicates} replicates ({report.n_failed} failed, "
          f"{report.n_local_trapped} local-trapped)")
    for n, e, s, c in zip(report.names, report.mean_estimate,
                          report.mean_se, report.coverage):
        print(f"  {n:>14s}: mean {e: .4g}  se {s:.4g}  coverage {c:.0%}")
    print(f"wrote {base}.csv")
    return EXIT_OK


def cmd_ladder(args, cfg):
    model = get_model(args.model)
    dataset = _dataset(args)
    seed = _seed(args, cfg)
    m = int(_setting(args, cfg, "pdc", "particles", args.particles, 500))
    if args.k_sequence:
        ks = tuple(int(v) for v in args.k_sequence.split(","))
    else:
        ks = tuple(cfg.get("ladder", {}).get("k_sequence",
                                             (1, 5, 10, 20, 30, 40, 50)))
    ladder_cfg = LadderConfig(
        k_sequence=ks,
        init_mode=_setting(args, cfg, "ladder", "init_mode",
                           args.init_mode, "adaptive"),
        lambda_threshold=float(cfg.get("ladder", {}).get("lambda_threshold", 0.05)),
    )
    report = ladder_run(
        model, dataset, _prior_for(model, cfg), ladder_cfg, m,
        kernel_cfg=_kernel_cfg(args, cfg), sched=_sched_cfg(args, cfg),
        solver_cfg=_solver_cfg(args, cfg), rng=np.random.default_rng(seed),
    )
    out = _out_dir(args)
    base = os.path.join(out, f"ladder_{model.name}")
    layout = ParamLayout(model)
    header = (
        ("k", "R_k", "lambda_max", "lambda_S", "time_sec", "llik_at_mle")
        + tuple(f"est_{n}" for n in layout.report_names)
        + tuple(f"se_{n}" for n in layout.report_names)
    )
    rows = []
    for pt in report.points:
        if pt.error is not None:
            rows.append((pt.k, -1, float("nan"), float("nan"),
                         float(pt.time_sec), float("nan"))
                        + tuple(float("nan") for _ in range(2 * layout.dim)))
        else:
            rows.append(
                (pt.k, pt.n_steps, float(pt.lambda_max), float(pt.lambda_s),
                 float(pt.time_sec), float(pt.summary.loglik_hat))
                + tuple(map(float, pt.summary.theta_hat))
                + tuple(map(float, pt.summary.se))
            )
    _write_csv(base + ".csv", header, rows)
    _provenance_sidecar(base + ".provenance.json", args, cfg, seed)
    for pt in report.points:
        if pt.error is not None:
            print(f"  k={pt.k:3d}  FAILED: {pt.error}")
        else:
            print(f"  k={pt.k:3d}  R={pt.n_steps:4d}  lambda_S={pt.lambda_s:.4f}"
                  f"  llik={pt.summary.loglik_hat:.2f}  ({pt.time_sec:.1f}s)")
    if report.stopped and report.chosen_k is not None:
        print(f"stopping rule satisfied at k={report.chosen_k}")
    print(f"wrote {base}.csv")
    return EXIT_OK


def cmd_benchmark(args, cfg):
    model = get_model(args.model)
    dataset = _dataset(args)
    seed = _seed(args, cfg)
    m = int(_setting(args, cfg, "pdc", "particles", args.particles, 200))
    k_grid = (tuple(int(v) for v in args.k_grid.split(","))
              if args.k_grid else (1, 5, 10, 15, 20, 25, 30, 40, 50))
    cells = harness.kernel_benchmark(
        model, dataset, prior=_prior_for(model, cfg), k_grid=k_grid, m=m,
        sched=_sched_cfg(args, cfg), solver_cfg=_solver_cfg(args, cfg),
        seed=seed, rw_step=_kernel_cfg(args, cfg).rw_step,
    )
    out = _out_dir(args)
    base = os.path.join(out, f"benchmark_{model.name}")
    _write_csv(
        base + ".csv",
        ("method", "kernel", "k_max", "llik_max", "rmse_min",
         "n_loglik_evals", "n_kernel_moves"),
        [(c.method, c.kernel, c.k_max, float(c.llik_max), float(c.rmse_min),
          c.n_loglik_evals, c.n_kernel_moves) for c in cells],
    )
    _provenance_sidecar(base + ".provenance.json", args, cfg, seed)
    for c in cells:
        note = f"  [{c.error}]" if c.error else ""
        print(f"  {c.method:>3s}/{c.kernel:<8s} k_max={c.k_max:3d} "
              f"llik_max={c.llik_max:10.2f} rmse_min={c.rmse_min:.4f} "
              f"evals={c.n_loglik_evals}{note}")
    print(f"wrote {base}.csv")
    return EXIT_OK


def cmd_metrics(args, cfg):
    model = get_model(args.model)
    dataset = _dataset(args)
    layout = ParamLayout(model)
    try:
        vals = np.array([float(v) for v in args.params.split(",")])
    except ValueError as exc:
        raise ConfigError(f"bad --params: {exc}") from exc
    if vals.size != layout.dim:
        raise ConfigError(
            f"--params needs {layout.dim} values for model {model.name}: "
            + ", ".join(layout.report_names)
        )
    theta = harness._report_to_layout(vals, layout)
    rmse, llik = fit_metrics_checked(model, theta, dataset, _solver_cfg(args, cfg))
    print(f"rMSE = {rmse:.17g}")
    print(f"loglik = {llik:.17g}")
    return EXIT_OK


def fit_metrics_checked(model, theta, dataset, solver_cfg):
    rmse, llik = harness.fit_metrics(model, theta, dataset, solver_cfg)
    if not np.isfinite(rmse):
        raise NumericalFailure("trajectory solve failed at the given parameters")
    return rmse, llik


class NumericalFailure(Exception):
    pass


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        if args.threads is not None:
            os.environ.setdefault("NUMBA_NUM_THREADS", str(args.threads))
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ScheduleError, NumericalFailure, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
