"""Command-line entry points.

Subcommands:

* ``run``        execute a greedy experiment from a YAML config (every config
                 field can be overridden with a flag)
* ``float-demo`` the scalar loss-of-significance table
* ``validate``   post-hoc true-error sweep of a saved run
* ``bench``      time the jit-compiled sweep kernels against the numpy path

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical failures,
4 on filesystem errors.
"""

import argparse
import os
import sys
import time

import numpy as np

from .harness import (
    ConfigError,
    ExperimentConfig,
    PAPER_SCALE,
    default_training_counts,
    load_run,
    make_training_grid,
    run_experiment,
    run_float_demo,
    validate,
)
from .numerics import SingularSystemError
from .truth import PROBLEM_IDS, problem_spec


def _int_list(text):
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _add_run_parser(sub):
    p = sub.add_parser("run", help="run a greedy experiment")
    p.add_argument("config", nargs="?", help="YAML config file")
    p.add_argument("--problem", choices=PROBLEM_IDS)
    p.add_argument("--nodes-per-dim", type=int)
    p.add_argument("--training-grid", type=_int_list,
                   help="per-dimension counts, e.g. 65,33")
    p.add_argument("--estimator", dest="estimator_kind",
                   choices=("classical", "stable", "lebesgue"))
    p.add_argument("--eps-tol", type=float)
    p.add_argument("--n-max", dest="N_max", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha-mode", choices=("unit", "exact-eig"))
    p.add_argument("--validation-grid", type=_int_list)
    p.add_argument("--output-dir")
    p.add_argument("--checkpoints", type=_int_list,
                   help="basis sizes at which to emit field/trace files")
    p.add_argument("--validate", choices=("none", "argmax", "full"))
    p.add_argument("--no-field-errors", action="store_true",
                   help="skip true-error columns in field files")
    p.add_argument("--workers", type=int)
    p.add_argument("--paper-scale", action="store_true",
                   help="use the full-resolution profile (50 nodes per "
                        "direction, full training grids)")
    return p


def _config_from_args(args):
    data = {}
    if args.config:
        cfg = ExperimentConfig.from_yaml(args.config)
        data = cfg.to_dict()
    overrides = {
        "problem": args.problem,
        "nodes_per_dim": args.nodes_per_dim,
        "training_grid": args.training_grid,
        "estimator_kind": args.estimator_kind,
        "eps_tol": args.eps_tol,
        "N_max": args.N_max,
        "seed": args.seed,
        "alpha_mode": args.alpha_mode,
        "validation_grid": args.validation_grid,
        "output_dir": args.output_dir,
        "checkpoints": args.checkpoints,
        "validate": args.validate,
        "workers": args.workers,
    }
    if args.no_field_errors:
        overrides["validate_fields"] = False
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.paper_scale:
        data["nodes_per_dim"] = PAPER_SCALE["nodes_per_dim"]
        if "problem" in data:
            data["training_grid"] = default_training_counts(
                data["problem"], paper_scale=True
            )
    if "problem" not in data:
        raise ConfigError("give a config file or --problem")
    return ExperimentConfig.from_dict(data)


def _cmd_run(args):
    config = _config_from_args(args)
    artifacts = run_experiment(config)
    print(f"run complete: {artifacts.directory}")
    print(f"  history:   {artifacts.history}")
    print(f"  snapshots: {artifacts.snapshots}")
    for k, path in artifacts.fields.items():
        print(f"  field N={k}: {path}")
    for k, path in artifacts.lagrange.items():
        print(f"  lagrange N={k}: {path}")
    return 0


def _cmd_float_demo(args):
    n_values = args.n_values or list(range(args.n_min, args.n_max + 1))
    rows = run_float_demo(n_values, args.mu_samples, args.seed, args.output)
    print(f"{'N':>4} {'max_stable':>14} {'max_expanded':>14}")
    for n, s, e in rows:
        print(f"{n:>4} {s:>14.6e} {e:>14.6e}")
    print(f"written: {args.output}")
    return 0


def _cmd_validate(args):
    config, op, basis, model = load_run(args.run_dir)
    spec = problem_spec(config.problem)
    counts = args.grid or config.validation_grid or config.training_grid
    points = make_training_grid(spec.param_domain, counts)
    results = validate(basis, model, op, points)
    out_path = args.output or os.path.join(args.run_dir, "validate.csv")
    from .harness import _write_csv

    mu_names = [f"mu{d + 1}" for d in range(spec.param_dim)]
    _write_csv(
        out_path,
        mu_names + ["true_error"],
        [[float(v) for v in mu] + [err] for mu, err in results],
    )
    errors = np.array([err for _, err in results])
    finite = errors[np.isfinite(errors)]
    print(f"validated {len(results)} points (N={basis.size})")
    if finite.size:
        print(f"  max true error: {finite.max():.6e}")
    print(f"written: {out_path}")
    return 0


def _cmd_bench(args):
    from . import kernels

    if not kernels.HAVE_NUMBA:
        print("numba unavailable; nothing to compare")
        return 0
    rng = np.random.default_rng(0)
    M, N, Qa, Qf = args.points, args.basis_size, 3, 1
    theta_a = rng.uniform(0.5, 2.0, (M, Qa))
    theta_f = np.ones((M, Qf))
    alpha = np.ones(M)
    a_blocks = np.stack([np.eye(N) + 0.01 * rng.standard_normal((N, N))
                         for _ in range(Qa)])
    f_blocks = rng.standard_normal((Qf, N))
    cc = np.eye(Qf)
    cl = rng.standard_normal((Qf, N * Qa))
    ll = np.eye(N * Qa)
    pairs = [
        ("classical", kernels.classical_sweep_jit, kernels.classical_sweep_numpy,
         (theta_a, theta_f, alpha, a_blocks, f_blocks, cc, cl, ll)),
        ("stable", kernels.stable_sweep_jit, kernels.stable_sweep_numpy,
         (theta_a, theta_f, alpha, a_blocks, f_blocks,
          np.zeros((0, Qf)), rng.standard_normal((N * Qa, Qf)),
          np.eye(N * Qa))),
        ("lebesgue", kernels.lebesgue_sweep_jit, kernels.lebesgue_sweep_numpy,
         (theta_a, theta_f, a_blocks, f_blocks,
          np.triu(np.eye(N) + 0.1 * rng.standard_normal((N, N))))),
    ]
    print(f"sweep of {M} parameters, basis size {N} ({args.repeat} repeats)")
    print(f"{'kernel':>10} {'jit [s]':>12} {'numpy [s]':>12} {'speedup':>9}")
    for name, jit_fn, np_fn, fargs in pairs:
        jit_fn(*fargs)  # compile outside the timed region
        t0 = time.perf_counter()
        for _ in range(args.repeat):
            jit_fn(*fargs)
        t_jit = (time.perf_counter() - t0) / args.repeat
        t0 = time.perf_counter()
        for _ in range(args.repeat):
            np_fn(*fargs)
        t_np = (time.perf_counter() - t0) / args.repeat
        print(f"{name:>10} {t_jit:>12.4f} {t_np:>12.4f} {t_np / t_jit:>8.1f}x")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rbkit",
        description="greedy reduced-basis experiments for affine-parametric "
                    "elliptic PDEs",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_parser(sub)

    p = sub.add_parser("float-demo", help="scalar loss-of-significance table")
    p.add_argument("--n-min", type=int, default=1)
    p.add_argument("--n-max", type=int, default=26)
    p.add_argument("--n-values", type=_int_list)
    p.add_argument("--mu-samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default="float_demo.csv")

    p = sub.add_parser("validate", help="post-hoc validation of a saved run")
    p.add_argument("run_dir")
    p.add_argument("--grid", type=_int_list,
                   help="per-dimension counts for the validation grid")
    p.add_argument("--output")

    p = sub.add_parser("bench", help="compare jit and numpy sweep kernels")
    p.add_argument("--points", type=int, default=20000)
    p.add_argument("--basis-size", type=int, default=20)
    p.add_argument("--repeat", type=int, default=3)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "float-demo": _cmd_float_demo,
        "validate": _cmd_validate,
        "bench": _cmd_bench,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"filesystem error: {exc}", file=sys.stderr)
        return 4
    except (SingularSystemError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
