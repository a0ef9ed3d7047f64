"""Command-line front end: ``sphmix {gen,fit,fit1d,eval,sweep}``.

Every command prints one JSON document on stdout that starts with a
``runspec`` echo of its arguments (seed included), so any run can be
repeated from its own output. Exit codes: 0 ok, 2 bad input, 3 candidate
overflow, 4 eigensolver non-convergence.
"""

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ._rng import derive_seed
from .distance import l1_mc, l1_quadrature_1d
from .estimator import CandidateOverflowError, EstimatorConfig, learn_1d, learn_k_sphere
from .linalg import NonConvergenceError
from .model import load_dataset, load_mixture, sample, save_dataset, save_mixture

EXIT_OK, EXIT_INPUT, EXIT_OVERFLOW, EXIT_NONCONVERGENCE = 0, 2, 3, 4


class InputError(ValueError):
    pass


def _emit(obj, stream=None):
    stream = sys.stdout if stream is None else stream
    stream.write(json.dumps(obj, sort_keys=True) + "\n")


def _runspec(args):
    spec = {k: v for k, v in vars(args).items() if k != "func"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in spec.items()}


def _existing(path):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such file: {p}")
    return p


def _writable(path):
    if path is None:
        return None
    p = Path(path)
    if not p.parent.exists():
        raise InputError(f"output directory does not exist: {p.parent}")
    return p


def _config(args, **extra):
    return EstimatorConfig(
        k=args.k,
        eps=args.eps,
        delta=args.delta,
        seed=args.seed,
        grid_scale=args.grid_scale,
        max_candidates=args.max_candidates,
        sigma_grid_size=getattr(args, "sigma_grid_size", None),
        weight_scale=args.weight_scale,
        span_radius=getattr(args, "span_radius", None),
        unordered=args.unordered,
        tournament_samples=args.tournament_samples,
        n_mc=args.mc_samples,
        candidate_samples=getattr(args, "candidate_samples", None),
        **extra,
    )


# -- commands --------------------------------------------------------------


def cmd_gen(args):
    mix = load_mixture(_existing(args.mixture))
    out = _writable(args.out)
    if args.n < 1:
        raise InputError("--n must be positive")
    ds = sample(mix, args.n, args.seed)
    save_dataset(ds, out)
    counts = np.bincount(ds.labels, minlength=mix.k).tolist()
    _emit({"runspec": _runspec(args), "n": ds.n, "d": ds.dim, "seed": ds.seed, "label_counts": counts,
           "out": str(out)})
    return EXIT_OK


def _fit(args, one_dim):
    ds = load_dataset(_existing(args.data))
    out = _writable(args.out)
    audit_path = _writable(args.audit)
    clusters_path = _writable(getattr(args, "dump_clusters", None))
    cfg = _config(args)
    if one_dim:
        if ds.dim != 1:
            raise InputError(f"fit1d needs one-dimensional data, got d={ds.dim}")
        mix, report = learn_1d(ds, cfg)
    else:
        mix, report = learn_k_sphere(ds, cfg)
    if out is not None:
        save_mixture(mix, out)
    if audit_path is not None:
        with open(audit_path, "w") as fh:
            if cfg.amplify:
                for _, aud in report.audit:
                    aud.write_jsonl(fh)
            else:
                report.audit.write_jsonl(fh)
    if clusters_path is not None and report.clustering is not None:
        clusters_path.write_text(report.clustering.to_json() + "\n")
    _emit({"runspec": _runspec(args), "config": cfg.to_dict(), "mixture": mix.to_dict(), "report": report.to_dict()})
    return EXIT_OK


def cmd_fit(args):
    return _fit(args, one_dim=False)


def cmd_fit1d(args):
    return _fit(args, one_dim=True)


def cmd_eval(args):
    f = load_mixture(_existing(args.f))
    g = load_mixture(_existing(args.g))
    if f.dim != g.dim:
        raise InputError(f"dimension mismatch: {f.dim} vs {g.dim}")
    if args.exact:
        if f.dim != 1:
            raise InputError("--exact needs one-dimensional mixtures")
        res = {"value": l1_quadrature_1d(f, g), "std_error": 0.0, "n_mc": 0, "method": "quadrature"}
    else:
        est = l1_mc(f, g, n_mc=args.mc_samples, seed=args.seed)
        res = {"value": est.value, "std_error": est.std_error, "n_mc": est.n_mc, "method": "monte_carlo"}
    _emit({"runspec": _runspec(args), **res})
    return EXIT_OK


def _sweep_cell(task):
    truth_dict, n, rep, seed, cfg_kwargs, mc = task
    from .model import Mixture

    truth = Mixture.from_dict(truth_dict)
    cell_seed = derive_seed(seed, "sweep", n, rep)
    ds = sample(truth, n, cell_seed)
    cfg = EstimatorConfig(seed=cell_seed, **cfg_kwargs)
    t0 = time.perf_counter()
    try:
        if truth.dim == 1:
            mix, _ = learn_1d(ds, cfg)
            err = l1_quadrature_1d(truth, mix)
        else:
            mix, _ = learn_k_sphere(ds, cfg)
            err = l1_mc(truth, mix, n_mc=mc, seed=cell_seed).value
        return n, rep, err, time.perf_counter() - t0, ""
    except (CandidateOverflowError, NonConvergenceError, ValueError) as exc:
        return n, rep, None, time.perf_counter() - t0, f"{type(exc).__name__}: {exc}"


def _threads():
    raw = os.environ.get("SPHMIX_THREADS")
    if raw is None:
        return 1
    try:
        t = int(raw)
    except ValueError:
        raise InputError(f"SPHMIX_THREADS must be an integer, got {raw!r}")
    if t < 1:
        raise InputError("SPHMIX_THREADS must be at least 1")
    return t


def cmd_sweep(args):
    truth = load_mixture(_existing(args.mixture))
    out = _writable(args.out)
    try:
        grid = [int(v) for v in args.n_grid.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"--n-grid must be comma-separated integers, got {args.n_grid!r}")
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
        raise InputError("--n-grid must be positive and strictly increasing")
    if args.reps < 1:
        raise InputError("--reps must be positive")
    cfg = _config(args)
    cfg_kwargs = {k: v for k, v in cfg.to_dict().items() if k != "seed"}
    tasks = [(truth.to_dict(), n, r, args.seed, cfg_kwargs, args.mc_samples) for n in grid for r in range(args.reps)]
    workers = _threads()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, tasks))
    else:
        results = [_sweep_cell(t) for t in tasks]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "reps", "ok", "failed", "median_l1", "q25_l1", "q75_l1", "wall_time_s", "errors"])
    rows = []
    for n in grid:
        cell = [r for r in results if r[0] == n]
        errs = np.array([r[2] for r in cell if r[2] is not None])
        failed = [r[4] for r in cell if r[2] is None]
        wall = sum(r[3] for r in cell)
        if len(errs):
            q25, med, q75 = np.quantile(errs, [0.25, 0.5, 0.75])
            stats = [repr(float(med)), repr(float(q25)), repr(float(q75))]
        else:
            stats = ["", "", ""]
        row = [n, len(cell), len(errs), len(failed), *stats, f"{wall:.3f}", "; ".join(sorted(set(failed)))]
        w.writerow(row)
        rows.append(dict(zip(["n", "reps", "ok", "failed", "median_l1", "q25_l1", "q75_l1", "wall_time_s"], row)))
    text = buf.getvalue()
    if out is not None:
        out.write_text(text)
    _emit({"runspec": _runspec(args), "rows": rows, "workers": workers})
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def _add_fit_flags(p, one_dim=False):
    p.add_argument("--data", required=True, help="dataset CSV (with optional JSON sidecar)")
    p.add_argument("--out", help="write the fitted mixture JSON here")
    p.add_argument("--audit", help="write tournament games as JSON lines here")
    if not one_dim:
        p.add_argument("--dump-clusters", help="write the clustering JSON here")


def _add_config_flags(p, one_dim=False):
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-scale", type=float, default=1.0)
    p.add_argument("--weight-scale", type=float, default=None)
    p.add_argument("--max-candidates", type=int, default=None)
    p.add_argument("--mc-samples", type=int, default=None, help="Monte Carlo draws per candidate per game")
    p.add_argument("--tournament-samples", type=int, default=None)
    p.add_argument("--unordered", action="store_true", help="enumerate each set of component slots once")
    if one_dim:
        p.add_argument("--candidate-samples", type=int, default=None)
    else:
        p.add_argument("--sigma-grid-size", type=int, default=None)
        p.add_argument("--span-radius", type=float, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="sphmix", description="Learn spherical Gaussian mixtures.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="sample a dataset from a mixture JSON")
    p.add_argument("--mixture", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="learn a d-dimensional spherical mixture")
    _add_fit_flags(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("fit1d", help="learn a one-dimensional mixture")
    _add_fit_flags(p, one_dim=True)
    _add_config_flags(p, one_dim=True)
    p.set_defaults(func=cmd_fit1d)

    p = sub.add_parser("eval", help="L1 distance between two mixture JSONs")
    p.add_argument("--f", required=True)
    p.add_argument("--g", required=True)
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exact", action="store_true", help="adaptive quadrature (d = 1 only)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="error versus sample size")
    p.add_argument("--mixture", required=True, help="true mixture JSON")
    p.add_argument("--n-grid", required=True, help="comma-separated, strictly increasing sample sizes")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--out", help="write the CSV here")
    _add_config_flags(p)
    p.add_argument("--candidate-samples", type=int, default=None)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "mc_samples", None) is not None and args.mc_samples < 1:
        parser.error("--mc-samples must be positive")
    try:
        return args.func(args)
    except CandidateOverflowError as exc:
        _emit({"error": "candidate_overflow", "count": exc.count, "limit": exc.limit, "message": str(exc)},
              sys.stderr)
        return EXIT_OVERFLOW
    except NonConvergenceError as exc:
        _emit({"error": "non_convergence", "message": str(exc)}, sys.stderr)
        return EXIT_NONCONVERGENCE
    except (InputError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        _emit({"error": "bad_input", "message": f"{type(exc).__name__}: {exc}"}, sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
