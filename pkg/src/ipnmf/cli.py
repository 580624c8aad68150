"""Command-line entry point: ``ipnmf {synth,unmix,eval,analyze,cluster}``.

Every command writes into a staging directory next to ``--out`` and moves
the files into place only once all of them were written. Exit codes:
0 success, 2 usage error, 3 data error, 4 solver divergence.
"""

import argparse
import contextlib
import os
import shutil
import sys
import tempfile
import time

import numpy as np

from . import __version__
from .core import DivergenceError, UnmixingError, as_observations, replicate_to_stacked, split_stacked
from .initializers import COEFF_MODES, SPECTRA_MODES, InitSpec, fcls, initialize, nfindr, vca
from .io import STACKED_ORDER, file_digest, read_matrix, read_pool, write_json, write_matrix
from .metrics import (
    best_class_permutation,
    ce_report,
    correlation_matrix,
    pca_fit_project,
    permute_classes,
    re_report,
    sam_report,
)
from .postproc import cluster_abundance_maps, kmeans_sam
from .solvers import SolverOptions, solve_ipnmf, solve_nmf, solve_upnmf
from .synth import PRESETS, VariabilityModel, generate_experiment, preset_pools

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4
METHODS = ("nmf", "upnmf", "ipnmf", "nfindr-fcls", "vca-fcls")


class UsageError(Exception):
    pass


@contextlib.contextmanager
def staged_output(out_dir):
    """Yield a scratch directory; move its files into ``out_dir`` on success."""
    out_dir = os.path.abspath(out_dir)
    parent = os.path.dirname(out_dir)
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".ipnmf-stage-", dir=parent)
    try:
        yield tmp
        os.makedirs(out_dir, exist_ok=True)
        for name in sorted(os.listdir(tmp)):
            os.replace(os.path.join(tmp, name), os.path.join(out_dir, name))
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"{value} must be >= 1")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"{value} must be >= 0")
    return value


def _read(path, what):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{what} file not found: {path}")
    return read_matrix(path)


def _manifest(args, argv, inputs, outputs, started, **extra):
    options = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}
    doc = {
        "tool": "ipnmf",
        "version": __version__,
        "command": ["ipnmf", *argv],
        "subcommand": args.command,
        "seed": getattr(args, "seed", None),
        "options": options,
        "inputs": {path: file_digest(path) for path in inputs},
        "outputs": sorted(outputs),
        "wall_time_s": round(time.perf_counter() - started, 6),
    }
    doc.update(extra)
    return doc


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args, argv):
    started = time.perf_counter()
    if args.pool:
        pools = [read_pool(path) for path in args.pool]
        inputs = list(args.pool)
    else:
        pools = preset_pools(args.preset, args.bands)
        inputs = []
    if args.classes is not None:
        if args.classes > len(pools):
            raise UsageError(f"-M {args.classes} exceeds the {len(pools)} available class pools")
        pools = pools[: args.classes]
    model = VariabilityModel((args.scale_min, args.scale_max), args.sigma, args.smoothness)
    X, truth = generate_experiment(pools, model, args.pixels, args.seed)
    M = len(pools)
    labels = ",".join(pool.class_label for pool in pools)
    outputs = ["X.csv", "C_true.csv", "R_true.csv"]
    with staged_output(args.out) as tmp:
        write_matrix(os.path.join(tmp, "X.csv"), X, [f"P={X.shape[0]} L={X.shape[1]}"])
        write_matrix(os.path.join(tmp, "C_true.csv"), truth.abundances, [f"P={X.shape[0]} M={M} classes={labels}"])
        write_matrix(
            os.path.join(tmp, "R_true.csv"),
            truth.sources,
            [f"P={X.shape[0]} M={M} L={X.shape[1]}", STACKED_ORDER],
        )
        write_json(os.path.join(tmp, "manifest.json"), _manifest(args, argv, inputs, outputs, started))


def _solver_options(args):
    return SolverOptions(
        mu=args.mu,
        max_iters=args.max_iters,
        step_R=args.step_r,
        step_C=args.step_c,
        epsilon_floor=args.epsilon,
        tol_rel=args.tol,
        patience=args.patience,
        armijo=not args.no_armijo,
        coeff_update=args.coeff_update,
    )


def cmd_unmix(args, argv):
    started = time.perf_counter()
    inputs = [args.X]
    X = as_observations(_read(args.X, "observation"))
    P, L = X.shape
    M = args.M
    if M > P:
        raise UsageError(f"M={M} exceeds the number of pixels {P}")
    try:
        opts = _solver_options(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    trace = None
    if args.method in ("nfindr-fcls", "vca-fcls"):
        extract = nfindr if args.method == "nfindr-fcls" else vca
        R_est, _ = extract(X, M, args.seed)
        C_est = fcls(X, R_est)
    else:
        manual = truth = None
        if args.init_spectra == "manual":
            if not args.manual_spectra:
                raise UsageError("--init-spectra manual requires --manual-spectra")
            manual = _read(args.manual_spectra, "manual spectra")
            inputs.append(args.manual_spectra)
        if args.init_spectra == "class_means":
            if not args.truth_sources:
                raise UsageError("--init-spectra class_means requires --truth-sources")
            truth = _read(args.truth_sources, "ground-truth sources")
            inputs.append(args.truth_sources)
        spec = InitSpec(args.init_spectra, args.init_coeffs, args.seed, manual)
        R0, C0 = initialize(X, M, spec, truth)
        if args.method == "nmf":
            result = solve_nmf(X, R0, C0, opts)
        elif args.method == "upnmf":
            result = solve_upnmf(X, replicate_to_stacked(R0, P), C0, opts)
        else:
            result = solve_ipnmf(X, replicate_to_stacked(R0, P), C0, opts)
        R_est, C_est, trace = result.endmembers, result.abundances, result.trace

    stacked = R_est.shape[0] == P * M and args.method in ("upnmf", "ipnmf")
    r_header = [f"P={P} M={M} L={L}", STACKED_ORDER] if stacked else [f"M={M} L={L}"]
    outputs = ["R_est.csv", "C_est.csv", "trace.csv"]
    with staged_output(args.out) as tmp:
        write_matrix(os.path.join(tmp, "R_est.csv"), R_est, r_header)
        write_matrix(os.path.join(tmp, "C_est.csv"), C_est, [f"P={P} M={M}"])
        rows = np.array(trace.costs, dtype=float).reshape(-1, 4) if trace else np.zeros((0, 4))
        steps = (
            np.array([[r.step_R, r.step_C] for r in trace.records], dtype=float).reshape(-1, 2)
            if trace
            else np.zeros((0, 2))
        )
        with open(os.path.join(tmp, "trace.csv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("# columns=iteration,J_RE,J_I,J_total,step_R,step_C\n")
            for (it, j_re, j_i, j_tot), (s_r, s_c) in zip(rows, steps):
                fh.write(",".join([str(int(it))] + [repr(float(v)) for v in (j_re, j_i, j_tot, s_r, s_c)]) + "\n")
        extra = {"stop_reason": trace.stop_reason if trace else None}
        if trace:
            extra["iterations_run"] = trace.iterations_run
        write_json(os.path.join(tmp, "manifest.json"), _manifest(args, argv, inputs, outputs, started, **extra))


def cmd_eval(args, argv):
    started = time.perf_counter()
    paths = {
        "R_est": os.path.join(args.estimates, "R_est.csv"),
        "C_est": os.path.join(args.estimates, "C_est.csv"),
        "X": os.path.join(args.truth, "X.csv"),
        "C_true": os.path.join(args.truth, "C_true.csv"),
        "R_true": os.path.join(args.truth, "R_true.csv"),
    }
    data = {key: _read(path, key) for key, path in paths.items()}
    C_true = data["C_true"]
    P, M = C_true.shape
    R_est, C_est = data["R_est"], data["C_est"]
    if C_est.shape != (P, M):
        raise UnmixingError(f"C_est has shape {C_est.shape}, expected {(P, M)}")
    if args.match_permutation:
        perm = best_class_permutation(data["R_true"], R_est, M)
        R_est, C_est = permute_classes(R_est, C_est, perm, M)
    else:
        perm = np.arange(M)
    sam = sam_report(data["R_true"], R_est, M)
    re = re_report(data["X"], C_est, R_est)
    ce = ce_report(C_true, C_est)
    summary = {
        "P": P,
        "M": M,
        "class_permutation": perm.tolist(),
        "mean": {"SAM_deg": sam.mean, "RE": re.mean, "CE": ce.mean},
    }
    outputs = ["metrics.csv", "summary.json"]
    with staged_output(args.out) as tmp:
        with open(os.path.join(tmp, "metrics.csv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("# columns=pixel,SAM_deg,RE,CE\n")
            for p in range(P):
                fh.write(f"{p + 1},{float(sam.per_pixel[p])!r},{float(re.per_pixel[p])!r},{float(ce.per_pixel[p])!r}\n")
        write_json(os.path.join(tmp, "summary.json"), summary)
        write_json(
            os.path.join(tmp, "manifest.json"),
            _manifest(args, argv, list(paths.values()), outputs, started),
        )


def cmd_analyze(args, argv):
    started = time.perf_counter()
    Y = _read(args.spectra, "spectra")
    if Y.shape[0] < 2:
        raise UnmixingError("analysis needs at least two spectra")
    K = args.K if args.K is not None else min(2, Y.shape[0], Y.shape[1])
    try:
        model, scores = pca_fit_project(Y, K)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    corr = correlation_matrix(Y)
    outputs = ["correlation.csv", "pca_scores.csv", "pca_axes.csv", "pca_eigenvalues.csv", "pca_mean.csv"]
    with staged_output(args.out) as tmp:
        write_matrix(os.path.join(tmp, "correlation.csv"), corr, [f"N={Y.shape[0]}"])
        write_matrix(os.path.join(tmp, "pca_scores.csv"), scores, [f"N={Y.shape[0]} K={K}"])
        write_matrix(os.path.join(tmp, "pca_axes.csv"), model.axes, [f"K={K} L={Y.shape[1]}"])
        write_matrix(os.path.join(tmp, "pca_eigenvalues.csv"), model.eigenvalues[:, None], [f"K={K}"])
        write_matrix(os.path.join(tmp, "pca_mean.csv"), model.mean_spectrum[None, :], [f"L={Y.shape[1]}"])
        write_json(os.path.join(tmp, "manifest.json"), _manifest(args, argv, [args.spectra], outputs, started))


def cmd_cluster(args, argv):
    started = time.perf_counter()
    R = _read(args.R_est, "stacked sources")
    C = _read(args.C_est, "abundance")
    P, M = C.shape
    R3 = split_stacked(R, M)
    if R3.shape[0] != P:
        raise UnmixingError(f"{R.shape[0]} stacked rows do not match P={P}, M={M}")
    if args.K > R.shape[0]:
        raise UsageError(f"K={args.K} exceeds the {R.shape[0]} spectra")
    clustering = kmeans_sam(R, args.K, args.seed, args.restarts, args.max_iters)
    maps = cluster_abundance_maps(clustering.labels, C, args.K)
    outputs = ["labels.csv", "cluster_abundances.csv", "cluster_centers.csv"]
    with staged_output(args.out) as tmp:
        write_matrix(os.path.join(tmp, "labels.csv"), clustering.labels[:, None] + 1, [STACKED_ORDER, "labels 1-based"])
        write_matrix(os.path.join(tmp, "cluster_abundances.csv"), maps, [f"P={P} K={args.K}"])
        write_matrix(os.path.join(tmp, "cluster_centers.csv"), clustering.centers, [f"K={args.K} unit-norm"])
        write_json(
            os.path.join(tmp, "manifest.json"),
            _manifest(args, argv, [args.R_est, args.C_est], outputs, started, inertia=clustering.inertia),
        )


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(prog="ipnmf", description="Pixel-by-pixel NMF unmixing toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a semi-synthetic mixture experiment")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS), default="three-class")
    src.add_argument("--pool", action="append", metavar="FILE", help="class pool CSV (repeat once per class)")
    p.add_argument("-P", "--pixels", type=_positive_int, default=100)
    p.add_argument("-M", "--classes", type=_positive_int, default=None)
    p.add_argument("--bands", type=_positive_int, default=214, help="band count for presets")
    p.add_argument("--scale-min", type=float, default=0.8)
    p.add_argument("--scale-max", type=float, default=1.2)
    p.add_argument("--sigma", type=float, default=0.03)
    p.add_argument("--smoothness", type=_positive_int, default=4)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("unmix", help="run an unmixing method on an observation matrix")
    p.add_argument("X", help="observation CSV, one pixel per row")
    p.add_argument("--method", choices=METHODS, default="ipnmf")
    p.add_argument("-M", type=_positive_int, required=True)
    p.add_argument("--init-spectra", choices=[m for m in SPECTRA_MODES], default="vca")
    p.add_argument("--init-coeffs", choices=COEFF_MODES, default="uniform")
    p.add_argument("--manual-spectra", metavar="FILE")
    p.add_argument("--truth-sources", metavar="FILE", help="stacked R_true.csv for class_means")
    p.add_argument("--mu", type=float, default=30.0)
    p.add_argument("--max-iters", type=_positive_int, default=500)
    p.add_argument("--step-r", type=float, default=1.0)
    p.add_argument("--step-c", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=1e-9)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--patience", type=_positive_int, default=10)
    p.add_argument("--no-armijo", action="store_true", help="fixed steps instead of backtracking")
    p.add_argument("--coeff-update", choices=("simplex", "normalize"), default="simplex")
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_unmix)

    p = sub.add_parser("eval", help="score estimates against semi-synthetic ground truth")
    p.add_argument("estimates", help="directory holding R_est.csv and C_est.csv")
    p.add_argument("truth", help="directory holding X.csv, C_true.csv and R_true.csv")
    p.add_argument("--match-permutation", action="store_true", help="pair classes by best mean SAM")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="correlation matrix and PCA projection of a spectra set")
    p.add_argument("spectra", help="CSV, one spectrum per row")
    p.add_argument("-K", type=_positive_int, default=None, help="number of principal components (default 2)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("cluster", help="spectral-angle k-means over stacked estimates")
    p.add_argument("R_est", help="stacked sources CSV")
    p.add_argument("C_est", help="abundance CSV")
    p.add_argument("-K", type=_positive_int, required=True)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--restarts", type=_positive_int, default=10)
    p.add_argument("--max-iters", type=_positive_int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)
    return parser


def _limit_threads():
    raw = os.environ.get("UNMIX_THREADS")
    if raw is None:
        return contextlib.nullcontext()
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise UsageError(f"UNMIX_THREADS must be a positive integer, got {raw!r}")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        with _limit_threads():
            args.func(args, argv)
    except UsageError as exc:
        print(f"ipnmf {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"ipnmf {args.command}: solver diverged at iteration {exc.iteration}", file=sys.stderr)
        return EXIT_DIVERGED
    except (UnmixingError, ValueError, OSError) as exc:
        print(f"ipnmf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
