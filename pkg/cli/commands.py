"""Command implementations behind main.py. Each returns an ExitStatus;
invalid arguments raise absl's UsageError with exit code 2."""

import enum
import math
import os

from absl import app
from absl import logging

from engine.capsules import (
    CapsuleInputError,
    RoutingConfig,
    dumps_instance,
    instance_digest,
    load_instance,
)
from engine.energy import LYAPUNOV_TOL
from engine.checks import DEFAULT_CHORDS, DEFAULT_SIZES, run_suite, summarize
from engine.experiments import (
    gen_random_instance,
    gen_ring_instance,
    provenance,
    run_distribution_experiment,
    run_numerical_experiment,
)
from engine.routing import compare_trajectories, route_matrix, route_scalar
from export import svg, tables

# ---------------- CONSTANTS ----------------
SEED_ENV = "CAPSROUTE_SEED"
FALLBACK_SEED = 42
FORMS = ("scalar", "matrix", "both")
EXPERIMENTS = ("numerical", "distribution")
LOAD_ERRORS = (ValueError, OSError, KeyError, TypeError)


class ExitStatus(enum.IntEnum):
    OK = 0
    VIOLATION = 1
    USAGE = 2


def usage(message):
    return app.UsageError(message, exitcode=int(ExitStatus.USAGE))


def resolve_seed(seed):
    """Explicit seed wins, then $CAPSROUTE_SEED, then 42."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise usage(f"{SEED_ENV}={env!r} is not an integer")
    return FALLBACK_SEED


def _load(path):
    try:
        return load_instance(path)
    except LOAD_ERRORS as exc:
        logging.error("cannot read instance %s: %s", path, exc)
        return None


# ---------------- GEN ----------------
def cmd_gen(kind, out_path, m=None, n=3, dim=2, scale=1.0, seed=None,
            radii=(0.0, 1.0, 1.0, 1.0), noise=0.1):
    if m is None:
        raise usage("--m is required")
    if not out_path:
        raise usage("-o/--out is required")
    seed = resolve_seed(seed)
    try:
        if kind == "random":
            preds = gen_random_instance(m, n, dim, scale, seed)
        elif kind == "ring":
            preds = gen_ring_instance(m, radii, noise, seed)
        else:
            raise usage(f"unknown generator kind {kind!r}")
    except CapsuleInputError as exc:
        raise usage(str(exc))

    text = dumps_instance(preds)
    try:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        logging.error("cannot write %s: %s", out_path, exc)
        return ExitStatus.USAGE
    digest = instance_digest(text)
    logging.info("generated %s instance M=%d N=%d seed=%d", kind, preds.num_input, preds.num_output, seed)
    print(f"{out_path} sha256:{digest}")
    return ExitStatus.OK


# ---------------- ROUTE ----------------
def cmd_route(input_path, out_csv, iterations=3, form="both", out_couplings_json=None,
              out_svg=None, stop_tolerance=None):
    if form not in FORMS:
        raise usage(f"--form must be one of {FORMS}, got {form!r}")
    if not out_csv:
        raise usage("-o/--out is required")
    try:
        config = RoutingConfig(iterations=iterations, stop_tolerance=stop_tolerance)
    except CapsuleInputError as exc:
        raise usage(str(exc))
    preds = _load(input_path)
    if preds is None:
        return ExitStatus.USAGE

    status = ExitStatus.OK
    matrix = route_matrix(preds, config) if form in ("matrix", "both") else None
    scalar = route_scalar(preds, config) if form in ("scalar", "both") else None
    primary = matrix if matrix is not None else scalar

    if matrix is not None:
        bad = [r.iteration for r in matrix if r.lyapunov_gap is not None and r.lyapunov_gap < -LYAPUNOV_TOL]
        if bad:
            print(f"❌ energy descent violated at iterations {bad}")
            status = ExitStatus.VIOLATION
    if form == "both":
        report = compare_trajectories(matrix, scalar)
        marker = "✅" if report.passed else "❌"
        print(f"{marker} scalar vs matrix: max difference {report.value:.3e} ({report.context})")
        if not report.passed:
            status = ExitStatus.VIOLATION

    try:
        tables.write_trajectory_csv(primary, out_csv)
        if out_couplings_json:
            tables.write_couplings_json(primary, out_couplings_json)
        if out_svg:
            series = {
                "total_agreement": -primary.total_energies(),
                "agreement": primary.per_capsule_energies(),
            }
            svg.write_svg(svg.agreement_plot(series), out_svg)
    except OSError as exc:
        logging.error("cannot write output: %s", exc)
        return ExitStatus.USAGE
    print(f"{out_csv}: {len(primary)} iterations, final agreement {-primary.final.total_energy:.6f}")
    return status


# ---------------- EXPERIMENT ----------------
def cmd_experiment(name, out_dir, iterations=20, input_path=None, seed=None, m=None, n=None,
                   dim=None, scale=1.0, radii=(0.0, 1.0, 1.0, 1.0), noise=0.1):
    if name not in EXPERIMENTS:
        raise usage(f"experiment must be one of {EXPERIMENTS}, got {name!r}")
    if not out_dir:
        raise usage("-o/--out is required")
    if iterations < 0:
        raise usage(f"--iterations must be >= 0, got {iterations}")

    if input_path:
        preds = _load(input_path)
        if preds is None:
            return ExitStatus.USAGE
        source = provenance("file", path=input_path, M=preds.num_input, N=preds.num_output, dims=preds.dims)
    else:
        seed = resolve_seed(seed)
        try:
            if name == "numerical":
                m, n, dim = m or 4, n or 3, dim or 2
                preds = gen_random_instance(m, n, dim, scale, seed)
                source = provenance("random", seed, M=m, N=n, dim=dim, scale=scale)
            else:
                m = m or 30
                preds = gen_ring_instance(m, radii, noise, seed)
                source = provenance("ring", seed, M=m, radii=list(radii), noise=noise)
        except CapsuleInputError as exc:
            raise usage(str(exc))

    try:
        if name == "numerical":
            report = run_numerical_experiment(preds, iterations, source)
            plot = svg.agreement_plot(report.series, "agreement per iteration")
        else:
            report = run_distribution_experiment(preds, iterations, source)
            plot = svg.distribution_plot(report.scatter, report.positions[-1])
    except CapsuleInputError as exc:
        logging.error("%s experiment rejected the instance: %s", name, exc)
        return ExitStatus.USAGE

    config = {"experiment": name, "iterations": iterations}
    try:
        os.makedirs(out_dir, exist_ok=True)
        tables.write_report_json(report, config, os.path.join(out_dir, f"{name}_report.json"))
        tables.write_series_csv(report.series, os.path.join(out_dir, f"{name}_series.csv"))
        svg.write_svg(plot, os.path.join(out_dir, f"{name}.svg"))
    except OSError as exc:
        logging.error("cannot write into %s: %s", out_dir, exc)
        return ExitStatus.USAGE

    for flag, capsules in report.flags.items():
        print(f"{flag}: {capsules}")
    if not report.gaps["monotone"]:
        print(f"❌ energy descent violated (min gap {report.gaps['lyapunov_min']:.3e})")
        return ExitStatus.VIOLATION
    print(f"✅ {name} experiment written to {out_dir}")
    return ExitStatus.OK


# ---------------- CHECK ----------------
def cmd_check(seeds, tolerance=LYAPUNOV_TOL, family="random", sizes=None, chords=DEFAULT_CHORDS,
              workers=1, summary_csv=None):
    if seeds < 1:
        raise usage(f"--seeds must be >= 1, got {seeds}")
    if not (math.isfinite(tolerance) and tolerance >= 0.0):
        raise usage(f"--tolerance must be a nonnegative number, got {tolerance}")
    if family not in ("random", "zero"):
        raise usage(f"--family must be random or zero, got {family!r}")
    if chords < 1 or workers < 1:
        raise usage("--chords and --workers must be >= 1")
    sizes = sizes or DEFAULT_SIZES
    for key, (lo, hi) in sizes.items():
        if lo < 1 or hi < lo:
            raise usage(f"size range for {key} must satisfy 1 <= lo <= hi, got {(lo, hi)}")

    outcomes = run_suite(seeds, family, sizes, tolerance, chords, workers)
    for name, row in summarize(outcomes).items():
        marker = "✅" if row["passed"] else "❌"
        print(f"{marker} {name:<20} worst {row['worst']: .3e} (seed {row['worst_seed']}, "
              f"{row['kind']} tol {row['tolerance']:.0e})")
    failures = [o for o in outcomes if not o.report.passed]
    for o in failures:
        print(f"❌ seed {o.seed} {o.name}: gap {o.report.value:.6e} ({o.report.context})")

    if summary_csv:
        try:
            tables.write_check_csv(outcomes, summary_csv)
        except OSError as exc:
            logging.error("cannot write %s: %s", summary_csv, exc)
            return ExitStatus.USAGE
    return ExitStatus.VIOLATION if failures else ExitStatus.OK
