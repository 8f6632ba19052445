"""Batch invariant suite over seeded random instances.

Each instance is routed in both forms for CHECK_ITERATIONS steps and every
numeric claim about the routing energy is re-checked on it.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from absl import logging

from engine.capsules import RoutingConfig
from engine.energy import (
    CHORD_TOL,
    CONJUGATE_PAIR_TOL,
    GapReport,
    big_phi,
    big_psi,
    chord_convexity_probe,
    conjugate_curvature_probes,
    fd_gradient,
    fenchel_young_residual,
    grad_big_phi,
    grad_big_psi,
    relative_gradient_error,
)
from engine.experiments import gen_random_instance
from engine.routing import compare_trajectories, route_matrix, route_scalar
from engine.scalar_math import psi_prime, squash

# ---------------- CONSTANTS ----------------
CHECK_ITERATIONS = 20
DEFAULT_SIZES = {"m": (2, 16), "n": (2, 16), "dim": (2, 8)}
SIMPLEX_TOL = 1e-12
SQUASH_TOL = 1e-12
SQUASH_SAMPLES = 10
DEFAULT_CHORDS = 1000
CHECK_NAMES = (
    "lyapunov",
    "equivalence",
    "simplex",
    "grad_psi",
    "grad_phi",
    "fenchel",
    "concavity",
    "conjugate_curvature",
    "squash_identity",
)


@dataclass(frozen=True)
class CheckOutcome:
    seed: int
    num_input: int
    num_output: int
    dim: int
    name: str
    report: GapReport


def instance_for_seed(seed, family="random", sizes=None):
    """Sizes are drawn from ``sizes`` ranges (inclusive) with the seed's own stream."""
    sizes = sizes or DEFAULT_SIZES
    rng = np.random.default_rng(seed)
    m = int(rng.integers(sizes["m"][0], sizes["m"][1] + 1))
    n = int(rng.integers(sizes["n"][0], sizes["n"][1] + 1))
    dim = int(rng.integers(sizes["dim"][0], sizes["dim"][1] + 1))
    scale = 0.0 if family == "zero" else 1.0
    return gen_random_instance(m, n, dim, scale, seed), rng


def simplex_violation(trajectory):
    """Largest row-sum deviation or negative entry over every recorded C."""
    worst = 0.0
    for record in trajectory:
        if record.coupling is None:
            continue
        C = record.coupling.values
        worst = max(worst, float(np.max(np.abs(C.sum(axis=1) - 1.0))), float(-C.min()))
    return worst


def _squash_identity(rng):
    worst = float(np.max(np.abs(squash(np.zeros(3)))))
    for _ in range(SQUASH_SAMPLES):
        s = rng.uniform(-5.0, 5.0, size=int(rng.integers(1, 9)))
        norm = float(np.linalg.norm(s))
        if norm == 0.0:
            continue
        worst = max(worst, float(np.max(np.abs(squash(s) - psi_prime(norm) * s / norm))))
    return worst


def run_instance_checks(seed, family="random", sizes=None, tolerance=1e-9, chords=DEFAULT_CHORDS):
    preds, rng = instance_for_seed(seed, family, sizes)
    m, n = preds.shape
    dim = preds.dims[0]
    config = RoutingConfig(iterations=CHECK_ITERATIONS)
    matrix = route_matrix(preds, config)
    scalar = route_scalar(preds, config)

    gaps = [g for g in matrix.lyapunov_gaps() if g is not None]
    C0 = grad_big_phi(rng.uniform(-2.0, 2.0, size=(m, n))).values
    B0 = rng.uniform(-5.0, 5.0, size=(m, n))
    curvature = conjugate_curvature_probes(n, max(1, chords // 4), seed)

    reports = {
        "lyapunov": GapReport.lower(min(gaps) if gaps else 0.0, tolerance, "min over iterations"),
        "equivalence": compare_trajectories(matrix, scalar),
        "simplex": GapReport.upper(max(simplex_violation(matrix), simplex_violation(scalar)),
                                   SIMPLEX_TOL, "row sums and signs"),
        "grad_psi": relative_gradient_error(
            grad_big_psi(preds, C0), fd_gradient(lambda X: big_psi(preds, X), C0), context="grad Psi"),
        "grad_phi": relative_gradient_error(
            grad_big_phi(B0).values, fd_gradient(big_phi, B0), context="grad Phi"),
        "fenchel": GapReport.band(fenchel_young_residual(B0), CONJUGATE_PAIR_TOL, "Phi + Phi* - tr"),
        "concavity": chord_convexity_probe(
            lambda X: -big_psi(preds, X), (m, n), chords, seed, tolerance=CHORD_TOL, context="-Psi"),
        "conjugate_curvature": GapReport.lower(
            min(r.value for r in curvature), CHORD_TOL, "half-norm gaps"),
        "squash_identity": GapReport.upper(_squash_identity(rng), SQUASH_TOL, "squash vs psi'"),
    }
    return [CheckOutcome(seed, m, n, dim, name, reports[name]) for name in CHECK_NAMES]


def run_suite(seeds, family="random", sizes=None, tolerance=1e-9, chords=DEFAULT_CHORDS, workers=1):
    """Runs every seed in range(seeds); results come back ordered by seed."""
    def one(seed):
        return run_instance_checks(seed, family, sizes, tolerance, chords)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_seed = list(pool.map(one, range(seeds)))
    else:
        per_seed = [one(seed) for seed in range(seeds)]
    outcomes = [o for batch in per_seed for o in batch]
    failed = sum(not o.report.passed for o in outcomes)
    logging.info("invariant suite: %d seeds, %d checks, %d failed", seeds, len(outcomes), failed)
    return outcomes


def summarize(outcomes):
    """Worst value per check name, in CHECK_NAMES order."""
    summary = {}
    for name in CHECK_NAMES:
        rows = [o for o in outcomes if o.name == name]
        if not rows:
            continue
        kind = rows[0].report.kind
        if kind == "lower":
            worst = min(rows, key=lambda o: o.report.value)
        elif kind == "upper":
            worst = max(rows, key=lambda o: o.report.value)
        else:
            worst = max(rows, key=lambda o: abs(o.report.value))
        summary[name] = {
            "worst": worst.report.value,
            "worst_seed": worst.seed,
            "tolerance": worst.report.tolerance,
            "kind": kind,
            "passed": all(o.report.passed for o in rows),
        }
    return summary
