"""Seeded instance generators and the two routing experiments: the energy
trajectory and the 2-D polarization of outputs."""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from absl import logging

from engine.capsules import (
    CapsuleInputError,
    DimensionMismatchError,
    DomainError,
    EmptyInputError,
    PredictionSet,
    RoutingConfig,
)
from engine.energy import LYAPUNOV_TOL
from engine.routing import energy_is_monotone, route_matrix
from engine.scalar_math import log_sum_exp, neg_entropy

# ---------------- CONSTANTS ----------------
COLLAPSE_THRESHOLD = 0.01
SUPPRESSED_NORM = 0.2
ACTIVE_NORM = 0.6
RING_DIM = 2
# uniform(-scale, scale) needs a finite width 2 * scale
MAX_SCALE = np.finfo(np.float64).max / 2.0


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    provenance: dict
    trajectory: object
    series: dict
    final_outputs: object
    flags: dict = field(default_factory=dict)
    gaps: dict = field(default_factory=dict)
    positions: Optional[np.ndarray] = None
    scatter: Optional[list] = None

    def __post_init__(self):
        n = len(self.trajectory)
        for name, values in self.series.items():
            if len(values) != n:
                raise DimensionMismatchError(f"series {name} has {len(values)} points, trajectory {n}")


# ---------------- GENERATORS ----------------
def gen_random_instance(num_input, num_output, dim, scale, seed):
    """Entries i.i.d. uniform on [-scale, scale]; identical for identical arguments."""
    if min(num_input, num_output, dim) < 1:
        raise EmptyInputError(f"need M, N, dim >= 1, got {num_input}, {num_output}, {dim}")
    if not 0.0 <= scale <= MAX_SCALE:
        raise DomainError(f"scale must be finite and >= 0, got {scale!r}")
    rng = np.random.default_rng(seed)
    return PredictionSet(tuple(
        rng.uniform(-scale, scale, size=(dim, num_input)) for _ in range(num_output)))


def ring_centers(cluster_radii):
    """Cluster j sits at angle 2*pi*j/N and radius cluster_radii[j]."""
    n = len(cluster_radii)
    return [
        np.array([r * math.cos(2.0 * math.pi * j / n), r * math.sin(2.0 * math.pi * j / n)])
        for j, r in enumerate(cluster_radii)
    ]


def gen_ring_instance(num_input, cluster_radii, noise, seed):
    """2-D predictions clustered around ring centers with isotropic Gaussian noise."""
    radii = [float(r) for r in cluster_radii]
    if len(radii) < 2:
        raise DimensionMismatchError(f"a ring instance needs at least 2 clusters, got {len(radii)}")
    if num_input < 1:
        raise EmptyInputError(f"need M >= 1, got {num_input}")
    if not all(0.0 <= r < math.inf for r in radii) or not 0.0 <= noise < math.inf:
        raise DomainError("cluster radii and noise must be finite and nonnegative")
    rng = np.random.default_rng(seed)
    return PredictionSet(tuple(
        center[:, None] + noise * rng.standard_normal((RING_DIM, num_input))
        for center in ring_centers(radii)))


def provenance(kind, seed=None, **sizes):
    return {"generator": kind, "seed": seed, **sizes}


# ---------------- METRICS ----------------
def _row_entropies(record):
    C = record.coupling.values
    if record.logits is not None:
        # H(softmax(b)) = lse(b) - b.softmax(b); exact ln N at b = 0
        B = record.logits.values
        return np.array([max(0.0, log_sum_exp(B[i]) - float(B[i] @ C[i])) for i in range(C.shape[0])])
    return np.array([-neg_entropy(C[i]) for i in range(C.shape[0])])


def polarization_metrics(trajectory):
    """Mean row entropy of C (nats) and the largest coupling of each row, per iteration."""
    entropy, max_coupling = [], []
    for record in trajectory:
        if record.coupling is None:
            raise CapsuleInputError(
                f"iteration {record.iteration} has no coupling matrix; route with record_full_state")
        entropy.append(float(np.mean(_row_entropies(record))))
        max_coupling.append(np.max(record.coupling.values, axis=1))
    max_coupling = np.array(max_coupling)
    return {
        "row_entropy_mean": np.array(entropy),
        "max_coupling": max_coupling,
        "max_coupling_mean": max_coupling.mean(axis=1),
    }


def _series(trajectory):
    agreements = trajectory.per_capsule_energies()
    norms = np.array([r.outputs.output_norms() for r in trajectory])
    series = {
        "total_agreement": -trajectory.total_energies(),
        "agreement": agreements,
        "norm_v": norms,
    }
    series.update(polarization_metrics(trajectory))
    return series


def _gaps(trajectory):
    gaps = [g for g in trajectory.lyapunov_gaps() if g is not None]
    return {
        "lyapunov_min": min(gaps) if gaps else None,
        "lyapunov_tolerance": LYAPUNOV_TOL,
        "monotone": energy_is_monotone(trajectory),
    }


# ---------------- EXPERIMENTS ----------------
def run_numerical_experiment(preds, iterations, source=None):
    """Agreement trajectory: total sum_j psi(|s_j|) and each capsule's share."""
    trajectory = route_matrix(preds, RoutingConfig(iterations=iterations))
    series = _series(trajectory)
    final = series["agreement"][-1]
    collapsed = [int(j) for j in np.flatnonzero(final < COLLAPSE_THRESHOLD)]
    if collapsed:
        logging.info("capsules %s collapsed below agreement %.2g", collapsed, COLLAPSE_THRESHOLD)
    return ExperimentReport(
        provenance=source or provenance("given", M=preds.num_input, N=preds.num_output, dims=preds.dims),
        trajectory=trajectory,
        series=series,
        final_outputs=trajectory.final.outputs,
        flags={"collapsed": collapsed},
        gaps=_gaps(trajectory),
    )


def run_distribution_experiment(preds, iterations, source=None):
    """Routing on 2-D predictions; keeps every v_j position and the prediction cloud."""
    if any(d != RING_DIM for d in preds.dims):
        raise DimensionMismatchError(f"distribution experiment needs 2-D capsules, got dims {preds.dims}")
    trajectory = route_matrix(preds, RoutingConfig(iterations=iterations))
    positions = np.array([np.stack(r.outputs.outputs) for r in trajectory])
    scatter = [
        (j, float(mat[0, i]), float(mat[1, i]))
        for j, mat in enumerate(preds.predictions)
        for i in range(preds.num_input)
    ]
    final_norms = trajectory.final.outputs.output_norms()
    flags = {
        "collapsed": [int(j) for j in np.flatnonzero(trajectory.final.per_capsule_energy < COLLAPSE_THRESHOLD)],
        "suppressed": [int(j) for j in np.flatnonzero(final_norms < SUPPRESSED_NORM)],
        "active": [int(j) for j in np.flatnonzero(final_norms > ACTIVE_NORM)],
    }
    logging.info("distribution run: final |v| = %s", np.array2string(final_norms, precision=4))
    return ExperimentReport(
        provenance=source or provenance("given", M=preds.num_input, N=preds.num_output, dims=preds.dims),
        trajectory=trajectory,
        series=_series(trajectory),
        final_outputs=trajectory.final.outputs,
        flags=flags,
        gaps=_gaps(trajectory),
        positions=positions,
        scatter=scatter,
    )
