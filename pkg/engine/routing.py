"""Dynamic routing between capsules, in the literal scalar form and the
matrix (mirror-descent) form.

Both forms record iteration 0 as the uniform-coupling state B = 0 and stop
after computing the outputs of iteration K; no trailing logit update is made.
"""

import dataclasses
import math

import numpy as np
from absl import logging

from engine.capsules import (
    CouplingMatrix,
    DimensionMismatchError,
    DomainError,
    LogitMatrix,
    NonFiniteError,
    OutputSet,
    RoutingConfig,
    RoutingRecord,
    RoutingTrajectory,
)
from engine.energy import (
    GapReport,
    LYAPUNOV_TOL,
    capsule_agreements,
    grad_big_phi,
    grad_big_psi,
    lyapunov_gap,
    net_inputs,
)
from engine.scalar_math import psi, squash

# ---------------- CONSTANTS ----------------
EQUIVALENCE_TOL = 1e-12


@dataclasses.dataclass(frozen=True, eq=False)
class RoutingState:
    """Loop state of the matrix form; ``coupling`` is always softmax(``logits``)."""

    logits: LogitMatrix
    coupling: CouplingMatrix
    outputs: OutputSet
    iteration: int = 0


def coupling_outputs(preds, C):
    s = net_inputs(preds, C)
    return OutputSet(tuple(s), tuple(squash(sj) for sj in s))


def initial_state(preds):
    B = LogitMatrix.zeros(*preds.shape)
    C = grad_big_phi(B)
    return RoutingState(B, C, coupling_outputs(preds, C), 0)


def routing_step(preds, state):
    """B <- B - grad Psi(C); C <- grad Phi(B)."""
    if state.logits.shape != preds.shape:
        raise DimensionMismatchError(
            f"state shape {state.logits.shape} does not match instance {preds.shape}")
    B = LogitMatrix(state.logits.values - grad_big_psi(preds, state.coupling))
    C = grad_big_phi(B)
    return RoutingState(B, C, coupling_outputs(preds, C), state.iteration + 1)


def _values(m):
    return m.values if isinstance(m, (CouplingMatrix, LogitMatrix)) else np.asarray(m, dtype=np.float64)


def nonlinear_gd_step(mirror_grad, energy_grad, u, eta):
    """One step of u' = u - eta * grad E(x), x' = grad f(u') with x = grad f(u)."""
    if not (math.isfinite(eta) and eta >= 0.0):
        raise DomainError(f"step size must be a nonnegative real, got {eta!r}")
    u = _values(u)
    x = _values(mirror_grad(u))
    g = _values(energy_grad(x))
    if g.shape != u.shape:
        raise DimensionMismatchError(f"energy gradient shape {g.shape} vs iterate {u.shape}")
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("energy gradient is not finite")
    u_next = u - eta * g
    return u_next, _values(mirror_grad(u_next))


def run_nonlinear_gd(mirror_grad, energy_grad, u0, etas):
    """Iterates (u_t, x_t) of the nonlinear gradient scheme, one step per eta."""
    u = _values(u0)
    iterates = [(u, _values(mirror_grad(u)))]
    for eta in etas:
        u, x = nonlinear_gd_step(mirror_grad, energy_grad, u, eta)
        iterates.append((u, x))
    return iterates


def _record(preds, B, C, outputs, iteration, gap):
    agreements = capsule_agreements(preds, C)
    return RoutingRecord(
        iteration=iteration,
        logits=B,
        coupling=C,
        outputs=outputs,
        total_energy=-float(np.sum(agreements)),
        per_capsule_energy=agreements,
        lyapunov_gap=gap,
    )


def _finish(records, config):
    if not config.record_full_state:
        last = len(records) - 1
        records = [
            r if r.iteration in (0, last) else dataclasses.replace(r, logits=None, coupling=None)
            for r in records
        ]
    return RoutingTrajectory(tuple(records))


# ---------------- MATRIX FORM ----------------
def route_matrix(preds, config=RoutingConfig()):
    state = initial_state(preds)
    records = [_record(preds, state.logits, state.coupling, state.outputs, 0, None)]
    worst = math.inf
    for r in range(config.iterations):
        nxt = routing_step(preds, state)
        gap = lyapunov_gap(preds, state.coupling, nxt.coupling, context=f"iteration {r + 1}")
        if not gap.passed:
            logging.warning("energy descent violated at %s: gap %.3e", gap.context, gap.value)
        worst = min(worst, gap.value)
        delta = float(np.linalg.norm(nxt.coupling.values - state.coupling.values))
        state = nxt
        records.append(_record(preds, state.logits, state.coupling, state.outputs, r + 1, gap.value))
        logging.vlog(1, "iteration %d: energy %.6f dC %.3e gap %.3e",
                     r + 1, records[-1].total_energy, delta, gap.value)
        if config.stop_tolerance is not None and delta < config.stop_tolerance:
            logging.info("early stop after %d iterations (|dC| = %.3e)", r + 1, delta)
            break
    logging.info("matrix routing M=%d N=%d: %d records, final energy %.6f, min gap %.3e",
                 preds.num_input, preds.num_output, len(records), records[-1].total_energy, worst)
    return _finish(records, config)


# ---------------- SCALAR FORM ----------------
def route_scalar(preds, config=RoutingConfig()):
    """The routing procedure written entry by entry, as plain loops."""
    M, N = preds.shape
    dims = preds.dims
    U = [mat.tolist() for mat in preds.predictions]
    b = [[0.0] * N for _ in range(M)]
    prev_c = None
    records = []
    for r in range(config.iterations + 1):
        c = [[0.0] * N for _ in range(M)]
        for i in range(M):
            top = max(b[i])
            exps = [math.exp(b[i][k] - top) for k in range(N)]
            total = sum(exps)
            for j in range(N):
                c[i][j] = exps[j] / total

        s = []
        for j in range(N):
            sj = [0.0] * dims[j]
            for i in range(M):
                for d in range(dims[j]):
                    sj[d] += c[i][j] * U[j][d][i]
            s.append(sj)

        v = []
        energies = []
        for j in range(N):
            norm = math.hypot(*s[j])
            factor = 1.0 / (norm + 1.0 / norm) if norm > 0.0 else 0.0
            v.append([factor * x for x in s[j]])
            energies.append(psi(norm))

        records.append(RoutingRecord(
            iteration=r,
            logits=LogitMatrix(b),
            coupling=CouplingMatrix(c),
            outputs=OutputSet(tuple(s), tuple(v)),
            total_energy=-float(np.sum(energies)),
            per_capsule_energy=np.array(energies),
        ))

        if prev_c is not None and config.stop_tolerance is not None:
            delta = math.sqrt(sum((c[i][j] - prev_c[i][j]) ** 2 for i in range(M) for j in range(N)))
            if delta < config.stop_tolerance:
                logging.info("early stop after %d iterations (|dC| = %.3e)", r, delta)
                break
        if r == config.iterations:
            break
        prev_c = c

        for i in range(M):
            for j in range(N):
                b[i][j] += sum(U[j][d][i] * v[j][d] for d in range(dims[j]))

    logging.info("scalar routing M=%d N=%d: %d records", M, N, len(records))
    return _finish(records, config)


# ---------------- CROSS-CHECKS ----------------
def compare_trajectories(a, b, tolerance=EQUIVALENCE_TOL):
    """Largest entrywise difference of B, C and v across two trajectories."""
    if len(a) != len(b):
        return GapReport.upper(math.inf, tolerance, f"length {len(a)} vs {len(b)}")
    worst = 0.0
    for ra, rb in zip(a, b):
        pairs = []
        if ra.logits is not None and rb.logits is not None:
            pairs.append(("B", ra.logits.values, rb.logits.values))
        if ra.coupling is not None and rb.coupling is not None:
            pairs.append(("C", ra.coupling.values, rb.coupling.values))
        if len(ra.outputs) != len(rb.outputs):
            return GapReport.upper(math.inf, tolerance, f"iteration {ra.iteration}: capsule count differs")
        pairs.extend((f"v{j}", va, vb) for j, (va, vb) in enumerate(zip(ra.outputs.outputs, rb.outputs.outputs)))
        for name, x, y in pairs:
            if x.shape != y.shape:
                return GapReport.upper(math.inf, tolerance, f"iteration {ra.iteration}: {name} shape differs")
            worst = max(worst, float(np.max(np.abs(x - y), initial=0.0)))
    return GapReport.upper(worst, tolerance, "max |a - b| over B, C, v")


def energy_is_monotone(trajectory, tolerance=LYAPUNOV_TOL):
    """True when every recorded Lyapunov gap passes and total energy never rises."""
    energies = trajectory.total_energies()
    gaps = [g for g in trajectory.lyapunov_gaps() if g is not None]
    return bool(np.all(np.diff(energies) <= tolerance) and all(g >= -tolerance for g in gaps))
