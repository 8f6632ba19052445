"""Matrix energies of dynamic routing and the gaps that make their
convergence properties checkable.

Psi(C) = -sum_j psi(|U_j C(:,j)|) is the concave energy routing descends;
Phi(B) = sum_i lse(B(i,:)) is the mirror map whose gradient turns logits into
couplings, and Phi* is its conjugate (row-wise negative entropy).
"""

import math
from dataclasses import dataclass

import numpy as np
from absl import logging

from engine.capsules import (
    DimensionMismatchError,
    DomainError,
    NonFiniteError,
    OffSimplexError,
    CouplingMatrix,
    coupling_values,
    logit_values,
)
from engine.scalar_math import log_sum_exp, neg_entropy, on_simplex, psi, softmax, squash, stable_norm

# ---------------- CONSTANTS ----------------
FENCHEL_TOL = 1e-10
LYAPUNOV_TOL = 1e-9
CONJUGATE_PAIR_TOL = 1e-9
CHORD_TOL = 1e-12
GRADIENT_TOL = 1e-5
FD_STEP = 1e-5
PROBE_BOX = 5.0
CHORD_THETAS = (0.25, 0.5, 0.75)


@dataclass(frozen=True)
class GapReport:
    """Outcome of one numeric check.

    ``kind`` says how ``value`` is judged: "lower" passes when
    value >= -tolerance, "upper" when value <= tolerance, "band" when
    |value| <= tolerance.
    """

    value: float
    tolerance: float
    passed: bool
    context: str = ""
    kind: str = "lower"

    @classmethod
    def lower(cls, value, tolerance, context=""):
        return cls(float(value), tolerance, bool(value >= -tolerance), str(context), "lower")

    @classmethod
    def upper(cls, value, tolerance, context=""):
        return cls(float(value), tolerance, bool(value <= tolerance), str(context), "upper")

    @classmethod
    def band(cls, value, tolerance, context=""):
        return cls(float(value), tolerance, bool(abs(value) <= tolerance), str(context), "band")


def _check_shape(preds, C):
    if C.shape != preds.shape:
        raise DimensionMismatchError(f"coupling shape {C.shape} does not match instance {preds.shape}")


# ---------------- PSI ENERGY ----------------
def net_inputs(preds, C):
    """s_j = U_j C(:,j) for every output capsule."""
    C = coupling_values(C)
    _check_shape(preds, C)
    return [mat @ C[:, j] for j, mat in enumerate(preds.predictions)]


def capsule_agreements(preds, C):
    """psi(|s_j|) per output capsule; -sum of these is Psi(C)."""
    return np.array([psi(stable_norm(s)) for s in net_inputs(preds, C)])


def big_psi(preds, C):
    return -float(np.sum(capsule_agreements(preds, C)))


def grad_big_psi(preds, C):
    """Column j is -U_j^T squash(U_j C(:,j)), so B - grad is the routing update."""
    C = coupling_values(C)
    grad = np.empty(C.shape)
    for j, s in enumerate(net_inputs(preds, C)):
        grad[:, j] = -(preds.predictions[j].T @ squash(s))
    return grad


# ---------------- PHI ENERGY ----------------
def _finite_logits(B):
    B = logit_values(B)
    if B.ndim != 2:
        raise DimensionMismatchError(f"logit matrix must be 2-D, got {B.shape}")
    if not np.all(np.isfinite(B)):
        raise NonFiniteError("logit matrix contains NaN or Inf")
    return B


def big_phi(B):
    B = _finite_logits(B)
    m = np.max(B, axis=1)
    return float(np.sum(m + np.log(np.sum(np.exp(B - m[:, None]), axis=1))))


def grad_big_phi(B):
    """Row-wise softmax of B as a CouplingMatrix."""
    B = _finite_logits(B)
    e = np.exp(B - np.max(B, axis=1, keepdims=True))
    return CouplingMatrix(e / np.sum(e, axis=1, keepdims=True))


def big_phi_star(C):
    C = coupling_values(C)
    total = 0.0
    for i in range(C.shape[0]):
        value = neg_entropy(C[i])
        if math.isinf(value):
            raise OffSimplexError(f"row {i} is not a probability vector")
        total += value
    return total


def fenchel_young_residual(B):
    """Phi(B) + Phi*(grad Phi(B)) - tr(B^T grad Phi(B)); zero for every B."""
    B = _finite_logits(B)
    C = grad_big_phi(B).values
    return big_phi(B) + big_phi_star(C) - float(np.sum(B * C))


# ---------------- GAPS ----------------
def fenchel_gap(x, y, tolerance=FENCHEL_TOL):
    """lse(x) + negent(y) - x.y, nonnegative by Fenchel-Young, zero at y = softmax(x)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"length {x.size} vs {y.size}")
    if not on_simplex(y):
        raise OffSimplexError("y is not a probability vector")
    value = log_sum_exp(x) + neg_entropy(y) - float(x @ y)
    if np.allclose(y, softmax(x), rtol=0.0, atol=1e-12):
        return GapReport.band(value, tolerance, "fenchel equality")
    return GapReport.lower(value, tolerance, "fenchel")


def lyapunov_gap(preds, C_prev, C_next, tolerance=LYAPUNOV_TOL, context=""):
    """Psi(C_prev) - Psi(C_next) - |C_prev - C_next|_F^2, nonnegative along routing."""
    prev = coupling_values(C_prev)
    nxt = coupling_values(C_next)
    if prev.shape != nxt.shape:
        raise DimensionMismatchError(f"coupling shapes {prev.shape} and {nxt.shape} differ")
    value = big_psi(preds, prev) - big_psi(preds, nxt) - float(np.sum((prev - nxt) ** 2))
    return GapReport.lower(value, tolerance, context)


# ---------------- ORACLES ----------------
def fd_gradient(f, at, step=FD_STEP):
    """Central-difference gradient of a scalar function of an array."""
    if not step > 0.0:
        raise DomainError(f"finite-difference step must be positive, got {step!r}")
    x = np.array(at, dtype=np.float64, copy=True)
    grad = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        f_plus = f(x.copy())
        x[idx] = orig - step
        f_minus = f(x.copy())
        x[idx] = orig
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise NonFiniteError(f"function is not finite near index {idx}")
        grad[idx] = (f_plus - f_minus) / (2.0 * step)
    return grad


def relative_gradient_error(analytic, numeric, tolerance=GRADIENT_TOL, context=""):
    """max|a - n| / max(1, max|a|) as an upper-bound report."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.shape != numeric.shape:
        raise DimensionMismatchError(f"gradient shapes {analytic.shape} and {numeric.shape} differ")
    scale = max(1.0, float(np.max(np.abs(analytic), initial=0.0)))
    value = float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale
    return GapReport.upper(value, tolerance, context)


def chord_convexity_probe(f, dim, samples, seed, sampler=None, tolerance=CHORD_TOL, context=""):
    """Minimum chord slack (1-t) f(x) + t f(y) - f((1-t) x + t y) over seeded pairs.

    Points come from ``sampler(rng)`` when given, otherwise uniformly from the
    box [-5, 5]^dim (``dim`` may be a shape tuple).
    """
    if samples < 1:
        raise DomainError(f"need at least one sample, got {samples}")
    rng = np.random.default_rng(seed)
    if sampler is None:
        def sampler(r):
            return r.uniform(-PROBE_BOX, PROBE_BOX, size=dim)

    worst = math.inf
    for _ in range(samples):
        x = sampler(rng)
        y = sampler(rng)
        fx, fy = f(x), f(y)
        for theta in CHORD_THETAS:
            mid = f((1.0 - theta) * x + theta * y)
            if not (math.isfinite(fx) and math.isfinite(fy) and math.isfinite(mid)):
                raise NonFiniteError("function value is not finite on the probe box")
            worst = min(worst, (1.0 - theta) * fx + theta * fy - mid)
    report = GapReport.lower(worst, tolerance, context or f"chord probe seed={seed}")
    if not report.passed:
        logging.warning("chord probe %s: min slack %.3e", report.context, worst)
    return report


def conjugate_curvature_probes(dim, samples, seed, tolerance=CHORD_TOL):
    """Chord probes of x -> |x|^2/2 - lse(x) on the box and
    y -> negent(y) - |y|^2/2 on the simplex; both are convex."""
    def lse_gap(x):
        return 0.5 * float(x @ x) - log_sum_exp(x)

    def entropy_gap(y):
        return neg_entropy(y) - 0.5 * float(y @ y)

    def simplex_point(rng):
        return rng.dirichlet(np.ones(dim))

    return (
        chord_convexity_probe(lse_gap, dim, samples, seed, tolerance=tolerance,
                              context="half-norm minus lse"),
        chord_convexity_probe(entropy_gap, dim, samples, seed, sampler=simplex_point,
                              tolerance=tolerance, context="negent minus half-norm"),
    )
