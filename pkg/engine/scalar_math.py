"""Scalar building blocks of the routing energy: psi, log-sum-exp, softmax,
negative entropy and the squash nonlinearity."""

import math

import numpy as np

from engine.capsules import DomainError, EmptyInputError, NonFiniteError

# ---------------- CONSTANTS ----------------
SIMPLEX_ENTRY_TOL = 1e-12
SIMPLEX_SUM_TOL = 1e-9


def _check_scalar(z):
    if not math.isfinite(z):
        raise NonFiniteError(f"argument {z!r} is not finite")
    if z < 0.0:
        raise DomainError(f"psi is only defined on norms, got {z!r}")
    return float(z)


def _check_vector(x, allow_empty=False):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if arr.size == 0 and not allow_empty:
        raise EmptyInputError("empty vector")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("vector contains NaN or Inf")
    return arr


# ---------------- PSI ----------------
def psi(z):
    """psi(z) = z - arctan(z) on z >= 0."""
    z = _check_scalar(z)
    return z - math.atan(z)


def psi_prime(z):
    z = _check_scalar(z)
    if z <= 1.0:
        z2 = z * z
        return z2 / (1.0 + z2)
    # divide through by z^2 so huge norms do not overflow
    w = 1.0 / z
    return 1.0 / (1.0 + w * w)


def psi_second(z):
    z = _check_scalar(z)
    if z <= 1.0:
        return 2.0 * z / (1.0 + z * z) ** 2
    w = 1.0 / z
    return 2.0 * w ** 3 / (1.0 + w * w) ** 2


# ---------------- LOG-SUM-EXP ----------------
def log_sum_exp(x):
    """ln sum_j exp(x_j), shifted by the max so large entries do not overflow."""
    x = _check_vector(x)
    m = np.max(x)
    return float(m + np.log(np.sum(np.exp(x - m))))


def softmax(x):
    """Gradient of log_sum_exp: exp(x) / sum(exp(x))."""
    x = _check_vector(x)
    e = np.exp(x - np.max(x))
    return e / np.sum(e)


# ---------------- NEGATIVE ENTROPY ----------------
def on_simplex(y):
    y = _check_vector(y)
    return bool(np.all(y >= -SIMPLEX_ENTRY_TOL) and abs(np.sum(y) - 1.0) <= SIMPLEX_SUM_TOL)


def neg_entropy(y):
    """Conjugate of log_sum_exp: sum y_i ln y_i on the simplex, math.inf off it.

    Entries down to -1e-12 are clipped to zero and 0 ln 0 counts as 0.
    """
    y = _check_vector(y)
    if not on_simplex(y):
        return math.inf
    y = np.clip(y, 0.0, None)
    nz = y[y > 0.0]
    return float(np.sum(nz * np.log(nz)))


# ---------------- SQUASH ----------------
def stable_norm(s):
    """Euclidean norm built from hypot, so it never squares an entry and only
    overflows when the norm itself is beyond the float range."""
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    return float(np.hypot.reduce(s, initial=0.0))


def squash(s):
    """(|s|^2 / (1 + |s|^2)) * s / |s|, with squash(0) = 0.

    The factor is written as 1 / (|s| + 1/|s|) so it never forms |s|^2.
    """
    s = _check_vector(s, allow_empty=True)
    norm = stable_norm(s)
    if norm == 0.0:
        return np.zeros_like(s)
    return (1.0 / (norm + 1.0 / norm)) * s
