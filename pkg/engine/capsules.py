"""Data model for capsule routing instances.

Every type here is an immutable value: arrays are copied to float64 and marked
read-only on construction, so downstream code can assume well-formed inputs.
"""

import hashlib
import json
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Optional

import numpy as np
from absl import logging

# ---------------- CONSTANTS ----------------
ROW_SUM_TOL = 1e-12
# row sums this close to 1 are plain rounding and are left untouched
ROUNDING_FLOOR = 64 * np.finfo(np.float64).eps
ENERGY_TOL = 1e-12
OUTPUT_TOL = 1e-12
DEFAULT_ITERATIONS = 3


# ---------------- ERRORS ----------------
class CapsuleInputError(ValueError):
    def __init__(self, message, capsule=None):
        if capsule is not None:
            message = f"capsule {capsule}: {message}"
        super().__init__(message)
        self.capsule = capsule


class DimensionMismatchError(CapsuleInputError):
    pass


class NonFiniteError(CapsuleInputError):
    pass


class EmptyInputError(CapsuleInputError):
    pass


class DomainError(CapsuleInputError):
    pass


class OffSimplexError(CapsuleInputError):
    pass


def _frozen(values, name, capsule=None):
    try:
        arr = np.array(values, dtype=np.float64, copy=True)
    except (TypeError, ValueError) as exc:
        raise DimensionMismatchError(f"{name} is not a numeric array: {exc}", capsule)
    arr.setflags(write=False)
    return arr


def _require_finite(arr, name, capsule=None):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN or Inf", capsule)


# ---------------- PREDICTIONS ----------------
@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Prediction matrices U_j, one D_j x M matrix per output capsule.

    Column i of ``predictions[j]`` is the vote of input capsule i for output
    capsule j. Output dimensions may differ between capsules.
    """

    predictions: tuple

    def __post_init__(self):
        mats = tuple(self.predictions)
        if not mats:
            raise EmptyInputError("prediction set has no output capsules")
        frozen = []
        num_input = None
        for j, mat in enumerate(mats):
            arr = _frozen(mat, "prediction matrix", j)
            if arr.ndim != 2:
                raise DimensionMismatchError(f"expected a 2-D matrix, got shape {arr.shape}", j)
            if arr.shape[0] < 1:
                raise DimensionMismatchError("output dimension must be at least 1", j)
            if arr.shape[1] < 1:
                raise EmptyInputError("prediction matrix has no input columns", j)
            if num_input is None:
                num_input = arr.shape[1]
            elif arr.shape[1] != num_input:
                raise DimensionMismatchError(
                    f"expected {num_input} input columns, got {arr.shape[1]}", j)
            _require_finite(arr, "prediction matrix", j)
            frozen.append(arr)
        object.__setattr__(self, "predictions", tuple(frozen))

    @classmethod
    def uniform(cls, stacked):
        """Builds a set with equal output dimensions from an (N, D, M) array."""
        arr = np.asarray(stacked, dtype=np.float64)
        if arr.ndim != 3:
            raise DimensionMismatchError(f"expected an (N, D, M) array, got shape {arr.shape}")
        return cls(tuple(arr[j] for j in range(arr.shape[0])))

    @property
    def num_input(self):
        return self.predictions[0].shape[1]

    @property
    def num_output(self):
        return len(self.predictions)

    @property
    def dims(self):
        return [mat.shape[0] for mat in self.predictions]

    @property
    def shape(self):
        return (self.num_input, self.num_output)

    def vote(self, j, i):
        """The prediction vector u_{j|i}."""
        return self.predictions[j][:, i]

    def to_dict(self):
        return {
            "num_input": self.num_input,
            "num_output": self.num_output,
            "dims": self.dims,
            "predictions": [mat.tolist() for mat in self.predictions],
        }


def _count(raw, name):
    """An integral header value; 2.0 is accepted, 2.7 is not."""
    try:
        value = int(raw)
        exact = float(raw) == value
    except (TypeError, ValueError, OverflowError) as exc:
        raise DimensionMismatchError(f"{name} is not an integer: {exc}")
    if isinstance(raw, bool) or not exact:
        raise DimensionMismatchError(f"{name} must be an integer, got {raw!r}")
    return value


def validate_prediction_set(raw):
    """Checks a candidate instance and returns it as a PredictionSet.

    ``raw`` is either the instance-JSON mapping (num_input, num_output, dims,
    predictions) or a plain sequence of D_j x M matrices.
    """
    if isinstance(raw, PredictionSet):
        return raw
    if isinstance(raw, Mapping):
        try:
            num_input = _count(raw["num_input"], "num_input")
            num_output = _count(raw["num_output"], "num_output")
            dims = [_count(d, "dims entry") for d in raw["dims"]]
            mats = list(raw["predictions"])
        except KeyError as exc:
            raise DimensionMismatchError(f"instance is missing field {exc}")
        except (TypeError, ValueError) as exc:
            raise DimensionMismatchError(f"instance header is malformed: {exc}")
        if num_input < 1 or num_output < 1:
            raise EmptyInputError(f"need M >= 1 and N >= 1, got M={num_input}, N={num_output}")
        if len(dims) != num_output:
            raise DimensionMismatchError(f"dims lists {len(dims)} capsules, expected {num_output}")
        if len(mats) != num_output:
            raise DimensionMismatchError(
                f"predictions lists {len(mats)} matrices, expected {num_output}", len(mats))
        for j, mat in enumerate(mats):
            arr = _frozen(mat, "prediction matrix", j)
            if arr.shape != (dims[j], num_input):
                raise DimensionMismatchError(
                    f"expected shape {(dims[j], num_input)}, got {arr.shape}", j)
        return PredictionSet(tuple(mats))
    if isinstance(raw, (list, tuple)):
        return PredictionSet(tuple(raw))
    raise DimensionMismatchError(f"cannot read a prediction set from {type(raw).__name__}")


# ---------------- COUPLINGS / LOGITS ----------------
@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """Row-stochastic M x N coupling coefficients c_ij."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionMismatchError(f"coupling matrix must be a non-empty 2-D array, got {arr.shape}")
        _require_finite(arr, "coupling matrix")
        if np.any(arr < 0.0):
            raise OffSimplexError(f"coupling matrix has negative entry {arr.min():.3e}")
        deviation = np.abs(arr.sum(axis=1) - 1.0)
        if np.any(deviation > ROW_SUM_TOL):
            row = int(np.argmax(deviation))
            raise OffSimplexError(f"row {row} sums to {arr[row].sum()!r}")
        drifted = deviation > ROUNDING_FLOOR
        if np.any(drifted):
            arr[drifted] /= arr[drifted].sum(axis=1, keepdims=True)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def shape(self):
        return self.values.shape

    def row(self, i):
        return self.values[i, :]

    def column(self, j):
        return self.values[:, j]


@dataclass(frozen=True, eq=False)
class LogitMatrix:
    """Routing logits b_ij."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values, "logit matrix")
        if arr.ndim != 2:
            raise DimensionMismatchError(f"logit matrix must be 2-D, got {arr.shape}")
        _require_finite(arr, "logit matrix")
        object.__setattr__(self, "values", arr)

    @classmethod
    def zeros(cls, num_input, num_output):
        return cls(np.zeros((num_input, num_output)))

    @property
    def shape(self):
        return self.values.shape


def uniform_coupling(num_input, num_output):
    """Softmax of an all-zero logit matrix: every entry is 1/N."""
    if num_input < 1 or num_output < 1:
        raise EmptyInputError(f"need M >= 1 and N >= 1, got M={num_input}, N={num_output}")
    return CouplingMatrix(np.full((num_input, num_output), 1.0 / num_output))


def coupling_values(C):
    """Raw array behind a CouplingMatrix; plain arrays pass through."""
    return C.values if isinstance(C, CouplingMatrix) else np.asarray(C, dtype=np.float64)


def logit_values(B):
    return B.values if isinstance(B, LogitMatrix) else np.asarray(B, dtype=np.float64)


# ---------------- OUTPUTS ----------------
def _norm(x):
    return float(np.hypot.reduce(x.reshape(-1), initial=0.0))


def _check_squashed(s, v, capsule):
    """v must point along s with |v| = |s|^2 / (1 + |s|^2), strictly below 1
    unless that factor is within rounding of 1."""
    s_norm, v_norm = _norm(s), _norm(v)
    expected = s_norm / (s_norm + 1.0 / s_norm) if s_norm > 0.0 else 0.0
    if v_norm >= 1.0 and expected < 1.0 - OUTPUT_TOL:
        raise DomainError(f"output norm {v_norm!r} is not below 1", capsule)
    if abs(v_norm - expected) > OUTPUT_TOL:
        raise DomainError(f"output norm {v_norm!r}, expected {expected!r} from |s| = {s_norm!r}", capsule)
    if v_norm > 0.0 and s_norm == 0.0:
        raise DomainError("output must be zero when its net input is", capsule)
    if v_norm > 0.0:
        cosine = float((v / v_norm) @ (s / s_norm))
        if cosine < 1.0 - OUTPUT_TOL:
            raise DomainError(f"output is not parallel to its net input (cos {cosine!r})", capsule)


@dataclass(frozen=True, eq=False)
class OutputSet:
    """Net inputs s_j and squashed outputs v_j of the output capsules."""

    net_inputs: tuple
    outputs: tuple

    def __post_init__(self):
        net = tuple(_frozen(s, "net input", j) for j, s in enumerate(self.net_inputs))
        out = tuple(_frozen(v, "output", j) for j, v in enumerate(self.outputs))
        if len(net) != len(out):
            raise DimensionMismatchError(f"{len(net)} net inputs but {len(out)} outputs")
        for j, (s, v) in enumerate(zip(net, out)):
            if s.shape != v.shape:
                raise DimensionMismatchError(f"net input {s.shape} vs output {v.shape}", j)
            _require_finite(s, "net input", j)
            _require_finite(v, "output", j)
            _check_squashed(s, v, j)
        object.__setattr__(self, "net_inputs", net)
        object.__setattr__(self, "outputs", out)

    def __len__(self):
        return len(self.outputs)

    def net_norms(self):
        return np.array([_norm(s) for s in self.net_inputs])

    def output_norms(self):
        return np.array([_norm(v) for v in self.outputs])


# ---------------- TRAJECTORY ----------------
@dataclass(frozen=True, eq=False)
class RoutingRecord:
    iteration: int
    logits: Optional[LogitMatrix]
    coupling: Optional[CouplingMatrix]
    outputs: OutputSet
    total_energy: float
    per_capsule_energy: np.ndarray
    lyapunov_gap: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "per_capsule_energy", _frozen(self.per_capsule_energy, "energies"))


@dataclass(frozen=True, eq=False)
class RoutingTrajectory:
    """Per-iteration record of a routing run, iteration 0 first."""

    records: tuple

    def __post_init__(self):
        records = tuple(self.records)
        if not records:
            raise EmptyInputError("a trajectory needs at least the iteration-0 record")
        for expected, record in enumerate(records):
            if record.iteration != expected:
                raise DimensionMismatchError(
                    f"record {expected} carries iteration index {record.iteration}")
            total = -float(np.sum(record.per_capsule_energy))
            if abs(record.total_energy - total) > ENERGY_TOL:
                raise DomainError(
                    f"iteration {expected}: total energy {record.total_energy!r} != {total!r}")
        object.__setattr__(self, "records", records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, index):
        return self.records[index]

    def __iter__(self):
        return iter(self.records)

    @property
    def final(self):
        return self.records[-1]

    def total_energies(self):
        return np.array([r.total_energy for r in self.records])

    def per_capsule_energies(self):
        return np.stack([r.per_capsule_energy for r in self.records])

    def lyapunov_gaps(self):
        return [r.lyapunov_gap for r in self.records]


@dataclass(frozen=True)
class RoutingConfig:
    iterations: int = DEFAULT_ITERATIONS
    stop_tolerance: Optional[float] = None
    record_full_state: bool = True

    def __post_init__(self):
        if int(self.iterations) != self.iterations or self.iterations < 0:
            raise DomainError(f"iterations must be a nonnegative integer, got {self.iterations!r}")
        if self.stop_tolerance is not None and not self.stop_tolerance >= 0.0:
            raise DomainError(f"stop tolerance must be >= 0, got {self.stop_tolerance!r}")


# ---------------- INSTANCE JSON ----------------
def dumps_instance(preds):
    return json.dumps(preds.to_dict(), indent=1) + "\n"


def instance_digest(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def save_instance(preds, path):
    """Writes the instance JSON and returns its sha256 digest."""
    text = dumps_instance(preds)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    digest = instance_digest(text)
    logging.info("wrote instance M=%d N=%d to %s (%s)", preds.num_input, preds.num_output, path, digest[:12])
    return digest


def load_instance(path):
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return validate_prediction_set(raw)
