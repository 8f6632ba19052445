"""CSV and JSON artifacts. Numbers are written with 17 significant digits so
64-bit values survive the round trip."""

import csv
import json
import os

import numpy as np
from absl import logging

from engine.experiments import polarization_metrics

# ---------------- CONSTANTS ----------------
TRAJECTORY_COLUMNS = (
    "iteration",
    "capsule",
    "psi_sj",
    "norm_vj",
    "row_entropy_mean",
    "total_agreement",
    "lyapunov_gap",
)
CHECK_COLUMNS = ("seed", "M", "N", "dim", "check", "value", "tolerance", "passed")


def fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


# ---------------- TRAJECTORY ----------------
def trajectory_rows(trajectory):
    entropy = polarization_metrics(trajectory)["row_entropy_mean"]
    rows = []
    for r, record in enumerate(trajectory):
        norms = record.outputs.output_norms()
        for j, agreement in enumerate(record.per_capsule_energy):
            rows.append((
                record.iteration,
                j,
                agreement,
                norms[j],
                entropy[r],
                -record.total_energy,
                record.lyapunov_gap,
            ))
    return rows


def write_trajectory_csv(trajectory, path):
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = _writer(fh)
        out.writerow(TRAJECTORY_COLUMNS)
        for row in trajectory_rows(trajectory):
            out.writerow([fmt(x) for x in row])
    logging.info("wrote trajectory CSV %s", path)


def write_couplings_json(trajectory, path):
    payload = [
        {
            "iteration": r.iteration,
            "B": None if r.logits is None else r.logits.values.tolist(),
            "C": None if r.coupling is None else r.coupling.values.tolist(),
        }
        for r in trajectory
    ]
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


# ---------------- SERIES ----------------
def series_columns(series):
    """Flattens 2-D series into one column per capsule/row: name[j]."""
    columns = []
    for name, values in series.items():
        arr = np.asarray(values)
        if arr.ndim == 1:
            columns.append((name, arr))
        else:
            columns.extend((f"{name}[{j}]", arr[:, j]) for j in range(arr.shape[1]))
    return columns


def write_series_csv(series, path):
    columns = series_columns(series)
    length = len(columns[0][1]) if columns else 0
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = _writer(fh)
        out.writerow(["iteration"] + [name for name, _ in columns])
        for r in range(length):
            out.writerow([str(r)] + [fmt(values[r]) for _, values in columns])


# ---------------- REPORTS ----------------
def report_to_dict(report, config):
    payload = {
        "provenance": report.provenance,
        "config": config,
        "series": {name: np.asarray(values).tolist() for name, values in report.series.items()},
        "flags": report.flags,
        "gaps": report.gaps,
        "final_outputs": [v.tolist() for v in report.final_outputs.outputs],
    }
    if report.positions is not None:
        payload["positions"] = report.positions.tolist()
    return payload


def write_report_json(report, config, path):
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report, config), fh, indent=1, sort_keys=True)
        fh.write("\n")
    logging.info("wrote report %s", path)


# ---------------- CHECK SUMMARY ----------------
def write_check_csv(outcomes, path):
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = _writer(fh)
        out.writerow(CHECK_COLUMNS)
        for o in outcomes:
            out.writerow([
                fmt(o.seed), fmt(o.num_input), fmt(o.num_output), fmt(o.dim),
                o.name, fmt(o.report.value), fmt(o.report.tolerance), fmt(o.report.passed),
            ])
