"""Rendering of the standard result figures from experiment CSV files.

Pure post-processing: every plotted value is a mean or a 95% interval computed
from the delimited records, never from in-memory optimizer state, so figures
are reproducible from archived results alone.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIGURE_IDS = ("convergence", "vs-txpower", "vs-reflectpower", "vs-exponent", "ablations")

# records schema written by the simulate CLI
RECORD_COLUMNS = ["scheme", "algorithm", "sweep_var", "sweep_value", "trial",
                  "secrecy_rate_clamped", "secrecy_rate_unclamped", "iters",
                  "res_c1", "res_c2", "res_c5", "tightness", "runtime_ms", "seed"]
# per-iteration trace schema written by simulate --traces
TRACE_COLUMNS = ["iter", "objective", "res_c1", "res_c2", "res_c5", "tightness", "ms"]

SWEEP_X_LABEL = {
    "p_tx_dbm": "transmit power (dBm)",
    "p_reflect_dbm": "reflect / compensated power (dBm)",
    "eh_target_dbm": "harvested-power target (dBm)",
    "exponent_ab": "direct-link path-loss exponent",
}


class RenderError(ValueError):
    """Input file does not match the expected schema."""


@dataclass
class FigureSpec:
    figure: str
    csv_paths: list
    out_path: str
    labels: list = field(default_factory=list)
    group_keys: tuple = ("scheme", "algorithm")
    title: str | None = None

    def __post_init__(self):
        if self.figure not in FIGURE_IDS:
            raise RenderError(f"figure must be one of {FIGURE_IDS}, got {self.figure!r}")
        if not self.csv_paths:
            raise RenderError("at least one input CSV is required")


def _read_rows(path, required) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        have = reader.fieldnames or []
        missing = [c for c in required if c not in have]
        if missing:
            raise RenderError(f"{path}: missing columns {missing} (found {have})")
        return list(reader)


def _records_series(rows, sweep_var, group_keys):
    """Group records and reduce to mean and 95% interval per sweep point.

    Returns {label: {"x": [...], "mean": [...], "ci": [...], "n": [...]}} with
    NaN records dropped per point.
    """
    groups: dict[tuple, dict[float, list]] = {}
    for row in rows:
        if row["sweep_var"] != sweep_var:
            continue
        label = tuple(row[k] for k in group_keys)
        x = float(row["sweep_value"])
        y = float(row["secrecy_rate_clamped"])
        groups.setdefault(label, {}).setdefault(x, [])
        if not math.isnan(y):
            groups[label][x].append(y)
    series = {}
    for label in sorted(groups):
        xs = sorted(groups[label])
        mean, ci, count = [], [], []
        for x in xs:
            vals = np.asarray(groups[label][x], dtype=float)
            n = vals.size
            count.append(n)
            if n == 0:
                mean.append(float("nan"))
                ci.append(float("nan"))
            else:
                mean.append(float(np.mean(vals)))
                ci.append(1.96 * float(np.std(vals, ddof=1)) / math.sqrt(n) if n >= 2 else 0.0)
        series["/".join(label)] = {"x": xs, "mean": mean, "ci": ci, "n": count}
    return series


def _empty_axes(spec, note):
    warnings.warn(f"{spec.figure}: {note}; writing empty axes")
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.text(0.5, 0.5, note, ha="center", va="center", transform=ax.transAxes)
    ax.set_title(spec.title or spec.figure)
    fig.savefig(spec.out_path, dpi=150)
    plt.close(fig)


def _render_sweep(spec: FigureSpec, sweep_var: str):
    all_series = {}
    for i, path in enumerate(spec.csv_paths):
        rows = _read_rows(path, RECORD_COLUMNS)
        prefix = ""
        if len(spec.csv_paths) > 1:
            prefix = (spec.labels[i] if i < len(spec.labels) else Path(path).stem) + ": "
        for label, data in _records_series(rows, sweep_var, spec.group_keys).items():
            all_series[prefix + label] = data
    if not all_series or all(all(c == 0 for c in s["n"]) for s in all_series.values()):
        _empty_axes(spec, f"no records with sweep_var={sweep_var}")
        return {}

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, data in all_series.items():
        x = np.asarray(data["x"], dtype=float)
        mean = np.asarray(data["mean"], dtype=float)
        ci = np.asarray(data["ci"], dtype=float)
        line, = ax.plot(x, mean, marker="o", label=label)
        ok = ~np.isnan(mean)
        if np.any(ok):
            ax.fill_between(x[ok], (mean - ci)[ok], (mean + ci)[ok],
                            alpha=0.15, color=line.get_color())
    ax.set_xlabel(SWEEP_X_LABEL.get(sweep_var, sweep_var))
    ax.set_ylabel("secrecy sum rate (bits/s/Hz)")
    ax.set_title(spec.title or spec.figure)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.out_path, dpi=150)
    plt.close(fig)
    return all_series


def _render_convergence(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    series = {}
    any_points = False
    for i, path in enumerate(spec.csv_paths):
        rows = _read_rows(path, TRACE_COLUMNS)
        label = spec.labels[i] if i < len(spec.labels) else Path(path).stem
        iters = [int(r["iter"]) for r in rows]
        objective = [float(r["objective"]) for r in rows]
        series[label] = {"x": iters, "mean": objective, "ci": [0.0] * len(iters),
                         "n": [1] * len(iters)}
        if iters:
            any_points = True
            ax.plot(iters, objective, label=label)
    if not any_points:
        plt.close(fig)
        _empty_axes(spec, "trace files contain no iterations")
        return {}
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("secrecy sum rate (bits/s/Hz)")
    ax.set_title(spec.title or "convergence")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.out_path, dpi=150)
    plt.close(fig)
    return series


def render(spec: FigureSpec) -> dict:
    """Render one figure; returns the plotted series for verification.

    The returned mapping holds, per legend label, the x grid and the exact
    mean/interval arrays drawn, so callers can check them against values
    recomputed from the CSV.
    """
    if spec.figure == "convergence":
        return _render_convergence(spec)
    sweep_var = {"vs-txpower": "p_tx_dbm", "vs-reflectpower": "p_reflect_dbm",
                 "vs-exponent": "exponent_ab", "ablations": None}[spec.figure]
    if spec.figure == "ablations":
        # ablation panels share the transmit-power axis; each CSV is one toggle
        return _render_sweep(spec, "p_tx_dbm")
    return _render_sweep(spec, sweep_var)
