"""Aggregate charts from completed runs: leakage bars with power-scaled
dots, power-utilization and power-overhead bars, and the thermal-field
triptych. SVG output is deterministic up to the renderer's version stamp.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "thermoshield"

import matplotlib.pyplot as plt
import numpy as np

from .metrics import geometric_mean_abs
from .model import TraceUnit
from .thermal import cell_name
from .traceio import read_summary_csv, read_trace_csv, write_summary_csv

G_MEAN = "g_mean"


def _save(fig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _setting_order(settings) -> list[str]:
    def key(s: str):
        if s == "original":
            return (0, 0.0, s)
        if s.startswith("shield_"):
            try:
                return (1, float(s.split("_", 1)[1]), s)
            except ValueError:
                return (1, 1e9, s)
        if s == "max_avg":
            return (2, 0.0, s)
        return (3, 0.0, s)

    return sorted(set(settings), key=key)


def load_runs(run_dirs) -> list[dict]:
    rows: list[dict] = []
    for d in run_dirs:
        path = Path(d) / "summary.csv"
        if not path.exists():
            raise FileNotFoundError(f"{d}: no summary.csv (incomplete run?)")
        rows.extend(read_summary_csv(path))
    return rows


def grouped_bars(rows, value_key, ylabel, path, dots_key=None, gmean_floor=1e-4):
    """Benchmarks on x, one bar per setting; optional dot overlay. A g_mean
    group is appended."""
    benchmarks = sorted({r["benchmark"] for r in rows})
    settings = _setting_order(r["setting"] for r in rows)
    table = {(r["benchmark"], r["setting"]): r for r in rows}
    labels = benchmarks + [G_MEAN]
    width = 0.9 / max(len(settings), 1)
    fig, ax = plt.subplots(figsize=(max(8.0, 0.7 * len(labels) * len(settings) * 0.35), 4.2))
    for si, setting in enumerate(settings):
        values = []
        for b in benchmarks:
            row = table.get((b, setting))
            v = row.get(value_key) if row else None
            values.append(v if v is not None else np.nan)
        present = [v for v in values if v is not None and not np.isnan(v)]
        gmean = geometric_mean_abs(present, floor=gmean_floor) if present else np.nan
        values.append(gmean)
        x = np.arange(len(labels)) + si * width
        ax.bar(x, values, width=width, label=setting)
        if dots_key is not None:
            dots = []
            for b in benchmarks:
                row = table.get((b, setting))
                v = row.get(dots_key) if row else None
                dots.append(v if v is not None else np.nan)
            dots.append(np.nan)
            ax.plot(x, dots, linestyle="none", marker="o", markersize=3,
                    color="black", zorder=3)
    ax.set_xticks(np.arange(len(labels)) + 0.45 - width / 2)
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=6, ncol=3)
    fig.tight_layout()
    _save(fig, path)


def heatmap_triptych(cell_csv_paths, labels, grid_rows, grid_cols, path):
    """Mean top-layer temperature fields side by side (up to three panels)."""
    panels = list(zip(cell_csv_paths, labels))[:3]
    fig, axes = plt.subplots(1, max(len(panels), 1), figsize=(4.0 * max(len(panels), 1), 3.6))
    if len(panels) == 1:
        axes = [axes]
    fields = []
    for csv_path, _ in panels:
        trace = read_trace_csv(csv_path, TraceUnit.CELSIUS)
        field = np.empty((grid_rows, grid_cols))
        for r in range(grid_rows):
            for c in range(grid_cols):
                field[r, c] = trace.channel(cell_name(0, r, c)).mean()
        fields.append(field)
    vmin = min(f.min() for f in fields)
    vmax = max(f.max() for f in fields)
    for ax, (field, (_, label)) in zip(axes, zip(fields, panels)):
        im = ax.imshow(field, origin="lower", vmin=vmin, vmax=vmax, cmap="inferno")
        ax.set_title(label, fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(im, ax=axes, shrink=0.85, label="mean top-layer temp (degC)")
    _save(fig, path)


def write_report(run_dirs, out_dir, grid_rows=None, grid_cols=None) -> list[Path]:
    """Aggregate CSV plus the chart set; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = load_runs(run_dirs)
    written = []

    agg_rows = list(rows)
    settings = _setting_order(r["setting"] for r in rows)
    for setting in settings:
        sel = [r for r in rows if r["setting"] == setting and r.get("abs_svf") is not None]
        if not sel:
            continue
        agg_rows.append({
            "benchmark": G_MEAN,
            "setting": setting,
            "svf": "",
            "abs_svf": geometric_mean_abs([r["abs_svf"] for r in sel]),
            "scaled_svf": "",
            "mpu": "",
            "power_overhead": geometric_mean_abs(
                [r["power_overhead"] for r in sel if r.get("power_overhead") is not None],
                floor=1e-6) if any(r.get("power_overhead") is not None for r in sel) else "",
            "stsf": "",
            "m_eff": "",
        })
    agg_path = out / "aggregate.csv"
    write_summary_csv(agg_path, agg_rows)
    written.append(agg_path)

    svf_path = out / "svf_by_setting.svg"
    grouped_bars(rows, "abs_svf", "|leakage correlation|", svf_path, dots_key="scaled_svf")
    written.append(svf_path)

    mpu_rows = [r for r in rows if r.get("mpu") is not None]
    if mpu_rows:
        mpu_path = out / "power_utilization.svg"
        grouped_bars(mpu_rows, "mpu", "power utilization (vs max_avg)", mpu_path,
                     gmean_floor=1e-6)
        written.append(mpu_path)

    ovh_rows = [r for r in rows if r.get("power_overhead") is not None]
    if ovh_rows:
        ovh_path = out / "power_overhead.svg"
        grouped_bars(ovh_rows, "power_overhead", "generator power / total power",
                     ovh_path, gmean_floor=1e-6)
        written.append(ovh_path)

    # triptych when the run dirs carry cell-temperature traces
    cell_csvs = [Path(d) / "cell_temps.csv" for d in run_dirs]
    cell_csvs = [p for p in cell_csvs if p.exists()]
    if cell_csvs and grid_rows and grid_cols:
        trip_path = out / "thermal_fields.svg"
        heatmap_triptych(cell_csvs, [p.parent.name for p in cell_csvs],
                         grid_rows, grid_cols, trip_path)
        written.append(trip_path)
    return written
