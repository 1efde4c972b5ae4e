"""CSV schemas shared by the CLI and the library.

Trace files: header ``time_s,<channel>,...``, one row per sample, strictly
increasing uniformly spaced time, decimal values, UTF-8, ``\n`` newlines.
Table files: ``delta_t_c,power_w`` (power table) and ``level,delta_t_c``
(security-level table). Metric summaries:
``benchmark,setting,svf,abs_svf,scaled_svf,mpu,power_overhead,stsf,m_eff``.

Writes are atomic (temp file + rename) and byte-deterministic for identical
inputs.
"""

from __future__ import annotations

import csv
import os
import tempfile
from pathlib import Path

import numpy as np

from .model import Trace, TraceUnit

SUMMARY_COLUMNS = (
    "benchmark", "setting", "svf", "abs_svf", "scaled_svf",
    "mpu", "power_overhead", "stsf", "m_eff",
)


class TraceSchemaError(ValueError):
    """Malformed trace/table file; message names the file and line."""


def fmt(value) -> str:
    """Canonical decimal rendering (shortest round-trip float repr)."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trace_csv(path, trace: Trace) -> None:
    lines = ["time_s," + ",".join(trace.channels)]
    times = trace.times_s()
    for i in range(trace.num_samples):
        row = [fmt(times[i])] + [fmt(v) for v in trace.values[i]]
        lines.append(",".join(row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_columns_csv(path, header, rows) -> None:
    """Generic CSV writer: header is a sequence of names, rows of cells.
    Floats are canonically formatted; everything else written via str."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(c) if isinstance(c, (int, float, np.floating, np.integer))
                              and not isinstance(c, bool) else str(c) for c in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_trace_csv(path, unit: TraceUnit) -> Trace:
    path = Path(path)
    if not path.exists():
        raise TraceSchemaError(f"{path}: no such file")
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceSchemaError(f"{path}: empty file") from None
        if not header or header[0] != "time_s":
            raise TraceSchemaError(f"{path}:1: first column must be 'time_s'")
        channels = tuple(header[1:])
        if not channels:
            raise TraceSchemaError(f"{path}:1: no data channels in header")
        times: list[float] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise TraceSchemaError(
                    f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError as e:
                raise TraceSchemaError(f"{path}:{lineno}: {e}") from None
            if not all(np.isfinite(vals)):
                raise TraceSchemaError(f"{path}:{lineno}: non-finite value")
            times.append(vals[0])
            rows.append(vals[1:])
    if len(rows) < 2:
        raise TraceSchemaError(f"{path}: need at least 2 samples")
    t = np.asarray(times)
    dt = np.diff(t)
    if np.any(dt <= 0):
        bad = int(np.argmax(dt <= 0)) + 3  # +2 header/1-base, +1 second row of pair
        raise TraceSchemaError(f"{path}:{bad}: timestamps not strictly increasing")
    interval = float(dt[0])
    if np.any(np.abs(dt - interval) > 1e-9 * max(interval, 1e-12)):
        raise TraceSchemaError(f"{path}: non-uniform sampling interval")
    return Trace(interval, channels, np.asarray(rows), unit)


def write_p_table_csv(path, delta_t_c, power_w) -> None:
    write_columns_csv(path, ("delta_t_c", "power_w"),
                      [(float(d), float(p)) for d, p in zip(delta_t_c, power_w)])


def read_p_table_csv(path) -> tuple[np.ndarray, np.ndarray]:
    dts, pws = [], []
    path = Path(path)
    if not path.exists():
        raise TraceSchemaError(f"{path}: no such file")
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["delta_t_c", "power_w"]:
            raise TraceSchemaError(f"{path}:1: expected header 'delta_t_c,power_w'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                dts.append(float(row[0]))
                pws.append(float(row[1]))
            except (ValueError, IndexError) as e:
                raise TraceSchemaError(f"{path}:{lineno}: {e}") from None
    return np.asarray(dts), np.asarray(pws)


def write_t_table_csv(path, entries: dict[int, float]) -> None:
    write_columns_csv(path, ("level", "delta_t_c"),
                      [(int(s), float(d)) for s, d in sorted(entries.items())])


def read_t_table_csv(path) -> dict[int, float]:
    path = Path(path)
    if not path.exists():
        raise TraceSchemaError(f"{path}: no such file")
    entries: dict[int, float] = {}
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["level", "delta_t_c"]:
            raise TraceSchemaError(f"{path}:1: expected header 'level,delta_t_c'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                entries[int(row[0])] = float(row[1])
            except (ValueError, IndexError) as e:
                raise TraceSchemaError(f"{path}:{lineno}: {e}") from None
    return entries


def write_summary_csv(path, rows: list[dict]) -> None:
    table = []
    for r in rows:
        table.append([r.get(c, "") for c in SUMMARY_COLUMNS])
    write_columns_csv(path, SUMMARY_COLUMNS, table)


def read_summary_csv(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise TraceSchemaError(f"{path}: no such file")
    out: list[dict] = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or tuple(reader.fieldnames) != SUMMARY_COLUMNS:
            raise TraceSchemaError(f"{path}:1: unexpected summary header")
        for row in reader:
            parsed: dict = {"benchmark": row["benchmark"], "setting": row["setting"]}
            for c in SUMMARY_COLUMNS[2:]:
                parsed[c] = float(row[c]) if row[c] not in ("", None) else None
            out.append(parsed)
    return out
