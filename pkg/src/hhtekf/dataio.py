"""CSV ingestion and full-precision text output."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .signalgen import TimeSeries

JITTER_TOL = 1e-6


class CsvFormatError(ValueError):
    pass


def fmt(value) -> str:
    """17 significant digits, enough to round-trip any double."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    return format(float(value), ".17g")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n")
    return path


def write_series(path, series: TimeSeries) -> Path:
    return write_csv(path, ["time_s", "value"], zip(series.times, series.samples))


def _decimals(text: str) -> Optional[int]:
    text = text.strip().lower()
    if "e" in text:
        return None
    if "." not in text:
        return 0
    return len(text.split(".", 1)[1])


def _parse(cell: str, line: int):
    try:
        value = float(cell)
    except ValueError:
        raise CsvFormatError(f"line {line}: non-numeric cell {cell!r}") from None
    if not math.isfinite(value):
        raise CsvFormatError(f"line {line}: non-finite value {cell!r}")
    return value


def ingest_csv(path, fs: Optional[float] = None, jitter_tol: float = JITTER_TOL) -> TimeSeries:
    """Read ``time,value`` or single-column ``value`` data.

    A first row that does not parse as numbers is taken as a header. For two
    columns the sample rate comes from the timestamps, which must sit on a
    uniform grid to within ``jitter_tol`` of the spacing (plus the rounding
    implied by the number of printed decimals). Single-column files need
    ``fs``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [(i + 1, row) for i, row in enumerate(csv.reader(fh)) if any(c.strip() for c in row)]
    if not rows:
        raise CsvFormatError(f"{path}: file is empty")
    first_line, first = rows[0]
    try:
        [float(c) for c in first]
    except ValueError:
        rows = rows[1:]
    if not rows:
        raise CsvFormatError(f"{path}: no data rows after header (line {first_line})")

    width = len(rows[0][1])
    if width not in (1, 2):
        raise CsvFormatError(f"line {rows[0][0]}: expected 1 or 2 columns, got {width}")
    times, values, decimals = [], [], []
    for line, row in rows:
        if len(row) != width:
            raise CsvFormatError(f"line {line}: expected {width} columns, got {len(row)}")
        if width == 2:
            times.append(_parse(row[0], line))
            decimals.append(_decimals(row[0]))
        values.append(_parse(row[-1], line))

    if width == 1:
        if fs is None:
            raise CsvFormatError(f"{path}: single-column data needs a sample rate (--fs)")
        return TimeSeries(values, fs)

    lines = [line for line, _ in rows]
    t = np.asarray(times)
    if t.size < 2:
        if fs is None:
            raise CsvFormatError(f"{path}: cannot infer a sample rate from one timestamp")
        return TimeSeries(values, fs)
    steps = np.diff(t)
    if np.any(steps <= 0):
        bad = int(np.flatnonzero(steps <= 0)[0]) + 1
        raise CsvFormatError(f"line {lines[bad]}: timestamps must increase strictly")
    idx = np.arange(t.size)
    dt, t0 = np.polyfit(idx, t, 1)
    # writers drop trailing zeros, so the finest printed precision is the file's precision
    places = [d for d in decimals if d is not None]
    quant = 0.5 * 10.0 ** (-max(places)) if places else 0.0
    dev = np.abs(t - (t0 + dt * idx))
    allowed = jitter_tol * dt + 2 * quant
    if np.any(dev > allowed):
        bad = int(np.argmax(dev))
        raise CsvFormatError(
            f"line {lines[bad]}: timestamp {t[bad]!r} is off the uniform grid by {dev[bad]:.3g} s "
            f"(allowed {allowed:.3g} s)"
        )
    # least squares leaves ~1e-15 relative noise; 12 digits is far inside timestamp precision
    inferred = float(f"{1.0 / dt:.12g}")
    if fs is not None and abs(inferred - fs) > 1e-3 * fs:
        raise CsvFormatError(f"{path}: --fs {fs} disagrees with timestamps ({inferred:.6g} Hz)")
    start = int(round(t0 / dt)) if abs(t0 / dt - round(t0 / dt)) < 1e-6 else 0
    return TimeSeries(values, fs if fs is not None else inferred, start)


def load_schema(name: str) -> dict:
    """Bundled JSON schema ``name`` (``report`` or ``table``)."""
    from importlib import resources

    return json.loads(resources.files("hhtekf").joinpath("schemas", f"{name}.schema.json").read_text())
