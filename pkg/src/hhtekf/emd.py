"""Empirical mode decomposition by Huang sifting with mirrored ends."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ResidueReached
from .signalgen import TimeSeries


@dataclass(frozen=True)
class EmdConfig:
    sd_threshold: float = 0.2
    max_sift_iters: int = 64
    max_imfs: int = 10
    # None selects min(n // 4, 2 * longest extrema period)
    mirror_len: Optional[int] = None


@dataclass(frozen=True)
class Imf:
    samples: np.ndarray
    index: int
    converged: bool = True
    sift_iterations: int = 0


@dataclass(frozen=True)
class Decomposition:
    imfs: list
    residue: np.ndarray
    stop_reason: str = "monotone"

    def reconstruct(self) -> np.ndarray:
        total = self.residue.copy()
        for imf in self.imfs:
            total = total + imf.samples
        return total

    def __len__(self):
        return len(self.imfs)


@dataclass(frozen=True)
class SiftResult:
    imf: np.ndarray
    iterations: int
    converged: bool


NEGLIGIBLE_RESIDUE = 1e-12


def _as_array(x) -> np.ndarray:
    if isinstance(x, TimeSeries):
        return x.samples
    return np.asarray(x, dtype=float)


def find_extrema(x) -> tuple[np.ndarray, np.ndarray]:
    """Indices of interior local maxima and minima.

    A flat run that is higher (lower) than both flanking runs counts as one
    maximum (minimum) located at the run's midpoint. Endpoints are never
    extrema.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        raise ValueError(f"find_extrema needs at least 3 samples, got {x.size}")
    starts = np.flatnonzero(np.r_[True, x[1:] != x[:-1]])
    ends = np.r_[starts[1:], x.size] - 1
    values = x[starts]
    if values.size < 3:
        empty = np.empty(0, dtype=int)
        return empty, empty
    mid = values[1:-1]
    is_max = (mid > values[:-2]) & (mid > values[2:])
    is_min = (mid < values[:-2]) & (mid < values[2:])
    centers = (starts[1:-1] + ends[1:-1]) // 2
    return centers[is_max], centers[is_min]


def count_zero_crossings(x) -> int:
    signs = np.sign(np.asarray(x, dtype=float))
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def is_imf(x) -> bool:
    """Extrema count and zero-crossing count differ by at most one."""
    maxima, minima = find_extrema(x)
    return abs(maxima.size + minima.size - count_zero_crossings(x)) <= 1


def envelope(x, extrema) -> np.ndarray:
    """Natural cubic spline through ``(i, x[i])`` for ``i`` in ``extrema``, evaluated at every index."""
    x = np.asarray(x, dtype=float)
    idx = np.asarray(extrema, dtype=int)
    if idx.size < 2:
        raise ValueError(f"envelope needs at least 2 knots, got {idx.size}")
    return _spline(idx, x[idx], np.arange(x.size))


def _spline(knots, values, at):
    if knots.size == 2:
        # a natural spline through two knots is the straight line, extrapolated
        slope = (values[1] - values[0]) / (knots[1] - knots[0])
        return values[0] + slope * (at - knots[0])
    return CubicSpline(knots, values, bc_type="natural")(at)


def mirror_extend(x, n_ext: int) -> np.ndarray:
    """Even-symmetric extension by ``n_ext`` samples about each endpoint."""
    x = np.asarray(x, dtype=float)
    n_ext = int(n_ext)
    if n_ext < 0 or n_ext > x.size - 1:
        raise ValueError(f"mirror length {n_ext} out of range for {x.size} samples")
    if n_ext == 0:
        return x.copy()
    head = x[n_ext:0:-1]
    tail = x[-2 : -n_ext - 2 : -1]
    return np.concatenate([head, x, tail])


def auto_mirror_len(x) -> int:
    x = np.asarray(x, dtype=float)
    n = x.size
    cap = max(n // 4, 1)
    maxima, minima = find_extrema(x)
    gaps = [np.diff(e).max() for e in (maxima, minima) if e.size >= 2]
    if not gaps:
        return min(cap, n - 1)
    return int(min(cap, 2 * max(gaps), n - 1))


def _drop_false_end_knots(ext, knots, ends, better):
    """Remove endpoint knots that exist only because of the mirror.

    Reflecting about a sample that is not a turning point turns it into a
    cusp. Such a knot is kept only if it is at least as extreme as the
    nearest genuine knot of the same kind.
    """
    keep = np.ones(knots.size, dtype=bool)
    for e in ends:
        hit = np.flatnonzero(knots == e)
        if hit.size == 0:
            continue
        i = hit[0]
        neighbours = [j for j in (i - 1, i + 1) if 0 <= j < knots.size]
        if neighbours and not any(better(ext[e], ext[knots[j]]) for j in neighbours):
            keep[i] = False
    return knots[keep]


def _mean_envelope(h, n_ext):
    n = h.size
    ext = mirror_extend(h, n_ext)
    maxima, minima = find_extrema(ext)
    if n_ext > 0:
        ends = (n_ext, n_ext + n - 1)
        maxima = _drop_false_end_knots(ext, maxima, ends, np.greater_equal)
        minima = _drop_false_end_knots(ext, minima, ends, np.less_equal)
    if maxima.size < 2 or minima.size < 2:
        raise ResidueReached(f"too few extrema to sift ({maxima.size} maxima, {minima.size} minima)")
    core = np.arange(n_ext, n_ext + n)
    upper = _spline(maxima, ext[maxima], core)
    lower = _spline(minima, ext[minima], core)
    return 0.5 * (upper + lower)


def sift(x, config: EmdConfig = EmdConfig()) -> SiftResult:
    """Extract one IMF candidate by repeated envelope-mean subtraction.

    Stops once the Cauchy-type SD criterion drops below
    ``config.sd_threshold`` and the candidate satisfies the IMF extrema
    property, or after ``config.max_sift_iters`` passes (``converged`` is
    then False). Raises :class:`ResidueReached` if ``x`` cannot be sifted.
    """
    h = _as_array(x).astype(float, copy=True)
    if h.size < 3:
        raise ResidueReached(f"signal too short to sift ({h.size} samples)")
    n_ext = config.mirror_len if config.mirror_len is not None else auto_mirror_len(h)
    n_ext = min(int(n_ext), h.size - 1)
    for it in range(1, config.max_sift_iters + 1):
        try:
            mean = _mean_envelope(h, n_ext)
        except ResidueReached:
            if it == 1:
                raise
            return SiftResult(h, it - 1, is_imf(h))
        h_new = h - mean
        energy = np.dot(h, h)
        sd = np.dot(mean, mean) / energy if energy > 0 else 0.0
        h = h_new
        if sd < config.sd_threshold and is_imf(h):
            return SiftResult(h, it, True)
    return SiftResult(h, config.max_sift_iters, False)


def _n_extrema(x) -> int:
    maxima, minima = find_extrema(x)
    return maxima.size + minima.size


def emd(x, config: EmdConfig = EmdConfig()) -> Decomposition:
    """Decompose ``x`` into IMFs (highest frequency first) plus a residue."""
    signal = _as_array(x)
    if signal.size < 8:
        raise ValueError(f"emd needs at least 8 samples, got {signal.size}")
    residue = signal.astype(float, copy=True)
    imfs = []
    stop = "max_imfs"
    # residues at round-off level hold no information worth sifting
    floor = NEGLIGIBLE_RESIDUE * np.max(np.abs(signal))
    while len(imfs) < config.max_imfs:
        if imfs and np.max(np.abs(residue)) <= floor:
            stop = "negligible"
            break
        if _n_extrema(residue) < 2:
            stop = "monotone"
            break
        try:
            result = sift(residue, config)
        except ResidueReached:
            stop = "residue"
            break
        if np.max(np.abs(result.imf)) <= floor:
            stop = "negligible"
            break
        imfs.append(Imf(result.imf, len(imfs) + 1, result.converged, result.iterations))
        residue = residue - result.imf
    return Decomposition(imfs, residue, stop)


def masking_emd(x: TimeSeries, mask_freq_rad_s: float, mask_amp: float, config: EmdConfig = EmdConfig()) -> np.ndarray:
    """First IMF extracted with a masking sinusoid.

    Sifts ``x + m`` and ``x - m`` with ``m[k] = mask_amp sin(mask_freq k / fs)``
    and returns the average of the two first IMFs.
    """
    if mask_amp < 0:
        raise ValueError("mask_amp must be >= 0")
    fs = x.sample_rate_hz
    if not 0 < mask_freq_rad_s < np.pi * fs:
        raise ValueError(f"mask frequency {mask_freq_rad_s!r} rad/s must lie in (0, Nyquist)")
    samples = x.samples
    if mask_amp == 0:
        return sift(samples, config).imf
    mask = mask_amp * np.sin(mask_freq_rad_s * np.arange(samples.size) / fs)
    plus = sift(samples + mask, config).imf
    minus = sift(samples - mask, config).imf
    return 0.5 * (plus + minus)
