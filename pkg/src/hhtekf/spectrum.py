"""Hann-windowed, zero-padded magnitude spectrum and peak picking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SpectralPeak:
    freq_rad_s: float
    amplitude: float
    phase_rad: float
    magnitude: float


def padded_length(n: int, factor: int = 8, minimum: int = 1024) -> int:
    target = max(n * factor, minimum)
    return 1 << (int(target) - 1).bit_length()


def spectrum(x, fs: float, nfft: int | None = None):
    """Return ``(freqs_rad_s, complex_bins, window_sum)`` of the mean-removed, Hann-tapered input."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    window = np.hanning(x.size) if x.size > 1 else np.ones(1)
    nfft = nfft or padded_length(x.size)
    bins = np.fft.rfft(x * window, nfft)
    freqs = 2 * np.pi * np.fft.rfftfreq(nfft, 1.0 / fs)
    return freqs, bins, window.sum()


def find_peaks(
    x,
    fs: float,
    max_peaks: int,
    min_sep_hz: float = 0.3,
    floor_factor: float = 4.0,
    rel_floor: float = 0.1,
    min_freq_hz: float = 0.0,
) -> list[SpectralPeak]:
    """Largest spectral peaks, strongest first.

    A peak must exceed ``floor_factor`` times the median magnitude (computed
    on the unpadded bin grid) and ``rel_floor`` times the strongest peak, lie
    at or above ``min_freq_hz`` and be at least ``min_sep_hz`` from every
    stronger accepted peak. Amplitude and phase are read from the complex
    bin, referenced to sample 0.
    """
    x = np.asarray(x, dtype=float)
    freqs, bins, wsum = spectrum(x, fs)
    mag = np.abs(bins)
    step = max(1, (2 * (mag.size - 1)) // x.size)
    noise_floor = floor_factor * np.median(mag[::step])

    interior = (mag[1:-1] > mag[:-2]) & (mag[1:-1] >= mag[2:])
    cand = np.flatnonzero(interior) + 1
    cand = cand[(mag[cand] > noise_floor) & (freqs[cand] >= 2 * np.pi * min_freq_hz)]
    if cand.size == 0:
        return []
    cand = cand[np.argsort(mag[cand])[::-1]]
    strongest = mag[cand[0]]
    sep = 2 * np.pi * min_sep_hz
    peaks: list[SpectralPeak] = []
    for i in cand:
        if mag[i] < rel_floor * strongest:
            break
        if any(abs(freqs[i] - p.freq_rad_s) < sep for p in peaks):
            continue
        peaks.append(SpectralPeak(float(freqs[i]), float(2 * mag[i] / wsum), float(np.angle(bins[i])), float(mag[i])))
        if len(peaks) == max_peaks:
            break
    return peaks
