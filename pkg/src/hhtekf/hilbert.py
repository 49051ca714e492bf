"""Analytic signal, instantaneous attributes, and the HHT / masking-HHT baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import emd as _emd
from .emd import Decomposition, EmdConfig, Imf
from .errors import AnalysisError
from .signalgen import TimeSeries
from .spectrum import find_peaks


@dataclass(frozen=True)
class InstantaneousTrace:
    freq_rad_s: np.ndarray
    amplitude: np.ndarray
    damping_per_s: np.ndarray
    valid_range: tuple[int, int]

    def interior(self, values=None) -> np.ndarray:
        first, last = self.valid_range
        values = self.freq_rad_s if values is None else values
        return values[first : last + 1]

    @property
    def mean_freq(self) -> float:
        return float(np.mean(self.interior()))


@dataclass(frozen=True)
class HhtComponent:
    imf: Imf
    trace: InstantaneousTrace
    is_dc: bool


@dataclass(frozen=True)
class HhtConfig:
    emd: EmdConfig = field(default_factory=EmdConfig)
    dc_cutoff_hz: float = 0.1
    # IMFs completing fewer cycles than this over the record count as trend;
    # 0 disables the rule
    min_cycles: float = 0.0
    end_margin: float = 0.05
    # end treatment before the Hilbert transform: "predict", "mirror" or "none"
    hilbert_extension: str = "predict"
    lp_order: int = 8
    # masking: explicit values win over the ratios
    mask_freq_rad_s: Optional[float] = None
    mask_amp: Optional[float] = None
    mask_freq_ratio: float = 1.6
    mask_amp_ratio: float = 1.6


def analytic_signal(x) -> np.ndarray:
    """Analytic signal ``x + j H{x}`` by the one-sided spectrum construction."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        raise ValueError(f"analytic_signal needs at least 4 samples, got {n}")
    spec = np.fft.fft(x)
    weights = np.zeros(n)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[n // 2] = 1.0
        weights[1 : n // 2] = 2.0
    else:
        weights[1 : (n + 1) // 2] = 2.0
    return np.fft.ifft(spec * weights)


def instantaneous(z, fs: float, end_margin: float = 0.05) -> InstantaneousTrace:
    """Instantaneous frequency (rad/s), amplitude and damping (1/s) of an analytic signal.

    Derivatives use central differences inside and one-sided differences at
    the two ends.
    """
    z = np.asarray(z, dtype=complex)
    amplitude = np.abs(z)
    if np.any(amplitude == 0):
        bad = int(np.flatnonzero(amplitude == 0)[0])
        raise AnalysisError(f"analytic signal has zero magnitude at sample {bad}", stage="hilbert")
    phase = np.unwrap(np.angle(z))
    if z.size > 1:
        freq = np.gradient(phase) * fs
        damping = -np.gradient(np.log(amplitude)) * fs
    else:
        freq = np.zeros(1)
        damping = np.zeros(1)
    margin = int(end_margin * z.size)
    last = z.size - 1 - margin
    if last < margin:
        margin, last = 0, z.size - 1
    return InstantaneousTrace(freq, amplitude, damping, (margin, last))


EXTENSION_BLOWUP = 1e3


def _predict(x, order: int, count: int) -> np.ndarray:
    """Continue ``x`` forward by ``count`` samples with a least-squares linear predictor."""
    rows = np.column_stack([x[order - 1 - i : x.size - 1 - i] for i in range(order)])
    coef = np.linalg.lstsq(rows, x[order:], rcond=None)[0]
    buf = np.concatenate([x[-order:], np.empty(count)])
    for k in range(count):
        buf[order + k] = np.dot(coef, buf[k : order + k][::-1])
    return buf[order:]


def predictive_extend(x, order: int = 8) -> tuple[np.ndarray, int]:
    """Extend ``x`` by its own length on each side using linear prediction.

    A sum of damped sinusoids obeys a linear recurrence, so the prediction
    continues such signals exactly and the record no longer ends abruptly.
    The continuations fade to zero under a half-cosine so the periodic
    wrap of the FFT stays continuous. Returns the extended array and the
    offset of the original samples. Falls back to mirroring if the
    predictor is unstable on ``x``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    order = max(1, min(int(order), n // 4))
    right = _predict(x, order, n)
    left = _predict(x[::-1], order, n)[::-1]
    scale = np.max(np.abs(x))
    peak = max(np.max(np.abs(right)), np.max(np.abs(left)))
    if not np.isfinite(peak) or peak > EXTENSION_BLOWUP * max(scale, np.finfo(float).tiny):
        n_ext = _emd.auto_mirror_len(x)
        return _emd.mirror_extend(x, n_ext), n_ext
    fade = 0.5 * (1 + np.cos(np.linspace(0, math.pi, n)))
    return np.concatenate([left * fade[::-1], x, right * fade]), n


def hilbert_trace(samples, fs: float, config: HhtConfig = HhtConfig()) -> InstantaneousTrace:
    """Instantaneous attributes of one real component, with end treatment per ``config``."""
    samples = np.asarray(samples, dtype=float)
    mode = config.hilbert_extension
    if mode not in ("predict", "mirror", "none"):
        raise ValueError(f"unknown hilbert_extension {mode!r}")
    if mode == "none" or samples.size <= 8:
        z = analytic_signal(samples)
    else:
        if mode == "predict":
            ext, offset = predictive_extend(samples, config.lp_order)
        else:
            offset = _emd.auto_mirror_len(samples)
            ext = _emd.mirror_extend(samples, offset)
        z = analytic_signal(ext)[offset : offset + samples.size]
    return instantaneous(z, fs, config.end_margin)


def _components(imfs, fs, config: HhtConfig) -> list[HhtComponent]:
    dc_limit = 2 * math.pi * config.dc_cutoff_hz
    min_crossings = 2 * config.min_cycles
    out = []
    for imf in imfs:
        trace = hilbert_trace(imf.samples, fs, config)
        slow = _emd.count_zero_crossings(imf.samples) < min_crossings
        out.append(HhtComponent(imf, trace, trace.mean_freq < dc_limit or slow))
    return out


@dataclass(frozen=True)
class HhtResult:
    components: list
    decomposition: Decomposition

    def oscillatory(self) -> list:
        return [c for c in self.components if not c.is_dc]

    def trend(self) -> np.ndarray:
        total = self.decomposition.residue.copy()
        for c in self.components:
            if c.is_dc:
                total = total + c.imf.samples
        return total

    def __iter__(self):
        return iter(self.components)

    def __len__(self):
        return len(self.components)


def hht(x: TimeSeries, config: HhtConfig = HhtConfig()) -> HhtResult:
    """EMD followed by Hilbert analysis of every IMF.

    IMFs whose mean interior frequency is below ``dc_cutoff_hz``, or that
    complete fewer than ``min_cycles`` oscillations over the record, are
    tagged as DC/trend. The second rule (off by default) catches step and
    drift leakage, which EMD spreads into slow IMFs that the FFT cannot tell
    apart from a genuine low-frequency mode.
    """
    decomposition = _emd.emd(x, config.emd)
    return HhtResult(_components(decomposition.imfs, x.sample_rate_hz, config), decomposition)


def default_mask(x: TimeSeries, config: HhtConfig = HhtConfig()) -> tuple[float, float]:
    """Mask frequency and amplitude from the dominant tone of the oscillatory part of ``x``.

    The EMD trend (residue plus DC IMFs) is removed first so that steps and
    drifts do not masquerade as the dominant tone.
    """
    base = hht(x, config)
    oscillatory = x.samples - base.trend()
    peaks = find_peaks(oscillatory, x.sample_rate_hz, 1, floor_factor=0.0, min_freq_hz=config.dc_cutoff_hz)
    if not peaks:
        raise AnalysisError("no dominant tone for the masking signal", stage="masking")
    freq = min(config.mask_freq_ratio * peaks[0].freq_rad_s, 0.95 * math.pi * x.sample_rate_hz)
    amp = config.mask_amp_ratio * peaks[0].amplitude / math.sqrt(2)
    return freq, amp


def masking_hht(x: TimeSeries, config: HhtConfig = HhtConfig()) -> HhtResult:
    """HHT whose first IMF is extracted with a masking signal.

    Later IMFs come from plain EMD of what remains after the first one.
    """
    if config.mask_freq_rad_s is not None and config.mask_amp is not None:
        freq, amp = config.mask_freq_rad_s, config.mask_amp
    elif config.mask_amp == 0:
        freq, amp = 1.0, 0.0
    else:
        freq, amp = default_mask(x, config)
        if config.mask_freq_rad_s is not None:
            freq = config.mask_freq_rad_s
        if config.mask_amp is not None:
            amp = config.mask_amp
    samples = x.samples
    if _emd._n_extrema(samples) < 2 and amp == 0:
        decomposition = Decomposition([], samples.copy(), "monotone")
    else:
        first = _emd.masking_emd(x, freq, amp, config.emd)
        rest_cfg = EmdConfig(
            config.emd.sd_threshold, config.emd.max_sift_iters, config.emd.max_imfs - 1, config.emd.mirror_len
        )
        rest = _emd.emd(samples - first, rest_cfg)
        imfs = [Imf(first, 1)] + [Imf(i.samples, i.index + 1, i.converged, i.sift_iterations) for i in rest.imfs]
        decomposition = Decomposition(imfs, rest.residue, rest.stop_reason)
    return HhtResult(_components(decomposition.imfs, x.sample_rate_hz, config), decomposition)
