"""Seedable generators for multi-mode damped sinusoids with ground truth.

Noise is drawn from numpy's ``PCG64`` bit generator through
``Generator.standard_normal`` (ziggurat), seeded directly with the integer
seed, so a given ``(parameters, seed)`` pair always yields the same samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

CASE_FS_HZ = 30.0
CASE_N = 150
CASE_STEP_VALUE = 5.0
DEFAULT_NOISE_STD = 0.1


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled real signal."""

    samples: np.ndarray
    sample_rate_hz: float
    start_index: int = 0

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float).ravel()
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        fs = float(self.sample_rate_hz)
        if not math.isfinite(fs) or fs <= 0:
            raise ValueError(f"sample_rate_hz must be positive and finite, got {self.sample_rate_hz!r}")
        object.__setattr__(self, "sample_rate_hz", fs)
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return (self.start_index + np.arange(self.samples.size)) / self.sample_rate_hz

    def with_samples(self, samples) -> "TimeSeries":
        return TimeSeries(samples, self.sample_rate_hz, self.start_index)


@dataclass(frozen=True)
class ModeSpec:
    """One oscillation mode ``A exp(-sigma k/fs) cos(omega k/fs + phi)``.

    ``freq_ramp`` is an optional ``(start, end)`` pair in rad/s. When given,
    the frequency moves linearly as ``start + (end - start) k / n`` over an
    ``n``-sample record and ``freq_rad_s`` is ignored for synthesis.
    """

    amplitude: float
    damping_per_s: float
    freq_rad_s: float
    phase_rad: float = 0.0
    freq_ramp: Optional[tuple[float, float]] = None

    def max_freq(self) -> float:
        if self.freq_ramp is None:
            return abs(self.freq_rad_s)
        return max(abs(self.freq_ramp[0]), abs(self.freq_ramp[1]))


@dataclass(frozen=True)
class GroundTruth:
    """Per-sample truth that accompanies a synthesized series.

    ``freq_rad_s`` holds the frequency term as it appears inside the cosine
    (``omega_l[k]``). For ramped modes the phase is ``omega[k] k / fs``, so
    its derivative differs from ``omega[k]``; that derivative is kept
    separately in ``phase_rate_rad_s``.
    """

    freq_rad_s: np.ndarray
    damping_per_s: np.ndarray
    phase_rate_rad_s: np.ndarray
    step: Optional[tuple[int, float]] = None
    trend: Optional[np.ndarray] = field(default=None, compare=False)

    @property
    def n_modes(self) -> int:
        return self.freq_rad_s.shape[0]

    def __len__(self):
        return self.freq_rad_s.shape[1]


def noise_stream(n: int, seed: int) -> np.ndarray:
    """Unit-variance Gaussian noise for ``seed``."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.standard_normal(n)


def _check_finite(name, value):
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


def synthesize(
    modes: Sequence[ModeSpec],
    n: int,
    fs: float,
    step: Optional[tuple[int, float]] = None,
    noise_std: float = 0.0,
    seed: int = 0,
) -> tuple[TimeSeries, GroundTruth]:
    """Sum of damped sinusoids plus an optional step and white Gaussian noise.

    The step adds ``value`` to every sample with ``k > index``.
    """
    if n < 2:
        raise ValueError(f"need at least 2 samples, got n={n}")
    _check_finite("fs", fs)
    if fs <= 0:
        raise ValueError("fs must be positive")
    _check_finite("noise_std", noise_std)
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    nyquist = math.pi * fs
    for i, m in enumerate(modes):
        for name in ("amplitude", "damping_per_s", "freq_rad_s", "phase_rad"):
            _check_finite(f"mode {i} {name}", getattr(m, name))
        if m.freq_ramp is not None:
            for v in m.freq_ramp:
                _check_finite(f"mode {i} freq_ramp", v)
        if m.max_freq() >= nyquist:
            raise ValueError(
                f"mode {i} frequency {m.max_freq():.6g} rad/s is at or above Nyquist ({nyquist:.6g} rad/s)"
            )

    k = np.arange(n, dtype=float)
    y = np.zeros(n)
    freq = np.empty((len(modes), n))
    damp = np.empty((len(modes), n))
    rate = np.empty((len(modes), n))
    for i, m in enumerate(modes):
        if m.freq_ramp is None:
            omega = np.full(n, float(m.freq_rad_s))
            rate[i] = omega
        else:
            w0, w1 = m.freq_ramp
            slope = (w1 - w0) / n
            omega = w0 + slope * k
            rate[i] = w0 + 2.0 * slope * k
        freq[i] = omega
        damp[i] = m.damping_per_s
        y += m.amplitude * np.exp(-m.damping_per_s * k / fs) * np.cos(omega * k / fs + m.phase_rad)

    if step is not None:
        onset, value = int(step[0]), float(step[1])
        _check_finite("step value", value)
        y[k > onset] += value
        step = (onset, value)
    if noise_std > 0:
        y += noise_std * noise_stream(n, seed)

    return TimeSeries(y, fs), GroundTruth(freq, damp, rate, step)


CASE_A_MODES = (
    ModeSpec(amplitude=1.0, damping_per_s=-0.1, freq_rad_s=2 * math.pi, phase_rad=0.0),
    ModeSpec(amplitude=1.0, damping_per_s=0.01, freq_rad_s=3 * math.pi, phase_rad=math.pi / 3),
)

CASE_B_MODE = ModeSpec(
    amplitude=1.0,
    damping_per_s=0.0,
    freq_rad_s=2 * math.pi * 1.5,
    phase_rad=0.0,
    freq_ramp=(2 * math.pi * 1.5, 2 * math.pi * 2.0),
)


def case_a(noise_std: float = DEFAULT_NOISE_STD, seed: int = 0) -> tuple[TimeSeries, GroundTruth]:
    """Two closely spaced modes (1.0 Hz growing, 1.5 Hz decaying) with a +5 step."""
    return synthesize(
        CASE_A_MODES, CASE_N, CASE_FS_HZ, step=(CASE_N // 2, CASE_STEP_VALUE), noise_std=noise_std, seed=seed
    )


def case_b(noise_std: float = DEFAULT_NOISE_STD, seed: int = 0) -> tuple[TimeSeries, GroundTruth]:
    """Single undamped mode with frequency ramping from 1.5 Hz towards 2.0 Hz, with a +5 step."""
    return synthesize(
        [CASE_B_MODE], CASE_N, CASE_FS_HZ, step=(CASE_N // 2, CASE_STEP_VALUE), noise_std=noise_std, seed=seed
    )


def pmu_surrogate(
    seed: int = 0,
    snr_db: float = 20.0,
    fs: float = 30.0,
    duration_s: float = 20.0,
    trend_start: float = 10.0,
    trend_drop: float = 3.0,
) -> tuple[TimeSeries, GroundTruth]:
    """Declining linear trend plus lightly damped 0.5 Hz and 1.5 Hz modes.

    Stand-in for a recorded active-power oscillation event. The noise level
    is set from ``snr_db`` relative to the power of the oscillatory part
    only (the trend is excluded).
    """
    n = int(round(duration_s * fs))
    modes = [
        ModeSpec(amplitude=1.0, damping_per_s=0.03, freq_rad_s=2 * math.pi * 0.5, phase_rad=0.3),
        ModeSpec(amplitude=0.6, damping_per_s=0.05, freq_rad_s=2 * math.pi * 1.5, phase_rad=-1.1),
    ]
    clean, truth = synthesize(modes, n, fs)
    noise_std = math.sqrt(np.mean(clean.samples**2) / 10 ** (snr_db / 10))
    trend = trend_start - trend_drop * np.arange(n) / n
    y = clean.samples + trend + noise_std * noise_stream(n, seed)
    return TimeSeries(y, fs), GroundTruth(
        truth.freq_rad_s, truth.damping_per_s, truth.phase_rate_rad_s, None, trend
    )
