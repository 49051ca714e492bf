"""Extended Kalman filter tracking of damped oscillation modes.

Each mode ``l`` is a block of four states ``[x_c, x_s, omega, sigma]``. The
``(x_c, x_s)`` pair is a phasor rotated by ``omega / fs`` and shrunk by
``exp(-sigma / fs)`` every sample; ``omega`` and ``sigma`` are random walks.
The measurement is the sum of ``x_c + x_s`` over all modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .emd import Decomposition
from .errors import AnalysisError, EkfDivergence, NoOscillationDetected
from .hilbert import HhtConfig, HhtResult, hht
from .signalgen import TimeSeries
from .spectrum import SpectralPeak, find_peaks

STATES_PER_MODE = 4
DEFAULT_Q = 1e-9
DEFAULT_R = 1e-3
DEFAULT_P0_DIAG = (1.0, 1.0, (2 * math.pi * 0.5) ** 2, 0.1**2)
# process noise for records whose frequency drifts within the window
TRACKING_Q = 1e-5


@dataclass(frozen=True)
class EkfState:
    x: np.ndarray
    P: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.x.size // STATES_PER_MODE


def observation_row(n_modes: int) -> np.ndarray:
    """``H = [1, 1, 0, 0, 1, 1, 0, 0, ...]``."""
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    return np.tile([1.0, 1.0, 0.0, 0.0], n_modes)


def default_q(n_modes: int, scale: float = DEFAULT_Q, freq_scale: Optional[float] = None) -> np.ndarray:
    """Diagonal process covariance.

    ``scale`` applies to every state unless ``freq_scale`` is given, in which
    case the ``(omega, sigma)`` states use ``freq_scale`` instead.
    """
    block = np.full(STATES_PER_MODE, float(scale))
    if freq_scale is not None:
        block[2:] = freq_scale
    return np.diag(np.tile(block, n_modes))


def default_p0(n_modes: int) -> np.ndarray:
    return np.diag(np.tile(DEFAULT_P0_DIAG, n_modes))


def state_from_modes(amplitudes, phases, freqs, dampings=None) -> np.ndarray:
    """Initial state for modes ``A cos(omega k/fs + phi)`` (with optional damping).

    With ``B_c = A cos(phi)`` and ``B_s = -A sin(phi)`` the phasor starts at
    ``((B_c + B_s) / 2, (B_c - B_s) / 2)``, which makes ``H x`` reproduce
    ``B_c cos + B_s sin`` exactly under the rotation model.
    """
    amplitudes = np.atleast_1d(np.asarray(amplitudes, dtype=float))
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    dampings = np.zeros_like(freqs) if dampings is None else np.atleast_1d(np.asarray(dampings, dtype=float))
    bc = amplitudes * np.cos(phases)
    bs = -amplitudes * np.sin(phases)
    x = np.empty(STATES_PER_MODE * freqs.size)
    x[0::4] = 0.5 * (bc + bs)
    x[1::4] = 0.5 * (bc - bs)
    x[2::4] = freqs
    x[3::4] = dampings
    return x


@dataclass(frozen=True)
class EkfConfig:
    n_modes: int
    fs: float
    x0: np.ndarray
    p0: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    r: float = DEFAULT_R
    # Joseph-form covariance update; False gives the literal P - K H P
    robust_cov: bool = True

    def __post_init__(self):
        n = STATES_PER_MODE * self.n_modes
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        x0 = np.asarray(self.x0, dtype=float).ravel()
        if x0.size != n:
            raise ValueError(f"x0 has {x0.size} entries, expected {n}")
        object.__setattr__(self, "x0", x0)
        p0 = default_p0(self.n_modes) if self.p0 is None else np.asarray(self.p0, dtype=float)
        q = default_q(self.n_modes) if self.q is None else np.asarray(self.q, dtype=float)
        for name, m in (("p0", p0), ("q", q)):
            if m.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}, got {m.shape}")
            if not np.allclose(m, m.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
        if np.linalg.eigvalsh(q).min() < -1e-12:
            raise ValueError("q must be positive semidefinite")
        if np.linalg.eigvalsh(p0).min() <= 0:
            raise ValueError("p0 must be positive definite")
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ValueError("r must be positive and finite")
        if not (self.fs > 0 and math.isfinite(self.fs)):
            raise ValueError("fs must be positive and finite")
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class ModeTrace:
    """Filtered (post-update) estimates, one row per mode."""

    freq_rad_s: np.ndarray
    damping_per_s: np.ndarray
    recon: np.ndarray
    # sqrt(x_c^2 + x_s^2): equals the envelope only when |B_c| == |B_s|
    amplitude_proxy: np.ndarray
    innovation: np.ndarray
    fs: float
    final: EkfState

    @property
    def n_modes(self) -> int:
        return self.freq_rad_s.shape[0]

    def __len__(self):
        return self.freq_rad_s.shape[1]


def transition(x, fs: float) -> np.ndarray:
    """One-step prediction ``f(x)``: rotate and decay each phasor, hold omega and sigma."""
    x = np.asarray(x, dtype=float)
    xc, xs, w, s = x[0::4], x[1::4], x[2::4], x[3::4]
    d = np.exp(-s / fs)
    c = np.cos(w / fs)
    sn = np.sin(w / fs)
    out = x.copy()
    out[0::4] = d * (c * xc - sn * xs)
    out[1::4] = d * (sn * xc + c * xs)
    return out


def jacobian(x, fs: float) -> np.ndarray:
    """Block-diagonal Jacobian of :func:`transition` at ``x``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    F = np.zeros((n, n))
    _fill_jacobian(F, x, fs)
    return F


def _fill_jacobian(F, x, fs):
    xc, xs, w, s = x[0::4], x[1::4], x[2::4], x[3::4]
    d = np.exp(-s / fs)
    dc = d * np.cos(w / fs)
    ds = d * np.sin(w / fs)
    nxc = dc * xc - ds * xs
    nxs = ds * xc + dc * xs
    base = np.arange(0, x.size, 4)
    F[base, base] = dc
    F[base, base + 1] = -ds
    F[base, base + 2] = -nxs / fs
    F[base, base + 3] = -nxc / fs
    F[base + 1, base] = ds
    F[base + 1, base + 1] = dc
    F[base + 1, base + 2] = nxc / fs
    F[base + 1, base + 3] = -nxs / fs
    F[base + 2, base + 2] = 1.0
    F[base + 3, base + 3] = 1.0


def filter(y, cfg: EkfConfig) -> ModeTrace:
    """Run the EKF over every sample of ``y``.

    Per sample: measurement update with the scalar innovation variance
    ``S = R + H P H^T``, then prediction through ``f`` and its Jacobian.
    Raises :class:`EkfDivergence` as soon as the state or covariance stops
    being finite.
    """
    samples = y.samples if isinstance(y, TimeSeries) else np.asarray(y, dtype=float)
    if samples.size == 0:
        raise ValueError("empty measurement sequence")
    L = cfg.n_modes
    n = STATES_PER_MODE * L
    fs = cfg.fs
    H = observation_row(L)
    mask = H.astype(bool)
    r = cfg.r
    Q = cfg.q
    eye = np.eye(n)
    x = cfg.x0.copy()
    P = cfg.p0.copy()
    F = np.zeros((n, n))

    N = samples.size
    states = np.empty((N, n))
    innovation = np.empty(N)
    # overflow surfaces as non-finite values and is raised as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(N):
            PHt = P[:, mask].sum(axis=1)
            S = r + PHt[mask].sum()
            K = PHt / S
            nu = samples[k] - x[mask].sum()
            innovation[k] = nu
            x = x + K * nu
            if cfg.robust_cov:
                A = eye - np.outer(K, H)
                P = A @ P @ A.T + r * np.outer(K, K)
            else:
                P = P - np.outer(K, PHt)
            P = 0.5 * (P + P.T)
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(P))):
                raise EkfDivergence("non-finite state or covariance", k)
            states[k] = x
            _fill_jacobian(F, x, fs)
            x = transition(x, fs)
            P = F @ P @ F.T + Q
    P = 0.5 * (P + P.T)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(P))):
        raise EkfDivergence("non-finite state or covariance", N - 1)

    xc = states[:, 0::4].T
    xs = states[:, 1::4].T
    return ModeTrace(
        freq_rad_s=states[:, 2::4].T.copy(),
        damping_per_s=states[:, 3::4].T.copy(),
        recon=xc + xs,
        amplitude_proxy=np.hypot(xc, xs),
        innovation=innovation,
        fs=fs,
        final=EkfState(states[-1].copy(), P),
    )


@dataclass(frozen=True)
class FftInit:
    n_modes: int
    x0: np.ndarray
    p0: np.ndarray
    peaks: list


def initialize_from_fft(
    y,
    l_max: int = 4,
    min_sep_hz: float = 0.3,
    fs: Optional[float] = None,
    floor_factor: float = 4.0,
    rel_floor: float = 0.1,
    min_freq_hz: float = 0.1,
    freq_std_hz: Optional[float] = None,
) -> FftInit:
    """Mode count and initial state from spectral peaks of ``y``.

    Peaks are ordered by frequency in the returned state. The initial
    frequency variance is ``(2 pi freq_std_hz)^2`` with ``freq_std_hz``
    defaulting to one FFT bin, ``fs / N``. Raises
    :class:`NoOscillationDetected` when no peak clears the threshold.
    """
    if isinstance(y, TimeSeries):
        samples, fs = y.samples, y.sample_rate_hz
    else:
        samples = np.asarray(y, dtype=float)
        if fs is None:
            raise ValueError("fs is required for raw arrays")
    if samples.size < 16:
        raise ValueError(f"initialize_from_fft needs at least 16 samples, got {samples.size}")
    peaks = find_peaks(samples, fs, l_max, min_sep_hz, floor_factor, rel_floor, min_freq_hz)
    if not peaks:
        raise NoOscillationDetected("no oscillation detected: no spectral peak above threshold")
    peaks = sorted(peaks, key=lambda p: p.freq_rad_s)
    x0 = state_from_modes(
        [p.amplitude for p in peaks], [p.phase_rad for p in peaks], [p.freq_rad_s for p in peaks]
    )
    p0 = default_p0(len(peaks))
    std = fs / samples.size if freq_std_hz is None else freq_std_hz
    idx = np.arange(2, p0.shape[0], STATES_PER_MODE)
    p0[idx, idx] = (2 * math.pi * std) ** 2
    return FftInit(len(peaks), x0, p0, peaks)


@dataclass(frozen=True)
class HhtEkfConfig:
    hht: HhtConfig = field(default_factory=HhtConfig)
    n_modes: Optional[int] = None
    l_max: int = 4
    min_sep_hz: float = 0.3
    floor_factor: float = 4.0
    rel_floor: float = 0.1
    freq_std_hz: Optional[float] = None
    q_scale: float = DEFAULT_Q
    q_freq_scale: Optional[float] = None
    r: float = DEFAULT_R
    robust_cov: bool = True
    x0: Optional[np.ndarray] = None
    p0: Optional[np.ndarray] = None


@dataclass(frozen=True)
class HhtEkfResult:
    trace: ModeTrace
    init: Optional[FftInit]
    decomposition: Decomposition
    ekf_input: TimeSeries
    trend: np.ndarray
    hht: HhtResult
    config: EkfConfig


def _staged(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except AnalysisError as exc:
        if exc.stage in ("analysis",):
            exc.stage = stage
        raise
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise AnalysisError(str(exc), stage=stage) from exc


def run_hht_ekf(y: TimeSeries, config: HhtEkfConfig = HhtEkfConfig()) -> HhtEkfResult:
    """EMD detrending followed by EKF mode tracking.

    1. decompose ``y`` into IMFs;
    2. sum the IMFs whose mean frequency is above the DC cutoff;
    3. pick the mode count and initial state (FFT peaks unless overridden);
    4. filter the summed signal.
    """
    decomposition_result = _staged("emd", hht, y, config.hht)
    osc = decomposition_result.oscillatory()
    summed = np.zeros(len(y))
    for c in osc:
        summed = summed + c.imf.samples
    ekf_input = y.with_samples(summed)
    trend = decomposition_result.trend()

    init = None
    if config.x0 is not None:
        x0 = np.asarray(config.x0, dtype=float)
        n_modes = x0.size // STATES_PER_MODE
        p0 = config.p0
    else:
        l_max = config.n_modes or config.l_max
        init = _staged(
            "init",
            initialize_from_fft,
            ekf_input,
            l_max,
            config.min_sep_hz,
            floor_factor=config.floor_factor,
            rel_floor=config.rel_floor,
            min_freq_hz=config.hht.dc_cutoff_hz,
            freq_std_hz=config.freq_std_hz,
        )
        n_modes, x0 = init.n_modes, init.x0
        p0 = config.p0 if config.p0 is not None else init.p0
    ekf_cfg = _staged(
        "ekf",
        EkfConfig,
        n_modes=n_modes,
        fs=y.sample_rate_hz,
        x0=x0,
        p0=p0,
        q=default_q(n_modes, config.q_scale, config.q_freq_scale),
        r=config.r,
        robust_cov=config.robust_cov,
    )
    trace = _staged("ekf", filter, ekf_input, ekf_cfg)
    return HhtEkfResult(trace, init, decomposition_result.decomposition, ekf_input, trend, decomposition_result, ekf_cfg)


def run_ekf(y: TimeSeries, config: HhtEkfConfig = HhtEkfConfig()) -> ModeTrace:
    """EKF on the raw (mean-removed) signal without EMD detrending."""
    centered = y.with_samples(y.samples - y.samples.mean())
    if config.x0 is not None:
        x0 = np.asarray(config.x0, dtype=float)
        n_modes, p0 = x0.size // STATES_PER_MODE, config.p0
    else:
        init = _staged(
            "init",
            initialize_from_fft,
            centered,
            config.n_modes or config.l_max,
            config.min_sep_hz,
            floor_factor=config.floor_factor,
            rel_floor=config.rel_floor,
            min_freq_hz=config.hht.dc_cutoff_hz,
            freq_std_hz=config.freq_std_hz,
        )
        n_modes, x0 = init.n_modes, init.x0
        p0 = config.p0 if config.p0 is not None else init.p0
    cfg = EkfConfig(n_modes, y.sample_rate_hz, x0, p0, default_q(n_modes, config.q_scale, config.q_freq_scale), config.r, config.robust_cov)
    return _staged("ekf", filter, centered, cfg)


__all__ = [
    "EkfConfig",
    "EkfState",
    "FftInit",
    "HhtEkfConfig",
    "HhtEkfResult",
    "ModeTrace",
    "SpectralPeak",
    "default_p0",
    "default_q",
    "filter",
    "initialize_from_fft",
    "jacobian",
    "observation_row",
    "run_ekf",
    "run_hht_ekf",
    "state_from_modes",
    "transition",
]
