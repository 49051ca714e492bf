"""Scoring of frequency estimates and the Monte Carlo experiment harness."""

from __future__ import annotations

import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import signalgen
from .ekf import HhtEkfConfig, run_hht_ekf
from .errors import AnalysisError
from .hilbert import HhtConfig, hht, masking_hht

METHODS = ("hht", "masking", "ekf")
FAILURE_THRESHOLD = 0.5

Scenario = Callable[[float, int], tuple]
EXPERIMENTS: dict[str, Scenario] = {"case_a": signalgen.case_a, "case_b": signalgen.case_b}


def failure_flag(est_mean: float, truth_mean: float) -> bool:
    """True when the estimated mean frequency misses the true one by more than 50%."""
    if truth_mean <= 0:
        raise ValueError("truth mean frequency must be positive")
    return abs(est_mean - truth_mean) / truth_mean > FAILURE_THRESHOLD


def window_slice(n: int, window: str = "full", burn_in: int = 0) -> slice:
    if window == "full":
        return slice(burn_in, n)
    if window == "middle_third":
        return slice(max(n // 3, burn_in), (2 * n) // 3)
    raise ValueError(f"unknown window {window!r}")


def mse(est, truth, window: str = "full", burn_in: int = 0) -> float:
    """Mean squared difference over ``window`` (``full`` or ``middle_third``)."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {truth.shape}")
    sl = window_slice(est.size, window, burn_in)
    return float(np.mean((est[sl] - truth[sl]) ** 2))


def assign_modes(est_means: Sequence[float], truth_means: Sequence[float]) -> list[Optional[int]]:
    """Greedy nearest-frequency pairing of true modes to estimated traces.

    The globally closest (truth, estimate) pair is fixed first, then the next
    closest among the unclaimed, and so on. Ties go to the lower truth index.
    Returns, per true mode, the index of its estimate or ``None``.
    """
    pairs = sorted(
        (abs(e - t), ti, ei) for ti, t in enumerate(truth_means) for ei, e in enumerate(est_means)
    )
    result: list[Optional[int]] = [None] * len(truth_means)
    used = set()
    for _, ti, ei in pairs:
        if result[ti] is None and ei not in used:
            result[ti] = ei
            used.add(ei)
    return result


@dataclass
class RunScore:
    method: str
    seed: int
    failed: list
    # scored window (burn-in skipped for the EKF), full record, middle third
    mse: list
    mse_full: list
    mse_middle: list
    est_mean_freq: list
    error: Optional[str] = None

    @property
    def any_failed(self) -> bool:
        return any(self.failed)


@dataclass
class ExperimentReport:
    method: str
    n_runs: int
    n_failed: int
    failure_rate: float
    mode_failure_rate: list
    mse: list
    mse_full: list
    mse_middle: list
    config: dict

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ExperimentConfig:
    noise_std: float = signalgen.DEFAULT_NOISE_STD
    burn_in_frac: float = 0.1
    include_failed: bool = False
    candidates: str = "first"
    hht: HhtConfig = field(default_factory=HhtConfig)
    ekf: HhtEkfConfig = field(default_factory=HhtEkfConfig)

    def echo(self) -> dict:
        return {
            "noise_std": self.noise_std,
            "burn_in_frac": self.burn_in_frac,
            "include_failed": self.include_failed,
            "candidates": self.candidates,
            "q_scale": self.ekf.q_scale,
            "q_freq_scale": self.ekf.q_freq_scale,
            "r": self.ekf.r,
            "robust_cov": self.ekf.robust_cov,
            "dc_cutoff_hz": self.hht.dc_cutoff_hz,
            "min_cycles": self.hht.min_cycles,
            "sd_threshold": self.hht.emd.sd_threshold,
            "max_sift_iters": self.hht.emd.max_sift_iters,
            "mask_freq_ratio": self.hht.mask_freq_ratio,
            "mask_amp_ratio": self.hht.mask_amp_ratio,
            "l_max": self.ekf.l_max,
            "min_sep_hz": self.ekf.min_sep_hz,
        }


def estimate(method: str, series, config: ExperimentConfig) -> np.ndarray:
    """Frequency traces (rad/s), one row per estimated mode."""
    if method in ("hht", "masking"):
        fn = hht if method == "hht" else masking_hht
        comps = fn(series, config.hht).oscillatory()
        return np.array([c.trace.freq_rad_s for c in comps]).reshape(len(comps), len(series))
    if method == "ekf":
        return run_hht_ekf(series, config.ekf).trace.freq_rad_s
    raise ValueError(f"unknown method {method!r}")


def highest_frequency(traces, count: int) -> np.ndarray:
    """Indices of the ``count`` traces with the highest mean frequency, in their original order."""
    means = np.asarray(traces, dtype=float).mean(axis=1) if len(traces) else np.empty(0)
    return np.sort(np.argsort(-means, kind="stable")[:count])


def score(
    method: str, traces: np.ndarray, truth, seed: int, burn_in: int = 0, candidates: str = "first"
) -> RunScore:
    """Pair estimated traces with true modes and compute per-mode errors.

    ``candidates="first"`` lets only the L highest-frequency traces compete
    for the L true modes, the usual reading of an IMF list; ``"all"`` offers
    every trace to the pairing.
    """
    true_freq = truth.freq_rad_s
    traces = np.asarray(traces, dtype=float).reshape(-1, true_freq.shape[1])
    if candidates == "first":
        traces = traces[highest_frequency(traces[:, burn_in:], truth.n_modes)]
    elif candidates != "all":
        raise ValueError(f"unknown candidate rule {candidates!r}")
    n = true_freq.shape[1]
    sl = window_slice(n, "full", burn_in)
    truth_means = true_freq[:, sl].mean(axis=1)
    est_means = traces[:, sl].mean(axis=1) if len(traces) else np.empty(0)
    pairing = assign_modes(list(est_means), list(truth_means))
    failed, m, m_full, m_mid, means = [], [], [], [], []
    for ti, ei in enumerate(pairing):
        if ei is None:
            failed.append(True)
            m.append(math.nan)
            m_full.append(math.nan)
            m_mid.append(math.nan)
            means.append(math.nan)
            continue
        failed.append(failure_flag(est_means[ei], truth_means[ti]))
        m.append(mse(traces[ei], true_freq[ti], "full", burn_in))
        m_full.append(mse(traces[ei], true_freq[ti], "full"))
        m_mid.append(mse(traces[ei], true_freq[ti], "middle_third"))
        means.append(float(est_means[ei]))
    return RunScore(method, seed, failed, m, m_full, m_mid, means)


def _failed_run(method, seed, n_modes, message) -> RunScore:
    nan = [math.nan] * n_modes
    return RunScore(method, seed, [True] * n_modes, nan, list(nan), list(nan), list(nan), message)


def run_once(experiment: Union[str, Scenario], methods, seed: int, config: ExperimentConfig) -> list[RunScore]:
    """One realization, every method on the same samples."""
    scenario = EXPERIMENTS[experiment] if isinstance(experiment, str) else experiment
    series, truth = scenario(config.noise_std, seed)
    out = []
    for method in methods:
        burn_in = int(config.burn_in_frac * len(series)) if method == "ekf" else 0
        try:
            traces = estimate(method, series, config)
        except (AnalysisError, ValueError, np.linalg.LinAlgError) as exc:
            out.append(_failed_run(method, seed, truth.n_modes, f"{type(exc).__name__}: {exc}"))
            continue
        except Exception as exc:  # noqa: BLE001 - a run must never abort the experiment
            out.append(_failed_run(method, seed, truth.n_modes, "".join(traceback.format_exception_only(type(exc), exc)).strip()))
            continue
        out.append(score(method, traces, truth, seed, burn_in, config.candidates))
    return out


def _mean_or_none(values):
    values = [v for v in values if not math.isnan(v)]
    return float(np.mean(values)) if values else None


def aggregate(method: str, runs: Sequence[RunScore], config: ExperimentConfig, extra: Optional[dict] = None) -> ExperimentReport:
    n = len(runs)
    n_modes = len(runs[0].failed) if runs else 0
    n_failed = sum(r.any_failed for r in runs)
    kept = runs if config.include_failed else [r for r in runs if not r.any_failed]
    echo = config.echo()
    echo["seeds"] = [r.seed for r in runs]
    if extra:
        echo.update(extra)
    return ExperimentReport(
        method=method,
        n_runs=n,
        n_failed=n_failed,
        failure_rate=n_failed / n if n else 0.0,
        mode_failure_rate=[sum(r.failed[i] for r in runs) / n for i in range(n_modes)],
        mse=[_mean_or_none(r.mse[i] for r in kept) for i in range(n_modes)],
        mse_full=[_mean_or_none(r.mse_full[i] for r in kept) for i in range(n_modes)],
        mse_middle=[_mean_or_none(r.mse_middle[i] for r in kept) for i in range(n_modes)],
        config=echo,
    )


@dataclass
class MonteCarloResult:
    reports: dict
    runs: list

    def runs_for(self, method: str) -> list:
        return [r for r in self.runs if r.method == method]


def _run_job(args):
    return run_once(*args)


def monte_carlo(
    experiment: Union[str, Scenario],
    methods: Sequence[str] = METHODS,
    n_runs: int = 1000,
    base_seed: int = 0,
    config: ExperimentConfig = ExperimentConfig(),
    workers: int = 1,
) -> MonteCarloResult:
    """Run ``n_runs`` realizations (seed ``base_seed + i``) and aggregate per method.

    Results are stored by seed, so the output does not depend on ``workers``.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    jobs = [(experiment, tuple(methods), base_seed + i, config) for i in range(n_runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_run = list(pool.map(_run_job, jobs, chunksize=max(1, n_runs // (4 * workers))))
    else:
        per_run = [_run_job(j) for j in jobs]
    runs = [score for batch in per_run for score in batch]
    name = experiment if isinstance(experiment, str) else getattr(experiment, "__name__", "custom")
    extra = {"experiment": name, "base_seed": base_seed}
    reports = {m: aggregate(m, [r for r in runs if r.method == m], config, extra) for m in methods}
    return MonteCarloResult(reports, runs)
