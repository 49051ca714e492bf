"""EKF-refined Hilbert-Huang analysis of damped power-system oscillations."""

__version__ = "0.1.0"

from .ekf import EkfConfig, HhtEkfConfig, filter, run_ekf, run_hht_ekf
from .emd import EmdConfig, emd, masking_emd, sift
from .errors import AnalysisError, EkfDivergence, NoOscillationDetected, ResidueReached
from .hilbert import HhtConfig, analytic_signal, hht, masking_hht
from .signalgen import ModeSpec, TimeSeries, case_a, case_b, pmu_surrogate, synthesize

__all__ = [
    "AnalysisError",
    "EkfConfig",
    "EkfDivergence",
    "EmdConfig",
    "HhtConfig",
    "HhtEkfConfig",
    "ModeSpec",
    "NoOscillationDetected",
    "ResidueReached",
    "TimeSeries",
    "analytic_signal",
    "case_a",
    "case_b",
    "emd",
    "filter",
    "hht",
    "masking_emd",
    "masking_hht",
    "pmu_surrogate",
    "run_ekf",
    "run_hht_ekf",
    "sift",
    "synthesize",
]
