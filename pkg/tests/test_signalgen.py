import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hhtekf.signalgen import (
    CASE_A_MODES,
    ModeSpec,
    TimeSeries,
    case_a,
    case_b,
    noise_stream,
    pmu_surrogate,
    synthesize,
)


def scalar_model(modes, k, fs, step=None, n=150):
    """Per-sample evaluation with plain floats, independent of the vectorised generator."""
    total = 0.0
    for m in modes:
        if m.freq_ramp is None:
            w = m.freq_rad_s
        else:
            w0, w1 = m.freq_ramp
            w = w0 + (w1 - w0) * k / n
        total += m.amplitude * math.exp(-m.damping_per_s * k / fs) * math.cos(w * k / fs + m.phase_rad)
    if step is not None and k > step[0]:
        total += step[1]
    return total



def test_case_a_first_sample():
    x, _ = case_a(0.0)
    assert x.samples[0] == pytest.approx(1.5, abs=1e-15)


def test_case_a_sample_after_step():
    x, _ = case_a(0.0)
    k = 76
    expected = (
        math.exp(0.1 * k / 30) * math.cos(2 * math.pi * k / 30)
        + math.exp(-0.01 * k / 30) * math.cos(3 * math.pi * k / 30 + math.pi / 3)
        + 5
    )
    assert x.samples[k] == pytest.approx(expected, abs=1e-12)


def test_case_b_truth_endpoints():
    x, truth = case_b(0.0)
    assert len(truth) == len(x) == 150
    assert truth.freq_rad_s[0, 0] == pytest.approx(2 * math.pi * 1.5)
    assert truth.freq_rad_s[0, -1] == pytest.approx(2 * math.pi * (1.5 + 0.5 * 149 / 150))


def test_case_b_matches_scalar_model():
    x, truth = case_b(0.0)
    from hhtekf.signalgen import CASE_B_MODE

    ref = [scalar_model([CASE_B_MODE], k, 30.0, (75, 5.0)) for k in range(150)]
    assert np.max(np.abs(x.samples - ref)) <= 1e-12
    # phase derivative of w[k] k / fs is w0 + 2 slope k
    slope = (truth.freq_rad_s[0, 1] - truth.freq_rad_s[0, 0])
    assert truth.phase_rate_rad_s[0, 10] == pytest.approx(truth.freq_rad_s[0, 0] + 2 * slope * 10)


modes_strategy = st.lists(
    st.builds(
        ModeSpec,
        amplitude=st.floats(0.1, 3.0),
        damping_per_s=st.floats(-0.2, 0.5),
        freq_rad_s=st.floats(0.5, 40.0),
        phase_rad=st.floats(-math.pi, math.pi),
    ),
    min_size=1,
    max_size=3,
)


@given(modes_strategy, st.integers(8, 300))
def test_noise_free_matches_scalar_evaluation(modes, n):
    x, truth = synthesize(modes, n, 30.0, step=(n // 2, 2.0))
    ref = np.array([scalar_model(modes, k, 30.0, (n // 2, 2.0)) for k in range(n)])
    assert np.max(np.abs(x.samples - ref)) <= 1e-12
    assert truth.freq_rad_s.shape == (len(modes), n)


@given(modes_strategy, st.floats(0.0, 1.0), st.integers(0, 2**32))
def test_determinism(modes, noise_std, seed):
    a, ta = synthesize(modes, 64, 30.0, noise_std=noise_std, seed=seed)
    b, tb = synthesize(modes, 64, 30.0, noise_std=noise_std, seed=seed)
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(ta.freq_rad_s, tb.freq_rad_s)


def test_noise_is_seeded_and_scaled():
    clean, _ = case_a(0.0)
    noisy, _ = case_a(0.1, seed=7)
    assert np.allclose(noisy.samples - clean.samples, 0.1 * noise_stream(150, 7), rtol=0, atol=1e-13)
    assert not np.array_equal(case_a(0.1, 7)[0].samples, case_a(0.1, 8)[0].samples)


def test_nyquist_guard():
    with pytest.raises(ValueError, match="Nyquist"):
        synthesize([ModeSpec(1.0, 0.0, math.pi * 30)], 100, 30.0)
    with pytest.raises(ValueError, match="Nyquist"):
        synthesize([ModeSpec(1.0, 0.0, 1.0, freq_ramp=(1.0, 100.0))], 100, 30.0)


@pytest.mark.parametrize(
    "kwargs",
    [dict(n=1), dict(fs=0.0), dict(fs=float("nan")), dict(noise_std=-1.0)],
)
def test_invalid_parameters(kwargs):
    args = dict(modes=list(CASE_A_MODES), n=100, fs=30.0)
    args.update(kwargs)
    with pytest.raises(ValueError):
        synthesize(**args)


def test_timeseries_is_immutable_and_validated():
    ts = TimeSeries([1.0, 2.0], 10.0, start_index=5)
    with pytest.raises(ValueError):
        ts.samples[0] = 3.0
    assert ts.times[0] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        TimeSeries([1.0, float("inf")], 10.0)
    with pytest.raises(ValueError):
        TimeSeries([1.0], -1.0)


def test_surrogate_snr_and_layout():
    x, truth = pmu_surrogate(seed=3)
    assert len(x) == len(truth) == 600
    assert np.allclose(truth.freq_rad_s[:, 0], [2 * math.pi * 0.5, 2 * math.pi * 1.5])
    clean, _ = pmu_surrogate(seed=3, snr_db=300.0)
    noise = x.samples - clean.samples
    osc = clean.samples - truth.trend
    snr = 10 * math.log10(np.mean(osc**2) / np.mean(noise**2))
    assert snr == pytest.approx(20.0, abs=1.5)
