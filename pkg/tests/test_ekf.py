import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hhtekf import ekf
from hhtekf.ekf import (
    EkfConfig,
    HhtEkfConfig,
    default_p0,
    default_q,
    initialize_from_fft,
    jacobian,
    observation_row,
    run_ekf,
    run_hht_ekf,
    state_from_modes,
    transition,
)
from hhtekf.errors import EkfDivergence, NoOscillationDetected
from hhtekf.hilbert import hht
from hhtekf.signalgen import ModeSpec, TimeSeries, case_a, noise_stream, pmu_surrogate, synthesize

FS = 30.0


def test_transition_examples():
    assert np.array_equal(transition([1, 0, 0, 0], FS), [1, 0, 0, 0])
    w = 2.0
    assert np.allclose(transition([1, 0, w, 0], FS), [math.cos(w / FS), math.sin(w / FS), w, 0], atol=1e-15)
    assert np.allclose(transition([1, 0, 0, 0.3], FS), [math.exp(-0.01), 0, 0, 0.3], atol=1e-15)


def test_observation_rows():
    assert list(observation_row(1)) == [1, 1, 0, 0]
    assert list(observation_row(2)) == [1, 1, 0, 0, 1, 1, 0, 0]
    with pytest.raises(ValueError):
        observation_row(0)


def test_jacobian_structure():
    F = jacobian([0.3, -0.2, 0.0, 0.0], FS)
    assert np.array_equal(F[:2, :2], np.eye(2))
    F = jacobian(np.arange(1.0, 13.0), FS)
    for i in range(3):
        for j in range(3):
            if i != j:
                assert np.all(F[4 * i : 4 * i + 4, 4 * j : 4 * j + 4] == 0)
        assert np.array_equal(F[4 * i + 2 : 4 * i + 4, 4 * i : 4 * i + 4], np.eye(4)[2:])


state_block = st.tuples(
    st.floats(-5, 5), st.floats(-5, 5), st.floats(0.0, 90.0), st.floats(-1.0, 1.0)
)


@given(st.lists(state_block, min_size=1, max_size=3), st.sampled_from([10.0, 30.0, 60.0]))
def test_jacobian_matches_central_differences(blocks, fs):
    x = np.array([v for b in blocks for v in b])
    F = jacobian(x, fs)
    fd = np.empty_like(F)
    for j in range(x.size):
        h = 1e-6 * max(1.0, abs(x[j]))
        up, down = x.copy(), x.copy()
        up[j] += h
        down[j] -= h
        fd[:, j] = (transition(up, fs) - transition(down, fs)) / (2 * h)
    scale = np.maximum(1.0, np.abs(F))
    assert np.max(np.abs(F - fd) / scale) <= 1e-5


@given(
    st.floats(0.1, 3.0), st.floats(-math.pi, math.pi), st.floats(0.1, 90.0), st.floats(-0.05, 0.5)
)
def test_transition_closed_form_over_1000_steps(amp, phase, w, sigma):
    x = state_from_modes([amp], [phase], [w], [sigma])
    xc0, xs0 = x[0], x[1]
    worst_phasor = worst_signal = 0.0
    for k in range(1, 1001):
        x = transition(x, FS)
        decay = math.exp(-sigma * k / FS)
        th = w * k / FS
        xc = decay * (xc0 * math.cos(th) - xs0 * math.sin(th))
        xs = decay * (xc0 * math.sin(th) + xs0 * math.cos(th))
        worst_phasor = max(worst_phasor, abs(x[0] - xc), abs(x[1] - xs))
        # H x reproduces the damped cosine the state was built from
        y = amp * decay * math.cos(th + phase)
        worst_signal = max(worst_signal, abs(x[0] + x[1] - y))
    assert worst_phasor <= 1e-9
    assert worst_signal <= 1e-9
    assert x[2] == w and x[3] == sigma


def test_closed_form_when_cosine_and_sine_weights_agree():
    # with B_c = B_s the rotating phasor is exactly (B cos, B sin) scaled by the decay
    b, w, sigma = 0.7, 5.0, 0.2
    x = np.array([b, 0.0, w, sigma])
    for k in range(1, 1001):
        x = transition(x, FS)
    decay = math.exp(-sigma * 1000 / FS)
    assert x[0] == pytest.approx(b * decay * math.cos(w * 1000 / FS), abs=1e-9)
    assert x[1] == pytest.approx(b * decay * math.sin(w * 1000 / FS), abs=1e-9)


def tone_series(freq_hz, n, amp=1.0, phase=0.0, sigma=0.0):
    return synthesize([ModeSpec(amp, sigma, 2 * math.pi * freq_hz, phase)], n, FS)[0]


def test_filter_converges_from_a_detuned_start():
    w0 = 2 * math.pi * 1.5
    y = tone_series(1.5, 450)
    cfg = EkfConfig(1, FS, state_from_modes([1.0], [0.0], [1.1 * w0]), q=default_q(1, 1e-9), r=1e-3)
    trace = ekf.filter(y, cfg)
    assert abs(trace.freq_rad_s[0, -1] - w0) < 0.01 * w0


def test_filter_without_information_keeps_its_prior():
    y = tone_series(1.5, 300)
    x0 = state_from_modes([1.0], [0.0], [8.0])
    trace = ekf.filter(y, EkfConfig(1, FS, x0, q=np.zeros((4, 4)), r=1e12))
    assert np.max(np.abs(trace.freq_rad_s[0] - 8.0)) <= 1e-9


def test_innovations_vanish_for_an_exact_model():
    amps, phases, freqs, damps = [1.0, 0.6], [0.4, -1.0], [2 * math.pi * 0.8, 2 * math.pi * 2.1], [0.05, -0.02]
    y = synthesize([ModeSpec(a, d, w, p) for a, p, w, d in zip(amps, phases, freqs, damps)], 300, FS)[0]
    cfg = EkfConfig(2, FS, state_from_modes(amps, phases, freqs, damps), q=np.zeros((8, 8)), r=1e-12)
    trace = ekf.filter(y, cfg)
    assert np.sqrt(np.mean(trace.innovation**2)) <= 1e-6


@pytest.mark.parametrize("robust", [True, False])
def test_covariance_stays_symmetric_and_finite(robust):
    y, _ = case_a(0.1, seed=4)
    result = run_hht_ekf(y, HhtEkfConfig(robust_cov=robust))
    P = result.trace.final.P
    assert np.all(np.isfinite(P))
    assert np.max(np.abs(P - P.T)) <= 1e-9


def test_divergence_is_reported_with_sample_index():
    y = tone_series(1.0, 100)
    x0 = np.array([1.0, 0.0, 6.0, -3e4])
    with pytest.raises(EkfDivergence) as err:
        ekf.filter(y, EkfConfig(1, FS, x0))
    assert err.value.stage == "ekf"
    assert 0 <= err.value.sample_index < 100


def test_mode_relabeling_is_equivariant():
    y, _ = case_a(0.1, seed=5)
    x0 = state_from_modes([1.0, 1.0], [0.0, 1.0], [6.0, 9.5], [0.0, 0.0])
    p0 = default_p0(2)
    p0[0, 1] = p0[1, 0] = 0.2
    perm = np.r_[4:8, 0:4]
    a = ekf.filter(y, EkfConfig(2, FS, x0, p0=p0))
    b = ekf.filter(y, EkfConfig(2, FS, x0[perm], p0=p0[np.ix_(perm, perm)]))
    assert np.allclose(a.freq_rad_s, b.freq_rad_s[::-1], rtol=0, atol=1e-9)
    assert np.allclose(a.recon, b.recon[::-1], rtol=0, atol=1e-9)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(x0=np.zeros(3)),
        dict(r=0.0),
        dict(q=-np.eye(4)),
        dict(p0=np.zeros((4, 4))),
        dict(p0=np.triu(np.ones((4, 4)))),
        dict(n_modes=0, x0=np.zeros(0)),
    ],
)
def test_config_validation(kwargs):
    args = dict(n_modes=1, fs=FS, x0=np.zeros(4))
    args.update(kwargs)
    with pytest.raises(ValueError):
        EkfConfig(**args)


def test_fft_init_single_tone_within_one_bin():
    y = tone_series(1.5, 512)
    init = initialize_from_fft(y)
    assert init.n_modes == 1
    assert abs(init.x0[2] - 2 * math.pi * 1.5) <= 2 * math.pi * FS / 512
    assert init.p0[2, 2] == pytest.approx((2 * math.pi * FS / 512) ** 2)


def test_fft_init_case_a_after_dc_removal_finds_two_modes():
    y, _ = case_a(0.1, seed=0)
    trend = hht(y).trend()
    init = initialize_from_fft(y.with_samples(y.samples - trend))
    freqs = sorted(p.freq_rad_s for p in init.peaks)
    assert init.n_modes == 2
    assert abs(freqs[0] - 2 * math.pi) < 2 * math.pi * 0.2
    assert abs(freqs[1] - 3 * math.pi) < 2 * math.pi * 0.2


def test_fft_init_rejects_white_noise():
    triggered = 0
    for seed in range(100):
        try:
            initialize_from_fft(TimeSeries(noise_stream(150, seed), FS))
            triggered += 1
        except NoOscillationDetected:
            pass
    print(f"white-noise false triggers: {triggered}/100")
    assert triggered <= 5


def test_zero_signal_reports_no_oscillation():
    with pytest.raises(NoOscillationDetected) as err:
        run_hht_ekf(TimeSeries(np.zeros(150), FS))
    assert err.value.stage == "init"


def test_fixed_mode_count_and_explicit_start():
    y, _ = case_a(0.0)
    assert run_hht_ekf(y, HhtEkfConfig(n_modes=2)).trace.n_modes <= 2
    x0 = state_from_modes([1, 1], [0, 1], [6.3, 9.4])
    res = run_hht_ekf(y, HhtEkfConfig(x0=x0))
    assert res.init is None and res.trace.n_modes == 2


def test_raw_ekf_runs_without_decomposition():
    y, _ = case_a(0.1, seed=1)
    assert run_ekf(y).n_modes >= 1


def test_surrogate_final_frequencies():
    y, _ = pmu_surrogate(seed=0)
    final_hz = np.sort(run_hht_ekf(y).trace.freq_rad_s[:, -1]) / (2 * math.pi)
    for target in (0.5, 1.5):
        assert np.min(np.abs(final_hz - target)) < 0.05
