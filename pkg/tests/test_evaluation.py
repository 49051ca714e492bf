import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hhtekf.ekf import HhtEkfConfig, state_from_modes
from hhtekf.evaluation import (
    ExperimentConfig,
    assign_modes,
    failure_flag,
    monte_carlo,
    mse,
    run_once,
    score,
    window_slice,
)
from hhtekf.signalgen import GroundTruth, case_a

PI = math.pi


def test_assign_nearest():
    assert assign_modes([3.1 * PI, 2.05 * PI], [2 * PI, 3 * PI]) == [1, 0]


def test_assign_single_estimate_to_closer_truth():
    assert assign_modes([2.9 * PI], [2 * PI, 3 * PI]) == [None, 0]


def test_assign_tie_goes_to_lower_truth_index():
    assert assign_modes([2.5 * PI], [2 * PI, 3 * PI]) == [0, None]


@given(st.lists(st.floats(0.1, 100), min_size=1, max_size=5), st.lists(st.floats(0.1, 100), min_size=1, max_size=5))
def test_assignment_is_injective(est, truth):
    pairs = assign_modes(est, truth)
    used = [p for p in pairs if p is not None]
    assert len(used) == len(set(used)) == min(len(est), len(truth))


def test_failure_flag_rule():
    assert failure_flag(2 * PI * 1.6, 2 * PI)
    assert not failure_flag(2 * PI, 2 * PI)
    assert not failure_flag(1.5 * 2 * PI, 2 * PI)
    assert failure_flag(0.49 * 2 * PI, 2 * PI)


def test_mse_basics():
    truth = np.linspace(9, 12, 150)
    assert mse(truth, truth) == 0
    assert mse(truth + 0.3, truth) == pytest.approx(0.09)
    assert mse(truth + 0.3, truth, "middle_third") == pytest.approx(0.09)
    with pytest.raises(ValueError):
        mse(truth[:-1], truth)
    assert window_slice(150, "middle_third") == slice(50, 100)


def test_score_only_offers_highest_frequency_traces_in_first_mode():
    truth = GroundTruth(np.full((1, 10), 10.0), np.zeros((1, 10)), np.full((1, 10), 10.0))
    traces = np.array([np.full(10, 20.0), np.full(10, 10.0)])
    first = score("hht", traces, truth, 0, candidates="first")
    every = score("hht", traces, truth, 0, candidates="all")
    assert first.failed == [True] and first.est_mean_freq == [20.0]
    assert every.failed == [False] and every.mse == [0.0]


def test_exact_start_on_noiseless_case_gives_tiny_ekf_error():
    x0 = state_from_modes([1, 1], [0, PI / 3], [2 * PI, 3 * PI], [-0.1, 0.01])
    cfg = ExperimentConfig(noise_std=0.0, ekf=HhtEkfConfig(x0=x0, p0=1e-6 * np.eye(8)))
    report = monte_carlo("case_a", ["ekf"], n_runs=1, config=cfg).reports["ekf"]
    assert report.failure_rate == 0
    assert max(report.mse) < 1e-2


def test_monte_carlo_is_reproducible_and_auditable():
    a = monte_carlo("case_a", n_runs=6, base_seed=11)
    b = monte_carlo("case_a", n_runs=6, base_seed=11)
    for m in a.reports:
        assert a.reports[m].to_dict() == b.reports[m].to_dict()
        runs = a.runs_for(m)
        assert [r.seed for r in runs] == list(range(11, 17))
        assert a.reports[m].failure_rate == sum(r.any_failed for r in runs) / 6
        kept = [r for r in runs if not r.any_failed]
        for i, value in enumerate(a.reports[m].mse):
            expected = float(np.mean([r.mse[i] for r in kept])) if kept else None
            assert value == expected


def test_workers_do_not_change_results():
    one = monte_carlo("case_b", n_runs=5, base_seed=3, workers=1)
    many = monte_carlo("case_b", n_runs=5, base_seed=3, workers=2)
    assert {m: r.to_dict() for m, r in one.reports.items()} == {m: r.to_dict() for m, r in many.reports.items()}
    assert [(r.method, r.seed, r.est_mean_freq) for r in one.runs] == [
        (r.method, r.seed, r.est_mean_freq) for r in many.runs
    ]


def test_methods_share_one_noise_realization():
    calls = []

    def scenario(noise_std, seed):
        calls.append(seed)
        return case_a(noise_std, seed)

    run_once(scenario, ("hht", "masking", "ekf"), 9, ExperimentConfig())
    assert calls == [9]


def test_failed_runs_are_kept_as_failures():
    def flat(noise_std, seed):
        x, truth = case_a(0.0, seed)
        return x.with_samples(np.zeros(len(x))), truth

    (result,) = run_once(flat, ("ekf",), 0, ExperimentConfig())
    assert result.failed == [True, True]
    assert "NoOscillationDetected" in result.error
    report = monte_carlo(flat, ["ekf"], n_runs=2).reports["ekf"]
    assert report.failure_rate == 1.0 and report.mse == [None, None]


def test_invalid_arguments():
    with pytest.raises(ValueError):
        monte_carlo("case_a", n_runs=0)
    with pytest.raises(ValueError):
        monte_carlo("case_a", ["wavelet"], n_runs=1)
    with pytest.raises(ValueError):
        failure_flag(1.0, 0.0)
