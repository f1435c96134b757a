import math

import numpy as np
import pytest
from scipy import stats

from retstat.errors import CensoringBudgetExceeded, InvalidParameter
from retstat.normal import norm_ppf
from retstat.simulate import (
    MASK64,
    SampleSummary,
    TrialConfig,
    TrialResult,
    gen_iid,
    initial_length,
    ks_normal,
    mix_seed,
    qq_points,
    run_trial,
    run_trials,
    summarize,
)
from retstat.statistics import ProcessModel

UNIFORM = ProcessModel.equidistributed(2)
ASYM = ProcessModel.from_probs([0.75, 0.25])


# --- seeds and generation ---


def test_mix_seed_is_stable_and_spreads():
    """Mixed seeds are 64-bit, repeatable and distinct across indices."""
    values = [mix_seed(42, i) for i in range(1000)]
    assert values == [mix_seed(42, i) for i in range(1000)]
    assert len(set(values)) == 1000
    assert all(0 <= v <= MASK64 for v in values)
    assert mix_seed(42, 0) != mix_seed(43, 0)


def test_gen_iid_deterministic_and_in_range():
    """Same seed, same symbols; all symbols lie in the alphabet."""
    a = gen_iid(ProcessModel.equidistributed(10), 500, seed=3)
    b = gen_iid(ProcessModel.equidistributed(10), 500, seed=3)
    assert a.symbols.tolist() == b.symbols.tolist()
    assert a.alphabet.size == 10
    assert 0 <= a.symbols.min() and a.symbols.max() < 10
    with pytest.raises(InvalidParameter):
        gen_iid(UNIFORM, 0, seed=1)


def test_gen_iid_frequencies_follow_model():
    """Symbol frequencies match the model probabilities."""
    seq = gen_iid(ASYM, 200_000, seed=8)
    freq = np.bincount(seq.symbols, minlength=2) / len(seq)
    assert freq[1] == pytest.approx(0.25, abs=0.005)
    skewed = gen_iid(ProcessModel.from_probs([0.0, 0.5, 0.5]), 1000, seed=2)
    assert 0 not in set(skewed.symbols.tolist())


# --- configuration ---


def test_trial_config_validation():
    """Counts must be positive and a fixed length must cover k blocks."""
    with pytest.raises(InvalidParameter):
        TrialConfig(UNIFORM, k=10, ell=4, trials=0, master_seed=1)
    with pytest.raises(InvalidParameter):
        TrialConfig(UNIFORM, k=10, ell=4, trials=3, master_seed=1, length=39)
    with pytest.raises(InvalidParameter):
        TrialConfig(UNIFORM, k=10, ell=4, trials=3, master_seed=1, max_doublings=-1)


def test_initial_length_for_binary_blocks():
    """k ell + ell ceil(ln(1000 k) / p) at A=2, ell=10, k=250."""
    assert initial_length(UNIFORM, 250, 10) == 2500 + 10 * 12728


# --- trials ---


def test_run_trial_is_deterministic():
    """A trial depends only on (master seed, trial index)."""
    config = TrialConfig(UNIFORM, k=20, ell=4, trials=3, master_seed=7)
    first = run_trial(config, 1)
    again = run_trial(config, 1)
    other = run_trial(config, 2)
    assert first.ok
    assert first == again
    assert first.z != other.z
    assert first.z_corrected is not None
    assert first.z_conditional is None


def test_run_trial_reports_censoring_on_fixed_length():
    """With exactly k blocks the last return time cannot resolve."""
    config = TrialConfig(UNIFORM, k=20, ell=4, trials=1, master_seed=7, length=80)
    result = run_trial(config, 0)
    assert not result.ok
    assert result.censored >= 1
    assert result.blocks_used == 20


def test_run_trial_falls_back_when_correction_invalid():
    """A non-positive corrected variance records an error and keeps z."""
    config = TrialConfig(UNIFORM, k=100, ell=2, trials=1, master_seed=5)
    result = run_trial(config, 0)
    assert result.ok
    assert result.z_corrected is None
    assert result.error is not None and "not positive" in result.error


def test_run_trials_rejects_censoring_beyond_budget():
    """Every trial censored is far beyond the 0.5% budget."""
    config = TrialConfig(UNIFORM, k=20, ell=4, trials=4, master_seed=7, length=80)
    with pytest.raises(CensoringBudgetExceeded) as err:
        run_trials(config)
    assert err.value.failed == [0, 1, 2, 3]
    assert err.value.trials == 4


def test_run_trials_parallel_matches_sequential():
    """A process pool returns the same results in the same order."""
    config = TrialConfig(ASYM, k=10, ell=3, trials=6, master_seed=99)
    sequential = run_trials(config)
    parallel = run_trials(TrialConfig(ASYM, k=10, ell=3, trials=6, master_seed=99, workers=2))
    assert [r.trial for r in sequential] == list(range(6))
    assert sequential == parallel
    assert all(r.z_conditional is not None for r in sequential)


# --- normality diagnostics ---


def test_qq_points_small_sample():
    """Quartile line through (Phi^-1(1/4), 1.5) and (Phi^-1(3/4), 2.5)."""
    qq = qq_points([3.0, 1.0, 2.0])
    assert qq.sample.tolist() == [1.0, 2.0, 3.0]
    assert qq.theoretical[0] == pytest.approx(norm_ppf(1 / 6))
    assert qq.theoretical[1] == pytest.approx(0.0, abs=1e-12)
    assert qq.slope == pytest.approx(1 / (2 * norm_ppf(0.75)))
    assert qq.intercept == pytest.approx(2.0)
    with pytest.raises(InvalidParameter):
        qq_points([1.0, 2.0])


def test_qq_reference_line_uses_interpolated_quartiles():
    """Quartiles of 1..8 interpolate to 2.75 and 6.25, as numpy's linear method gives."""
    values = np.arange(8.0, 0.0, -1.0)
    qq = qq_points(values)
    q1, q3 = np.quantile(values, [0.25, 0.75])
    assert (q1, q3) == (2.75, 6.25)
    assert qq.slope == pytest.approx(3.5 / (2 * norm_ppf(0.75)))
    assert qq.intercept == pytest.approx(4.5)


def test_qq_points_on_normal_sample():
    """A standard normal sample lies close to the identity line."""
    sample = np.random.default_rng(4).standard_normal(4000)
    qq = qq_points(sample)
    assert qq.slope == pytest.approx(1.0, abs=0.08)
    assert qq.intercept == pytest.approx(0.0, abs=0.06)
    assert qq.max_central_deviation() < 0.15


def test_ks_normal_distance_matches_scipy():
    """D equals scipy's statistic and the p-value uses the Kolmogorov series."""
    sample = np.random.default_rng(10).standard_normal(1500)
    result = ks_normal(sample)
    reference = stats.kstest(sample, "norm")
    assert result.D == pytest.approx(reference.statistic, abs=1e-12)
    en = math.sqrt(1500)
    assert result.p_value == pytest.approx(
        stats.kstwobign.sf((en + 0.12 + 0.11 / en) * result.D), abs=1e-10
    )


def test_ks_normal_rejects_shifted_sample():
    """A shift of one standard deviation is detected."""
    sample = np.random.default_rng(10).standard_normal(500) + 1.0
    assert ks_normal(sample).p_value < 1e-6
    with pytest.raises(InvalidParameter):
        ks_normal([0.1] * 5)


def test_sample_summary_small_counts():
    """KS needs 20 samples and the variance needs two."""
    summary = SampleSummary.of([0.1, -0.2, 0.3, 0.0, 0.4])
    assert summary.n == 5
    assert math.isnan(summary.ks_p)
    assert not math.isnan(summary.qq_max_central_deviation)
    single = SampleSummary.of([1.0])
    assert math.isnan(single.variance)


def test_summarize_counts_failed_trials():
    """Failed trials are listed and excluded from the statistics."""
    results = [
        TrialResult(0, 1, 0.5, 1.0),
        TrialResult(1, 2, None, None, censored=2),
        TrialResult(2, 3, -0.5, 0.9, z_corrected=-0.6),
    ]
    config = TrialConfig(UNIFORM, k=250, ell=10, trials=3, master_seed=1)
    summary = summarize(results, config)
    assert summary.trials == 3
    assert summary.failed == [1]
    assert summary.z.n == 2
    assert summary.z.mean == pytest.approx(0.0)
    assert summary.h_hat_mean == pytest.approx(0.95)
    assert summary.corrected is not None and summary.corrected.n == 1
    assert summary.conditional is None
    assert summary.regime["strict_ok"] is False
    assert summary.as_dict()["failed"] == [1]
    with pytest.raises(InvalidParameter):
        summarize([results[1]])
