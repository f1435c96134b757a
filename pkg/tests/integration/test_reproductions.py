"""
Desk-scale reproductions of the Monte Carlo experiments.

Every test here uses fixed seeds. The heavier ones carry the ``slow`` marker;
run them with ``pytest -m slow tests/integration``.
"""

import math

import numpy as np
import pandas as pd
import pytest

from retstat.baselines import (
    grassberger_lengths,
    kac_diagnostic,
    sample_overlapping_return,
    wyner_value,
)
from retstat.cli import main
from retstat.core import Alphabet, SymbolSequence, blockify, modified_return_times, return_times
from retstat.dependence import (
    direct_modified_sample,
    exact_pair_log_covariance,
    na_empirical_check,
    na_library,
    ordered_spacings_sample,
    pair_conditional_law,
    sandwich_violations,
)
from retstat.errors import Unresolved
from retstat.moments import (
    THIRD_MOMENT_BOUND,
    ZETA2,
    exact_log_moment,
    mu_asymptotic,
    third_abs_central_moment,
)
from retstat.simulate import (
    SampleSummary,
    TrialConfig,
    ks_normal,
    mix_seed,
    run_trials,
    summarize,
)
from retstat.statistics import ProcessModel, predicted_variance_inflation

UNIFORM = ProcessModel.equidistributed(2)
ASYM = ProcessModel.from_probs([0.75, 0.25])


def _assert_normal_like(summary: SampleSummary, ks_min: float = 0.01) -> None:
    assert -0.15 <= summary.mean <= 0.15
    assert 0.65 <= summary.variance <= 1.10
    assert summary.ks_p > ks_min
    assert summary.qq_max_central_deviation < 0.35


@pytest.fixture(scope="module")
def long_block_run():
    """k=1000, ell=13 on an equidistributed binary source, 100 trials."""
    config = TrialConfig(UNIFORM, k=1000, ell=13, trials=100, master_seed=2013)
    return run_trials(config)


# --- moments ---


def test_moment_gaps_at_two_to_minus_ten():
    """Exact mean and variance sit inside their envelopes; K <= 9 throughout."""
    p = 2.0**-10
    assert abs(exact_log_moment(p, 1) - mu_asymptotic(p)) <= 5 * p
    assert abs(exact_log_moment(p, 2) - ZETA2) <= 5 * p * abs(math.log(p))
    for e in range(4, 21):
        assert third_abs_central_moment(2.0**-e, 1e-10) <= THIRD_MOMENT_BOUND


# --- Monte Carlo normality ---


@pytest.mark.slow
def test_equidistributed_binary_short_blocks():
    """A=2, k=250, ell=10, 500 trials: the statistic is close to N(0, 1)."""
    config = TrialConfig(UNIFORM, k=250, ell=10, trials=500, master_seed=410)
    results = run_trials(config)
    summary = summarize(results, config)
    assert not summary.failed
    _assert_normal_like(summary.z)
    assert summary.regime["equidistributed"] == pytest.approx(2.44, abs=0.01)


@pytest.mark.slow
def test_asymmetric_binary_short_blocks():
    """q=(3/4, 1/4): H_hat is consistent and block-probability noise inflates z."""
    config = TrialConfig(ASYM, k=250, ell=10, trials=500, master_seed=420)
    results = run_trials(config)
    summary = summarize(results, config)
    assert summary.h_hat_mean == pytest.approx(ASYM.entropy_bits, abs=0.01)
    assert predicted_variance_inflation(10, ASYM) > 1
    assert summary.z.variance > 1.0
    conditional = summary.conditional
    assert conditional is not None
    assert conditional.variance < summary.z.variance
    assert conditional.variance < 1.25
    assert abs(conditional.mean) <= 0.2
    values = np.array([r.z_conditional for r in results if r.z_conditional is not None])
    standardised = (values - values.mean()) / values.std(ddof=1)
    assert ks_normal(standardised).p_value > 0.01


@pytest.mark.slow
def test_equidistributed_binary_long_blocks(long_block_run):
    """A=2, k=1000, ell=13, 100 trials."""
    summary = summarize(long_block_run)
    assert not summary.failed
    _assert_normal_like(summary.z, ks_min=0.005)


@pytest.mark.slow
def test_entropy_estimate_consistency(long_block_run):
    """|H_hat - 1| <= 0.05 in at least 99 of 100 runs."""
    close = sum(1 for r in long_block_run if r.h_hat is not None and abs(r.h_hat - 1) <= 0.05)
    assert close >= 99


@pytest.mark.slow
def test_variance_correction_moves_variance_towards_one():
    """The corrected statistic's variance is nearer 1 in at least 8 of 10 replicates."""
    wins = 0
    for replicate in range(10):
        config = TrialConfig(UNIFORM, k=250, ell=10, trials=500, master_seed=5000 + replicate)
        summary = summarize(run_trials(config), config)
        assert summary.corrected is not None
        if abs(summary.corrected.variance - 1) <= abs(summary.z.variance - 1):
            wins += 1
    assert wins >= 8


# --- coupling and dependence ---


@pytest.mark.slow
def test_coupling_identity_on_distinct_leading_blocks():
    """S_j = R_j + (k - j) on 10^4 realisations with distinct first k blocks."""
    rng = np.random.default_rng(606)
    alphabet = Alphabet(10)
    k = 5
    for t in range(10_000):
        head = rng.permutation(10)[:k]
        tail = rng.integers(0, 10, size=300)
        blocks = blockify(SymbolSequence(alphabet, np.concatenate([head, tail])), 1)
        s = return_times(blocks, k, len(blocks))
        r = modified_return_times(blocks, k, len(blocks) - k, seed=t)
        assert r.early_free == frozenset(range(1, k + 1))
        for (j, sj, _), (_, rj) in zip(s.entries, r.entries, strict=True):
            assert sj is not None and rj is not None
            assert sj == rj + (k - j)


def test_sandwich_exhaustive_small_alphabets():
    """A=2, ell <= 2, m <= 4, s <= 8: no violations."""
    for values in (2, 4):
        for m in range(2, min(4, values) + 1):
            assert sandwich_violations(values, m, 8).violations == 0


@pytest.mark.parametrize("p", [2.0**-8, 2.0**-10, 2.0**-12])
def test_pair_law_and_covariance(p):
    """The conditional pmf normalises and the covariance sits in [p ln p, 0]."""
    for x in (1, 5, 50):
        law = pair_conditional_law(p, x)
        assert abs(law.total + law.truncation_bound - 1) <= 1e-9
    cov = exact_pair_log_covariance(p)
    assert p * math.log(p) <= cov.covariance <= 0
    ratio = cov.covariance / (p * math.log(p) / 4)
    assert 1 / 3 <= ratio <= 3


@pytest.mark.slow
def test_negative_association_library():
    """All library pairs stay within 3 SE of non-positive at 10^5 samples."""
    k, p = 4, 0.02
    samples = ordered_spacings_sample(k, p, seed=909, size=100_000)
    for f1, f2 in na_library(k, 1 / p):
        check = na_empirical_check(samples, f1, f2)
        assert check.within(3.0), (str(f1), str(f2))


def _joint_histogram(samples: np.ndarray, cap: int) -> np.ndarray:
    clipped = np.minimum(samples, cap) - 1
    counts = np.zeros((cap, cap))
    np.add.at(counts, (clipped[:, 0], clipped[:, 1]), 1)
    return counts / samples.shape[0]


@pytest.mark.slow
def test_ordered_spacings_match_direct_construction():
    """k=2, A=4, ell=1: total variation between the samplers is below 0.01."""
    size = 2_000_000
    spacings = ordered_spacings_sample(2, 0.25, seed=71, size=size)
    direct = direct_modified_sample(4, 2, size, seed=72, length=96)
    assert (direct > 0).all()
    tv = 0.5 * np.abs(_joint_histogram(spacings, 40) - _joint_histogram(direct, 40)).sum()
    assert tv < 0.01


# --- digit pipeline ---


@pytest.mark.slow
def test_digit_pipeline_on_uniform_decimal_stream(tmp_path):
    """50 segments of 400k digits through the CLI give finite, centred z values."""
    digits = np.random.default_rng(314).integers(0, 10, size=20_399_998, dtype=np.uint8)
    path = tmp_path / "digits.txt"
    path.write_bytes(b"3." + (digits + ord("0")).tobytes())
    out = tmp_path / "out"
    main(
        [
            "analyze", "--file", str(path), "--k", "1000", "--ell", "4",
            "--segment-length", "400000", "--overrun", "--out-dir", str(out),
        ]
    )  # fmt: skip
    table = pd.read_csv(out / "segments.csv")
    assert len(table) == 50
    z = table["z"].to_numpy()
    assert np.isfinite(z).all()
    assert -0.5 <= z.mean() <= 0.5
    assert np.abs(z).max() <= 4
    assert ks_normal(z).p_value > 0.01


# --- baselines ---


def _brute_prefix_lengths(data: list[int], n: int) -> list[int]:
    out = []
    for i in range(n):
        best = 0
        for j in range(n):
            if j == i:
                continue
            common = 0
            while i + common < len(data) and j + common < len(data) and (
                data[i + common] == data[j + common]
            ):
                common += 1
            best = max(best, common)
        out.append(best + 1)
    return out


def test_grassberger_matches_definition_on_short_sequences():
    """200 random binary sequences of length <= 24."""
    rng = np.random.default_rng(1212)
    resolved = 0
    for _ in range(200):
        size = int(rng.integers(6, 25))
        data = rng.integers(0, 2, size=size).tolist()
        n = int(rng.integers(2, size // 2 + 1))
        brute = _brute_prefix_lengths(data, n)
        try:
            lengths = grassberger_lengths(SymbolSequence.of(data, 2), n)
        except Unresolved:
            assert max(brute) > size - n + 1
            continue
        assert lengths.lengths.tolist() == brute
        resolved += 1
    assert resolved > 0


@pytest.mark.slow
def test_wyner_finite_form_is_normal():
    """q=(3/4, 1/4), n=16, 500 sequences: the finite-n form passes KS at 1%."""
    values = []
    censored = 0
    for s in range(500):
        ret, _ = sample_overlapping_return(ASYM, 16, mix_seed(1616, s))
        if ret.time is None:
            censored += 1
            continue
        values.append(wyner_value(ret.time, 16, ASYM, finite=True))
    assert censored <= 2
    assert ks_normal(values).p_value > 0.01
    kac = kac_diagnostic(ASYM, 16, 300, seed=1617)
    assert abs(kac.mean - 1) <= 4 * kac.stderr
