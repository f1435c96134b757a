import math

import numpy as np
import pytest

from retstat.baselines import (
    grassberger_entropy,
    grassberger_lengths,
    kac_diagnostic,
    lcp_array,
    overlapping_return_time,
    sample_overlapping_return,
    suffix_array,
    wyner_statistic,
    wyner_statistic_finite,
    wyner_value,
)
from retstat.core import Alphabet, SymbolSequence
from retstat.errors import CensoredData, InvalidN, InvalidParameter, Unresolved, ZeroVariance
from retstat.moments import EULER_GAMMA, ZETA2
from retstat.statistics import LN2, ProcessModel

ABC = Alphabet(3, ("a", "b", "c"))
ASYM = ProcessModel.from_probs([0.75, 0.25])


def _seq(text: str) -> SymbolSequence:
    return SymbolSequence.from_text(text, ABC)


# --- overlapping return time ---


@pytest.mark.parametrize(
    ("text", "n", "horizon", "expected"),
    [
        ("abab", 2, 10, 2),
        ("aaaa", 2, 10, 1),
        ("abcab", 2, 2, None),
        ("abcab", 2, 3, 3),
        ("abcc", 2, 10, None),
    ],
)
def test_overlapping_return_time_hand_traces(text, n, horizon, expected):
    """T_n is the least shift where the prefix reappears."""
    assert overlapping_return_time(_seq(text), n, horizon).time == expected


def test_overlapping_return_time_validation():
    """n must fit the sequence and the horizon must be positive."""
    with pytest.raises(InvalidN):
        overlapping_return_time(_seq("ab"), 3, 5)
    with pytest.raises(InvalidN):
        overlapping_return_time(_seq("ab"), 0, 5)
    with pytest.raises(InvalidParameter):
        overlapping_return_time(_seq("abab"), 2, 0)


def test_sample_overlapping_return_is_reproducible():
    """Sampling depends only on the seed and finds a true recurrence."""
    ret, prefix = sample_overlapping_return(ASYM, 12, seed=4)
    again, prefix_again = sample_overlapping_return(ASYM, 12, seed=4)
    assert ret == again
    assert prefix.tolist() == prefix_again.tolist()
    assert ret.time is not None and ret.time >= 1
    assert not ret.censored


# --- Wyner statistic ---


def test_wyner_value_closed_forms():
    """Plain and finite-n forms for a known return time."""
    h, v = ASYM.entropy_bits, 0.4710199
    assert wyner_value(256, 10, ASYM) == pytest.approx(
        (8 - 10 * h) / math.sqrt(10 * v), abs=1e-6
    )
    assert wyner_value(256, 10, ASYM, finite=True) == pytest.approx(
        (8 - 10 * h + EULER_GAMMA / LN2) / math.sqrt(10 * v + ZETA2 / LN2**2), abs=1e-6
    )
    with pytest.raises(InvalidParameter):
        wyner_value(0, 10, ASYM)


def test_wyner_statistic_on_sequence():
    """The statistic uses the return time found in the sequence."""
    seq = SymbolSequence.of([0, 1, 0, 0, 1, 0, 1], 2)
    assert wyner_statistic(seq, 2, ASYM) == pytest.approx(wyner_value(3, 2, ASYM))
    assert wyner_statistic_finite(seq, 2, ASYM) == pytest.approx(
        wyner_value(3, 2, ASYM, finite=True)
    )


def test_wyner_statistic_refusals():
    """Uniform sources have no normaliser; a non-recurring prefix is censored."""
    seq = SymbolSequence.of([0, 1, 1, 1], 2)
    with pytest.raises(ZeroVariance):
        wyner_statistic(seq, 2, ProcessModel.equidistributed(2))
    with pytest.raises(CensoredData):
        wyner_statistic(seq, 2, ASYM)


def test_kac_diagnostic_mean_is_one():
    """T_n P(prefix) averages to 1 over independent sequences."""
    diag = kac_diagnostic(ASYM, 8, 400, seed=1)
    assert diag.censored == 0
    assert abs(diag.mean - 1.0) <= 4 * diag.stderr
    with pytest.raises(InvalidParameter):
        kac_diagnostic(ASYM, 8, 1, seed=1)


# --- suffix structures ---


def test_suffix_array_and_lcp_match_brute_force():
    """Prefix doubling sorts suffixes; Kasai gives adjacent common prefixes."""
    rng = np.random.default_rng(31)
    symbols = rng.integers(0, 3, size=300)
    data = symbols.tolist()
    sa = suffix_array(symbols)
    assert sa.tolist() == sorted(range(len(data)), key=lambda i: data[i:])
    lcp = lcp_array(symbols, sa)
    for r in range(1, len(data)):
        a, b = data[sa[r - 1] :], data[sa[r] :]
        common = 0
        while common < min(len(a), len(b)) and a[common] == b[common]:
            common += 1
        assert lcp[r] == common


# --- Grassberger lengths ---


def _brute_lengths(data: list[int], n: int) -> list[int]:
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


def test_grassberger_hand_trace():
    """[a, a, b] with n = 2 gives R = 2 at both positions."""
    lengths = grassberger_lengths(_seq("aab"), 2)
    assert lengths[1] == 2
    assert lengths[2] == 2


def test_grassberger_matches_brute_force():
    """Suffix-array lengths equal the direct scan on random binary data."""
    rng = np.random.default_rng(32)
    data = rng.integers(0, 2, size=400).tolist()
    seq = SymbolSequence.of(data, 2)
    lengths = grassberger_lengths(seq, 32)
    assert lengths.lengths.tolist() == _brute_lengths(data, 32)
    expected = float(np.mean(math.log2(32) / np.array(_brute_lengths(data, 32))))
    assert grassberger_entropy(seq, 32) == pytest.approx(expected)


def test_grassberger_unresolved_and_invalid():
    """A constant sequence matches to the end; n must be in range."""
    with pytest.raises(Unresolved):
        grassberger_lengths(_seq("aaaaaaaaaa"), 5)
    with pytest.raises(InvalidN):
        grassberger_lengths(_seq("ab"), 1)
    with pytest.raises(InvalidN):
        grassberger_lengths(_seq("ab"), 3)


def test_grassberger_entropy_is_near_source_entropy():
    """On a long uniform binary sequence the estimate is near 1 bit."""
    rng = np.random.default_rng(33)
    seq = SymbolSequence.of(rng.integers(0, 2, size=40_000).tolist(), 2)
    assert grassberger_entropy(seq, 4096) == pytest.approx(1.0, abs=0.2)
