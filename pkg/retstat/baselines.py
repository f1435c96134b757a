"""
Comparator estimators built on overlapping matches.

* The overlapping return time ``T_n`` of the length-``n`` prefix and the
  Wyner-type CLT statistic built on it.
* Grassberger's prefix-uniqueness lengths ``R_{i,n}`` and the entropy
  estimate ``(1/n) sum log2(n) / R_{i,n}``.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from retstat.core import SymbolSequence
from retstat.errors import CensoredData, InvalidN, InvalidParameter, Unresolved
from retstat.moments import EULER_GAMMA, ZETA2
from retstat.simulate import gen_iid, mix_seed
from retstat.statistics import LN2, ProcessModel, wyner_normaliser

logger = logging.getLogger(__name__)

DEFAULT_MAX_LENGTH = 1 << 24
FIRST_CHUNK = 1024


# =============================================================================
# Overlapping return time
# =============================================================================


@dataclass(frozen=True)
class OverlapReturn:
    """``T_n`` of a prefix; ``time`` is None when no recurrence was found."""

    n: int
    time: int | None

    @property
    def censored(self) -> bool:
        return self.time is None


def _find(symbols: np.ndarray, pattern: np.ndarray, start: int, stop: int) -> int:
    """Least position ``t`` in ``[start, stop]`` where ``pattern`` occurs, or -1."""
    n = pattern.size
    end = min(symbols.size, stop + n)
    if end - start < n:
        return -1
    if symbols.dtype == np.uint8:
        hit = symbols[:end].tobytes().find(pattern.tobytes(), start)
        return hit
    windows = np.lib.stride_tricks.sliding_window_view(symbols[start:end], n)
    hits = np.flatnonzero((windows == pattern).all(axis=1))
    return int(hits[0]) + start if hits.size else -1


def overlapping_return_time(seq: SymbolSequence, n: int, horizon: int) -> OverlapReturn:
    """
    Least ``t`` in ``1..horizon`` with ``Z_{t+1}^{t+n} = Z_1^n``.

    Candidates are limited to shifts whose window lies inside ``seq``; a
    prefix that does not recur among them is censored.

    Raises:
        InvalidN: If ``n < 1`` or ``seq`` is shorter than ``n``.
    """
    if n < 1 or n > len(seq):
        raise InvalidN(f"Prefix length must lie in [1, {len(seq)}], got {n}")
    if horizon < 1:
        raise InvalidParameter(f"Horizon must be >= 1, got {horizon}")
    symbols = seq.symbols
    hit = _find(symbols, symbols[:n], 1, horizon)
    return OverlapReturn(n, hit if hit >= 1 else None)


def sample_overlapping_return(
    model: ProcessModel,
    n: int,
    seed: int,
    max_length: int = DEFAULT_MAX_LENGTH,
) -> tuple[OverlapReturn, np.ndarray]:
    """
    Draw IID data until the length-``n`` prefix recurs.

    Data are generated in chunks seeded from ``(seed, chunk)``; after the
    first chunk the buffer grows to a size matching the prefix probability
    and then doubles, stopping at ``max_length`` symbols.

    Returns:
        The return time and the prefix symbols.
    """
    if n < 1:
        raise InvalidN(f"Prefix length must be >= 1, got {n}")
    data = gen_iid(model, max(FIRST_CHUNK, 4 * n), mix_seed(seed, 0)).symbols
    prefix = data[:n].copy()
    hit = _find(data, prefix, 1, data.size)
    chunk = 1
    target = 0
    if hit < 0:
        p = float(np.prod(model.probabilities[prefix.astype(np.int64)]))
        if p <= 0:
            raise InvalidParameter("Prefix has zero probability under the model")
        target = n + math.ceil(4.0 / p)
    while hit < 0 and data.size < max_length:
        size = min(max_length, max(target, 2 * data.size)) - data.size
        scanned = data.size
        extra = gen_iid(model, size, mix_seed(seed, chunk)).symbols
        chunk += 1
        data = np.concatenate([data, extra])
        hit = _find(data, prefix, max(1, scanned - n + 1), data.size)
    if hit < 0:
        logger.debug("prefix of length %d did not recur in %d symbols", n, data.size)
    return OverlapReturn(n, hit if hit >= 1 else None), prefix


def _wyner(time: int, n: int, model: ProcessModel, finite: bool) -> float:
    v = wyner_normaliser(model)
    h = model.entropy_bits
    if time < 1:
        raise InvalidParameter(f"Return time must be >= 1, got {time}")
    if finite:
        return (math.log2(time) - n * h + EULER_GAMMA / LN2) / math.sqrt(
            n * v + ZETA2 / LN2**2
        )
    return (math.log2(time) - n * h) / math.sqrt(n * v)


def wyner_value(time: int, n: int, model: ProcessModel, finite: bool = False) -> float:
    """Wyner statistic for a known ``T_n``; ``finite`` selects the finite-n form."""
    return _wyner(time, n, model, finite)


def _require_time(seq: SymbolSequence, n: int) -> int:
    ret = overlapping_return_time(seq, n, max(1, len(seq) - n))
    if ret.time is None:
        raise CensoredData([1])
    return ret.time


def wyner_statistic(seq: SymbolSequence, n: int, model: ProcessModel) -> float:
    """
    ``(log2 T_n - n H) / sqrt(n V)``.

    Raises:
        ZeroVariance: For sources with ``V = 0`` (equidistributed).
        CensoredData: If the prefix does not recur in ``seq``.
    """
    wyner_normaliser(model)
    return _wyner(_require_time(seq, n), n, model, finite=False)


def wyner_statistic_finite(seq: SymbolSequence, n: int, model: ProcessModel) -> float:
    """
    Finite-n form ``(log2 T_n - n H + gamma/ln 2) / sqrt(n V + pi^2/(6 ln^2 2))``.

    Given the prefix, ``T_n P(Z_1^n)`` is close to a unit exponential whose
    log has mean ``-gamma`` and variance ``pi^2 / 6``; the plain statistic
    drops both terms.
    """
    wyner_normaliser(model)
    return _wyner(_require_time(seq, n), n, model, finite=True)


@dataclass
class KacDiagnostic:
    """Monte Carlo mean of ``T_n P(Z_1^n)`` (1 in expectation)."""

    n: int
    sequences: int
    mean: float
    stderr: float
    censored: int


def kac_diagnostic(
    model: ProcessModel,
    n: int,
    sequences: int,
    seed: int,
    max_length: int = DEFAULT_MAX_LENGTH,
) -> KacDiagnostic:
    """Average ``T_n P(Z_1^n)`` over independent sequences.

    Censored sequences are counted and left out of the mean.
    """
    if sequences < 2:  # noqa: PLR2004
        raise InvalidParameter(f"Need at least 2 sequences, got {sequences}")
    log_q = np.log(model.probabilities)
    values: list[float] = []
    censored = 0
    for s in range(sequences):
        ret, prefix = sample_overlapping_return(model, n, mix_seed(seed, s), max_length)
        if ret.time is None:
            censored += 1
            continue
        values.append(ret.time * math.exp(float(log_q[prefix.astype(np.int64)].sum())))
    if censored:
        logger.warning("%d of %d sequences censored", censored, sequences)
    arr = np.asarray(values)
    stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else math.nan
    mean = float(arr.mean()) if arr.size else math.nan
    return KacDiagnostic(n, sequences, mean, stderr, censored)


# =============================================================================
# Grassberger prefix lengths
# =============================================================================


@dataclass(frozen=True)
class PrefixLengths:
    n: int
    lengths: np.ndarray

    def __getitem__(self, i: int) -> int:
        """``R_{i,n}`` for 1-based ``i``."""
        return int(self.lengths[i - 1])


def suffix_array(symbols: np.ndarray) -> np.ndarray:
    """Suffix array by prefix doubling on rank pairs."""
    size = symbols.size
    rank = np.unique(symbols, return_inverse=True)[1].astype(np.int64)
    if size < 2:  # noqa: PLR2004
        return np.arange(size, dtype=np.int64)
    h = 1
    while True:
        second = np.full(size, -1, dtype=np.int64)
        second[: size - h] = rank[h:]
        order = np.lexsort((second, rank))
        changed = (np.diff(rank[order]) != 0) | (np.diff(second[order]) != 0)
        new_rank = np.empty(size, dtype=np.int64)
        new_rank[order] = np.concatenate([[0], np.cumsum(changed)])
        rank = new_rank
        if rank[order[-1]] == size - 1 or h >= size:
            return order
        h *= 2


def lcp_array(symbols: np.ndarray, sa: np.ndarray) -> np.ndarray:
    """``lcp[r]`` = common prefix of suffixes ``sa[r-1]`` and ``sa[r]`` (Kasai)."""
    size = symbols.size
    rank = np.empty(size, dtype=np.int64)
    rank[sa] = np.arange(size)
    data = symbols.tolist()
    order = sa.tolist()
    lcp = [0] * size
    h = 0
    for i in range(size):
        r = int(rank[i])
        if r == 0:
            h = 0
            continue
        j = order[r - 1]
        while i + h < size and j + h < size and data[i + h] == data[j + h]:
            h += 1
        lcp[r] = h
        if h:
            h -= 1
    return np.asarray(lcp, dtype=np.int64)


def grassberger_lengths(seq: SymbolSequence, n: int) -> PrefixLengths:
    """
    ``R_{i,n}`` for ``i = 1..n``: one more than the longest match between
    the string started at ``i`` and a string started at any other ``j <= n``.

    Strings may run past position ``n`` into the rest of ``seq``.

    Raises:
        InvalidN: If ``n < 2`` or ``n > len(seq)``.
        Unresolved: If some ``R_{i,n}`` needs symbols past the end of ``seq``.
    """
    total = len(seq)
    if n < 2 or n > total:  # noqa: PLR2004
        raise InvalidN(f"n must lie in [2, {total}], got {n}")
    symbols = np.asarray(seq.symbols)
    sa = suffix_array(symbols)
    lcp = lcp_array(symbols, sa)
    keep = np.flatnonzero(sa < n)
    adjacent = np.minimum.reduceat(lcp[: keep[-1] + 1], keep[:-1] + 1)
    best = np.zeros(keep.size, dtype=np.int64)
    best[:-1] = adjacent
    best[1:] = np.maximum(best[1:], adjacent)
    lengths = np.empty(n, dtype=np.int64)
    lengths[sa[keep]] = best + 1
    # Every string started at j <= n must have R symbols for the comparison.
    shortest = total - n + 1
    over = np.flatnonzero(lengths > shortest)
    if over.size:
        raise Unresolved(int(over[0]) + 1)
    return PrefixLengths(n, lengths)


def grassberger_entropy(seq: SymbolSequence, n: int) -> float:
    """``(1/n) sum_i log2(n) / R_{i,n}`` in bits per symbol."""
    prefix = grassberger_lengths(seq, n)
    return float(np.mean(math.log2(n) / prefix.lengths))

