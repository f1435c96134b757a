"""
Return-time statistics.

All logarithms are natural internally; entropies enter and leave in bits.
The headline statistic is

    z = sum_i (ln S_i - ell H ln 2 + gamma) / sqrt(k pi^2 / 6)

and the entropy estimate is ``H_hat = sum_i (ln S_i + gamma) / (k ell ln 2)``.
"""

import functools
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from retstat.core import BlockSequence, ReturnTimeSet
from retstat.errors import CorrectionInvalid, InvalidParameter, ZeroVariance
from retstat.moments import (
    EULER_GAMMA,
    THIRD_MOMENT_BOUND,
    ZETA2,
    exact_log_moment,
    mu_asymptotic,
)

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
PROB_SUM_TOL = 1e-9
REGIME_THRESHOLD = 1.0
# Below this block probability the asymptotic log-moments are used.
EXACT_MOMENT_MIN_P = 2.0**-14


# =============================================================================
# Process model
# =============================================================================


@dataclass(frozen=True)
class ProcessModel:
    """IID source over ``alphabet_size`` symbols.

    ``probs`` of ``None`` means equidistributed. Stored probabilities always
    sum to 1 within 1e-12.
    """

    alphabet_size: int
    probs: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.alphabet_size < 2:  # noqa: PLR2004
            raise InvalidParameter(f"Alphabet size must be >= 2, got {self.alphabet_size}")
        if self.probs is None:
            return
        if len(self.probs) != self.alphabet_size:
            raise InvalidParameter(
                f"Got {len(self.probs)} probabilities for alphabet size {self.alphabet_size}"
            )
        if any(q < 0 for q in self.probs):
            raise InvalidParameter(f"Probabilities must be non-negative: {self.probs}")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:  # noqa: PLR2004
            raise InvalidParameter(
                f"Probabilities sum to {math.fsum(self.probs)!r}, not 1"
            )

    @classmethod
    def equidistributed(cls, alphabet_size: int) -> "ProcessModel":
        return cls(alphabet_size)

    @classmethod
    def from_probs(
        cls,
        probs: Sequence[float],
        renormalize: bool = False,
        tol: float = PROB_SUM_TOL,
    ) -> "ProcessModel":
        """
        Build a model from symbol probabilities.

        Args:
            probs: One probability per symbol.
            renormalize: Rescale probabilities whose sum is off by more than
                ``tol`` instead of rejecting them.
            tol: Allowed deviation of the sum from 1.

        Raises:
            InvalidParameter: If the probabilities do not sum to 1.
        """
        values = [float(q) for q in probs]
        total = math.fsum(values)
        if total <= 0:
            raise InvalidParameter(f"Probabilities must have positive mass: {values}")
        if abs(total - 1.0) > tol and not renormalize:
            raise InvalidParameter(
                f"Probabilities sum to {total:.12g}, not 1 "
                f"(tolerance {tol:g}); pass renormalize to rescale"
            )
        scaled = [q / total for q in values]
        scaled[-1] = 1.0 - math.fsum(scaled[:-1])
        return cls(len(values), tuple(scaled))

    @property
    def probabilities(self) -> np.ndarray:
        if self.probs is None:
            return np.full(self.alphabet_size, 1.0 / self.alphabet_size)
        return np.array(self.probs, dtype=np.float64)

    @property
    def is_equidistributed(self) -> bool:
        return self.probs is None or len(set(self.probs)) == 1

    @property
    def q_max(self) -> float:
        return float(self.probabilities.max())

    @property
    def entropy_bits(self) -> float:
        q = self.probabilities
        q = q[q > 0]
        return float(-np.sum(q * np.log2(q)))

    def typical_block_probability(self, ell: int) -> float:
        """``A^-ell`` for equidistributed sources, ``2^(-H ell)`` otherwise."""
        if self.is_equidistributed:
            return float(self.alphabet_size ** (-ell))
        return float(2.0 ** (-self.entropy_bits * ell))

    def block_probabilities(self, blocks: BlockSequence, count: int | None = None) -> np.ndarray:
        """Probability of each of the first ``count`` observed blocks."""
        if blocks.alphabet.size != self.alphabet_size:
            raise InvalidParameter(
                f"Blocks use alphabet size {blocks.alphabet.size}, model {self.alphabet_size}"
            )
        count = len(blocks) if count is None else count
        ell = blocks.block_length
        with np.errstate(divide="ignore"):
            log_q = np.log(self.probabilities)
        if self.is_equidistributed:
            return np.full(count, float(self.alphabet_size ** (-ell)))
        counts = np.zeros((count, self.alphabet_size), dtype=np.int64)
        if blocks.keys.dtype != object:
            rest = blocks.keys[:count].astype(np.int64)
            for _ in range(ell):
                rest, digit = np.divmod(rest, self.alphabet_size)
                np.add.at(counts, (np.arange(count), digit), 1)
        else:
            for i in range(count):
                for s in blocks.reconstruct(i + 1):
                    counts[i, s] += 1
        with np.errstate(invalid="ignore"):
            log_p = np.where(counts > 0, counts * log_q[None, :], 0.0).sum(axis=1)
        return np.exp(log_p)


# =============================================================================
# Statistics
# =============================================================================


def _check_ell(ell: int) -> None:
    if ell < 1:
        raise InvalidParameter(f"Block length must be >= 1, got {ell}")


def clt_statistic(S: ReturnTimeSet, ell: int, H_bits: float) -> float:
    """
    Normalised sum of log return times.

    Args:
        S: Return times; must be uncensored.
        ell: Block length.
        H_bits: Source entropy in bits per symbol.

    Raises:
        CensoredData: If any return time is censored.
    """
    _check_ell(ell)
    if H_bits < 0:
        raise InvalidParameter(f"Entropy must be non-negative, got {H_bits}")
    logs = np.log(S.require_complete())
    centred = logs - ell * H_bits * LN2 + EULER_GAMMA
    return float(np.sum(centred) / math.sqrt(S.k * ZETA2))


def entropy_estimate(S: ReturnTimeSet, ell: int) -> float:
    """Entropy estimate in bits per symbol from uncensored return times."""
    _check_ell(ell)
    logs = np.log(S.require_complete())
    return float(np.sum(logs + EULER_GAMMA) / (S.k * ell * LN2))


def heuristic_covariance(ell: int, model: ProcessModel | None) -> float:
    """
    Pairwise covariance of log return times used by the variance correction.

    ``(p ln p) / 4`` with ``p = A^-ell`` for equidistributed sources and
    ``-(2^(-H ell) H ell ln 2) / 4`` otherwise; zero without a model.
    """
    _check_ell(ell)
    if model is None:
        return 0.0
    if model.is_equidistributed:
        p = model.alphabet_size ** (-ell)
        return p * math.log(p) / 4
    h = model.entropy_bits
    return -(2.0 ** (-h * ell)) * h * ell * LN2 / 4


def variance_corrected_statistic(
    S: ReturnTimeSet,
    ell: int,
    H_bits: float,
    model: ProcessModel | None,
) -> float:
    """
    :func:`clt_statistic` with the pairwise covariance in the denominator.

    The denominator is ``sqrt(k pi^2/6 + k(k-1) C)`` with ``C`` from
    :func:`heuristic_covariance`.

    Raises:
        CorrectionInvalid: If the corrected variance is not positive.
    """
    z = clt_statistic(S, ell, H_bits)
    cov = heuristic_covariance(ell, model)
    k = S.k
    base = k * ZETA2
    corrected = base + k * (k - 1) * cov
    if corrected <= 0:
        raise CorrectionInvalid(
            f"Corrected variance {corrected:.4g} is not positive "
            f"(k={k}, ell={ell}, covariance={cov:.4g})"
        )
    return z * math.sqrt(base / corrected)


@functools.lru_cache(maxsize=4096)
def _conditional_log_moments(p: float) -> tuple[float, float]:
    if p >= EXACT_MOMENT_MIN_P:
        return exact_log_moment(p, 1, 1e-10), exact_log_moment(p, 2, 1e-10)
    return mu_asymptotic(p), ZETA2


def conditional_clt_statistic(
    S: ReturnTimeSet, blocks: BlockSequence, model: ProcessModel
) -> float:
    """
    CLT statistic centred on each block's own probability.

    Each ``ln S_i`` is centred at the exact mean of ``ln Geom(p(X_i))`` and
    the sum is scaled by the summed exact variances; block probabilities
    below 2^-14 use the asymptotic moments.
    """
    logs = np.log(S.require_complete())
    probs = model.block_probabilities(blocks, S.k)
    if np.any((probs <= 0) | (probs >= 1)):
        raise InvalidParameter("Block probabilities must lie strictly in (0, 1)")
    moments = np.array([_conditional_log_moments(float(p)) for p in probs])
    centred = logs - moments[:, 0]
    return float(np.sum(centred) / math.sqrt(np.sum(moments[:, 1])))


def information_variance(model: ProcessModel) -> float:
    """Variance of the per-symbol surprisal ``-log2 P(Z_1)``."""
    q = model.probabilities
    q = q[q > 0]
    surprisal = -np.log2(q)
    h = float(np.sum(q * surprisal))
    return float(np.sum(q * (surprisal - h) ** 2))


def predicted_variance_inflation(ell: int, model: ProcessModel) -> float:
    """Variance of :func:`clt_statistic` once block probabilities fluctuate.

    ``Var ln S_i = pi^2/6 + ell V (ln 2)^2`` to first order, so the statistic
    has variance ``1 + ell V (ln 2)^2 / (pi^2 / 6)``.
    """
    _check_ell(ell)
    return 1.0 + ell * information_variance(model) * LN2**2 / ZETA2


def wyner_normaliser(model: ProcessModel) -> float:
    """``V`` of the model, refusing equidistributed sources."""
    v = information_variance(model)
    if v <= 1e-15:  # noqa: PLR2004
        raise ZeroVariance("Information variance is zero for this source")
    return v


# =============================================================================
# Regime diagnostics
# =============================================================================


@dataclass
class RegimeDiagnostics:
    """Finite-sample values of the conditions behind the normal limit."""

    k: int
    ell: int
    strict: float  # k^(3/2) ell q_max^ell
    equidistributed: float  # k ell A^-ell
    typical: float  # k ell 2^(-H ell)
    lyapunov_bound: float  # K / ((pi^2/6)^(3/2) sqrt(k))
    threshold: float = REGIME_THRESHOLD
    warnings: list[str] = field(default_factory=list)

    @property
    def strict_ok(self) -> bool:
        return self.strict <= self.threshold

    @property
    def equidistributed_ok(self) -> bool:
        return self.equidistributed <= self.threshold

    @property
    def typical_ok(self) -> bool:
        return self.typical <= self.threshold

    def as_dict(self) -> dict[str, float | int | bool | list[str]]:
        return {
            "k": self.k,
            "ell": self.ell,
            "strict": self.strict,
            "strict_ok": self.strict_ok,
            "equidistributed": self.equidistributed,
            "equidistributed_ok": self.equidistributed_ok,
            "typical": self.typical,
            "typical_ok": self.typical_ok,
            "lyapunov_bound": self.lyapunov_bound,
            "threshold": self.threshold,
            "warnings": list(self.warnings),
        }


def regime_check(
    k: int, ell: int, model: ProcessModel, threshold: float = REGIME_THRESHOLD
) -> RegimeDiagnostics:
    """
    Evaluate the regime conditions for a (k, ell, model) configuration.

    Values above ``threshold`` produce advisory warnings; nothing is refused.
    """
    if k < 1:
        raise InvalidParameter(f"k must be >= 1, got {k}")
    _check_ell(ell)
    q_max = model.q_max
    if q_max >= 1.0:
        raise InvalidParameter("Regime conditions need q_max < 1")
    h = model.entropy_bits
    strict = math.exp(1.5 * math.log(k) + math.log(ell) + ell * math.log(q_max))
    equi = math.exp(math.log(k) + math.log(ell) - ell * math.log(model.alphabet_size))
    typical = math.exp(math.log(k) + math.log(ell) - h * ell * LN2)
    lyapunov = THIRD_MOMENT_BOUND / (ZETA2**1.5 * math.sqrt(k))
    diag = RegimeDiagnostics(k, ell, strict, equi, typical, lyapunov, threshold)
    for name, value in (
        ("k^1.5 ell q_max^ell", strict),
        ("k ell A^-ell", equi),
        ("k ell 2^(-H ell)", typical),
    ):
        if value > threshold:
            message = f"{name} = {value:.4g} exceeds {threshold:g}"
            diag.warnings.append(message)
            logger.warning("regime: %s (k=%d, ell=%d)", message, k, ell)
    return diag


# =============================================================================
# Report
# =============================================================================


@dataclass
class StatisticReport:
    """Statistics for one set of return times."""

    k: int
    ell: int
    H_bits: float
    z: float
    H_hat_bits: float
    z_corrected: float | None = None
    z_conditional: float | None = None
    regime: RegimeDiagnostics | None = None


def build_report(
    S: ReturnTimeSet,
    ell: int,
    model: ProcessModel,
    correction: bool = True,
    blocks: BlockSequence | None = None,
    regime: RegimeDiagnostics | None = None,
) -> StatisticReport:
    """All statistics for one set of return times under ``model``.

    The conditional statistic is included when ``blocks`` is given and the
    source is not equidistributed.
    """
    h = model.entropy_bits
    z = clt_statistic(S, ell, h)
    report = StatisticReport(
        k=S.k,
        ell=ell,
        H_bits=h,
        z=z,
        H_hat_bits=entropy_estimate(S, ell),
        regime=regime,
    )
    if correction:
        report.z_corrected = variance_corrected_statistic(S, ell, h, model)
    if blocks is not None and not model.is_equidistributed:
        report.z_conditional = conditional_clt_statistic(S, blocks, model)
    return report
