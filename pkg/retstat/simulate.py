"""
Monte Carlo harness for the return-time statistics.

Trials draw IID data from a :class:`~retstat.statistics.ProcessModel`,
compute the first ``k`` return times and record the statistics. Each trial
owns a seed derived from ``(master_seed, trial)``; its data are produced in
chunks seeded from ``(trial_seed, chunk)`` so that extending a trial's data
never changes what was already generated.
"""

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from retstat.core import Alphabet, BlockSequence, SymbolSequence, blockify, return_times
from retstat.errors import CensoringBudgetExceeded, CorrectionInvalid, InvalidParameter
from retstat.normal import kolmogorov_sf, norm_cdf, norm_ppf
from retstat.statistics import ProcessModel, build_report, regime_check

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
# Fraction of trials allowed to end censored before a run is rejected.
CENSORING_BUDGET = 0.005
DEFAULT_MAX_DOUBLINGS = 10
MIN_KS_SAMPLES = 20
MIN_QQ_SAMPLES = 3


def mix_seed(seed: int, index: int) -> int:
    """
    Stable 64-bit mix of a seed and an index (splitmix64 finaliser).

    ``z = seed * 0x9E3779B97F4A7C15 + index + 0x632BE59BD9B4E019`` (mod 2^64)
    followed by the splitmix64 output function.
    """
    z = (seed * 0x9E3779B97F4A7C15 + index + 0x632BE59BD9B4E019) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def gen_iid(model: ProcessModel, n: int, seed: int) -> SymbolSequence:
    """``n`` IID symbols from ``model``, deterministic per ``seed``."""
    if n < 1:
        raise InvalidParameter(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    size = model.alphabet_size
    if model.is_equidistributed:
        symbols = rng.integers(0, size, size=n, dtype=np.int64)
    else:
        cdf = np.cumsum(model.probabilities)
        symbols = np.searchsorted(cdf, rng.random(n), side="right")
        np.minimum(symbols, size - 1, out=symbols)
    return SymbolSequence(Alphabet(size), symbols)


# =============================================================================
# Trial configuration and sizing
# =============================================================================


@dataclass(frozen=True)
class TrialConfig:
    """One Monte Carlo experiment.

    ``length`` of ``None`` selects the adaptive horizon: each trial starts at
    :func:`initial_length` symbols and doubles (up to ``max_doublings``
    times) until all ``k`` return times resolve. An integer fixes the
    symbol count per trial.
    """

    model: ProcessModel
    k: int
    ell: int
    trials: int
    master_seed: int
    length: int | None = None
    max_doublings: int = DEFAULT_MAX_DOUBLINGS
    correction: bool = True
    workers: int = 1

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise InvalidParameter(f"trials must be >= 1, got {self.trials}")
        if self.k < 1 or self.ell < 1:
            raise InvalidParameter(f"k and ell must be >= 1, got k={self.k}, ell={self.ell}")
        if self.length is not None and self.length < self.k * self.ell:
            raise InvalidParameter(
                f"length {self.length} is shorter than k*ell = {self.k * self.ell}"
            )
        if self.max_doublings < 0:
            raise InvalidParameter("max_doublings must be >= 0")

    def trial_seed(self, trial: int) -> int:
        return mix_seed(self.master_seed, trial)


def initial_length(model: ProcessModel, k: int, ell: int) -> int:
    """
    Starting symbol count for one trial.

    ``k ell + ell ceil(C / p)`` with ``p`` the typical block probability and
    ``C = ln(1000 k)``, which keeps the per-index censoring probability
    below ``1e-3 / k`` for blocks of typical probability.
    """
    p = model.typical_block_probability(ell)
    c = math.log(k * 1e3)
    return k * ell + ell * math.ceil(c / p)


def _trial_blocks(
    model: ProcessModel, ell: int, seed: int, chunk: int, symbols: int
) -> BlockSequence:
    data = gen_iid(model, symbols, mix_seed(seed, chunk))
    return blockify(data, ell)


# =============================================================================
# Trials
# =============================================================================


@dataclass
class TrialResult:
    """Outcome of one trial; ``z`` is None when return times stayed censored."""

    trial: int
    seed: int
    z: float | None
    h_hat: float | None
    z_corrected: float | None = None
    z_conditional: float | None = None
    censored: int = 0
    blocks_used: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.z is not None


def run_trial(config: TrialConfig, trial: int) -> TrialResult:
    """Run trial ``trial`` of ``config``."""
    seed = config.trial_seed(trial)
    k, ell, model = config.k, config.ell, config.model
    start = config.length if config.length is not None else initial_length(model, k, ell)
    start -= start % ell
    blocks = _trial_blocks(model, ell, seed, 0, start)
    times = return_times(blocks, k, len(blocks))
    if config.length is None:
        for chunk in range(1, config.max_doublings + 1):
            if times.is_complete:
                break
            logger.debug(
                "trial %d: %d censored at %d blocks, extending",
                trial,
                len(times.censored_indices),
                len(blocks),
            )
            blocks = blocks.concat(
                _trial_blocks(model, ell, seed, chunk, len(blocks) * ell)
            )
            times = return_times(blocks, k, len(blocks))

    if not times.is_complete:
        censored = len(times.censored_indices)
        logger.warning("trial %d: %d return times censored", trial, censored)
        return TrialResult(
            trial,
            seed,
            None,
            None,
            censored=censored,
            blocks_used=len(blocks),
            error=f"{censored} censored return times",
        )

    error = None
    try:
        report = build_report(times, ell, model, config.correction, blocks)
    except CorrectionInvalid as exc:
        error = str(exc)
        report = build_report(times, ell, model, False, blocks)
    return TrialResult(
        trial,
        seed,
        report.z,
        report.H_hat_bits,
        report.z_corrected,
        report.z_conditional,
        blocks_used=len(blocks),
        error=error,
    )


def _run_indexed(args: tuple[TrialConfig, int]) -> TrialResult:
    return run_trial(*args)


def run_trials(config: TrialConfig) -> list[TrialResult]:
    """
    Run all trials of ``config`` in trial order.

    Trials run in a process pool when ``config.workers > 1``; results are
    identical to sequential execution.

    Raises:
        CensoringBudgetExceeded: If more than 0.5% of trials censor.
    """
    jobs = [(config, t) for t in range(config.trials)]
    if config.workers > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_indexed, jobs, chunksize=8))
    else:
        results = [_run_indexed(job) for job in jobs]
    failed = [r.trial for r in results if not r.ok]
    if len(failed) > CENSORING_BUDGET * config.trials:
        raise CensoringBudgetExceeded(failed, config.trials)
    if failed:
        logger.warning("%d of %d trials censored", len(failed), config.trials)
    return results


# =============================================================================
# Normality diagnostics
# =============================================================================


@dataclass
class QQData:
    """QQ pairs against N(0, 1) plus the line through the quartile points."""

    theoretical: np.ndarray
    sample: np.ndarray
    slope: float
    intercept: float

    def max_central_deviation(self, central: float = 0.9) -> float:
        """Largest ``|sample - theoretical|`` over the central fraction of points."""
        n = len(self.sample)
        cut = int(math.floor(n * (1 - central) / 2))
        dev = np.abs(self.sample - self.theoretical)[cut : n - cut]
        return float(dev.max()) if dev.size else 0.0


def qq_points(samples: Sequence[float]) -> QQData:
    """
    Normal QQ data: ``(Phi^-1((i - 0.5) / n), x_(i))`` for ``i = 1..n``.

    The reference line joins the first and third sample quartiles at the
    matching normal quantiles.
    """
    values = np.sort(np.asarray(samples, dtype=np.float64))
    n = values.size
    if n < MIN_QQ_SAMPLES:
        raise InvalidParameter(f"QQ data needs >= {MIN_QQ_SAMPLES} samples, got {n}")
    theoretical = np.array([norm_ppf((i - 0.5) / n) for i in range(1, n + 1)])
    q1, q3 = np.quantile(values, [0.25, 0.75])
    z1, z3 = norm_ppf(0.25), norm_ppf(0.75)
    slope = (q3 - q1) / (z3 - z1)
    intercept = q1 - slope * z1
    return QQData(theoretical, values, float(slope), float(intercept))


@dataclass
class KSResult:
    D: float
    p_value: float


def ks_normal(samples: Sequence[float]) -> KSResult:
    """
    Kolmogorov-Smirnov distance to N(0, 1) with its asymptotic p-value.

    The p-value uses the Kolmogorov series at ``(sqrt(n) + 0.12 + 0.11 /
    sqrt(n)) D``.
    """
    values = np.sort(np.asarray(samples, dtype=np.float64))
    n = values.size
    if n < MIN_KS_SAMPLES:
        raise InvalidParameter(f"KS needs >= {MIN_KS_SAMPLES} samples, got {n}")
    cdf = np.array([norm_cdf(float(v)) for v in values])
    ranks = np.arange(1, n + 1)
    d_plus = float(np.max(ranks / n - cdf))
    d_minus = float(np.max(cdf - (ranks - 1) / n))
    d = max(d_plus, d_minus)
    en = math.sqrt(n)
    return KSResult(d, kolmogorov_sf((en + 0.12 + 0.11 / en) * d))


# =============================================================================
# Summary
# =============================================================================


@dataclass
class SampleSummary:
    """Location, spread and normality of one statistic across trials."""

    n: int
    mean: float
    variance: float
    ks_D: float
    ks_p: float
    qq_max_central_deviation: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "SampleSummary":
        arr = np.asarray(values, dtype=np.float64)
        n = arr.size
        variance = float(arr.var(ddof=1)) if n > 1 else math.nan
        if n >= MIN_KS_SAMPLES:
            ks = ks_normal(arr)
            ks_d, ks_p = ks.D, ks.p_value
        else:
            ks_d = ks_p = math.nan
        qq_dev = qq_points(arr).max_central_deviation() if n >= MIN_QQ_SAMPLES else math.nan
        return cls(n, float(arr.mean()), variance, ks_d, ks_p, qq_dev)


@dataclass
class TrialSummary:
    """Aggregate of a run; ``corrected`` and ``conditional`` are optional."""

    trials: int
    failed: list[int]
    z: SampleSummary
    h_hat_mean: float
    corrected: SampleSummary | None = None
    conditional: SampleSummary | None = None
    regime: dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


def summarize(results: Sequence[TrialResult], config: TrialConfig | None = None) -> TrialSummary:
    """Summarise trial results; the regime record needs ``config``."""
    good = [r for r in results if r.ok]
    if not good:
        raise InvalidParameter("No uncensored trials to summarise")
    z = SampleSummary.of([r.z for r in good if r.z is not None])
    corrected_vals = [r.z_corrected for r in good if r.z_corrected is not None]
    conditional_vals = [r.z_conditional for r in good if r.z_conditional is not None]
    regime: dict[str, Any] = {}
    if config is not None and config.model.q_max < 1:
        regime = regime_check(config.k, config.ell, config.model).as_dict()
    return TrialSummary(
        trials=len(results),
        failed=[r.trial for r in results if not r.ok],
        z=z,
        h_hat_mean=float(np.mean([r.h_hat for r in good if r.h_hat is not None])),
        corrected=SampleSummary.of(corrected_vals) if corrected_vals else None,
        conditional=SampleSummary.of(conditional_vals) if conditional_vals else None,
        regime=regime,
    )
