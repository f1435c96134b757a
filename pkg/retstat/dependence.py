"""
Dependence structure of the modified return times ``R_1..R_k``.

Under an equidistributed source every target has probability ``p`` and the
post-``k`` stream is independent of the targets, so the joint law of the
``R_j`` only depends on ``p`` and the number of targets. This module holds
the oracles built on that law: the conditional tail sandwich, the pairwise
conditional pmf and exact log-covariance, the ordered-spacings sampler, and
empirical negative-association checks.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from retstat.errors import InvalidArgs, InvalidMass, InvalidParameter
from retstat.moments import EULER_GAMMA, exact_log_moment, log_tail_bound

logger = logging.getLogger(__name__)

# Enumeration is refused beyond this many post-k strings.
MAX_ENUMERATION = 1 << 22


# =============================================================================
# Conditional tail sandwich
# =============================================================================


@dataclass(frozen=True)
class SandwichBound:
    """Bounds on ``P(R_m >= s | R_1..R_{m-1})`` for target probabilities ``p``."""

    m: int
    s: int
    p: tuple[float, ...]
    S_star: float
    lower: float
    upper: float


def conditional_sandwich(p: Sequence[float], s: int, m: int) -> SandwichBound:
    """
    Lower and upper bound on the conditional tail of ``R_m``.

    ``lower = (1 - p_m / (1 - S*))^(s-1)`` and ``upper = (1 - p_m)^(s-m)``
    where ``S* = p_1 + ... + p_{m-1}``.

    Args:
        p: Target probabilities ``p_1..p_m`` (extra entries are ignored).
        s: Tail threshold, at least ``m``.
        m: Index of the conditioned target, at least 2.

    Raises:
        InvalidMass: If ``S* >= 1``.
    """
    if m < 2:  # noqa: PLR2004
        raise InvalidParameter(f"m must be >= 2, got {m}")
    if s < m:
        raise InvalidParameter(f"s must be >= m={m}, got {s}")
    if len(p) < m:
        raise InvalidParameter(f"Need {m} probabilities, got {len(p)}")
    probs = tuple(float(v) for v in p[:m])
    if any(not 0.0 < v < 1.0 for v in probs):
        raise InvalidParameter(f"Target probabilities must lie in (0, 1): {probs}")
    s_star = math.fsum(probs[:-1])
    if s_star >= 1.0:
        raise InvalidMass(f"S* = {s_star} leaves no mass for target {m}")
    p_m = probs[-1]
    lower = max(0.0, 1.0 - p_m / (1.0 - s_star)) ** (s - 1)
    upper = (1.0 - p_m) ** (s - m)
    return SandwichBound(m, s, probs, s_star, lower, upper)


def _all_strings(values: int, length: int) -> np.ndarray:
    count = values**length
    if count > MAX_ENUMERATION:
        raise InvalidParameter(
            f"{values}^{length} = {count} strings exceeds enumeration limit"
        )
    codes = np.arange(count, dtype=np.int64)
    out = np.empty((count, length), dtype=np.int8 if values < 128 else np.int64)  # noqa: PLR2004
    for pos in range(length - 1, -1, -1):
        codes, out[:, pos] = np.divmod(codes, values)
    return out


def _first_hits(strings: np.ndarray, targets: int) -> np.ndarray:
    """1-based first position of targets 0..targets-1 in each row; 0 if absent."""
    hits = np.zeros((strings.shape[0], targets), dtype=np.int64)
    for j in range(targets):
        match = strings == j
        found = match.any(axis=1)
        hits[found, j] = match[found].argmax(axis=1) + 1
    return hits


def enumerate_modified_returns(values: int, m: int, length: int) -> np.ndarray:
    """
    Joint outcomes of ``R_1..R_m`` over every post-``k`` string.

    Each of the ``values**length`` equally likely strings of block values
    gives one row; targets are the distinct values ``0..m-1`` and 0 marks a
    target absent from the string.
    """
    if not 1 <= m <= values:
        raise InvalidParameter(f"Need 1 <= m <= {values} distinct targets, got {m}")
    return _first_hits(_all_strings(values, length), m)


@dataclass
class SandwichCheck:
    """Outcome of checking the sandwich on every feasible conditioning vector."""

    values: int
    m: int
    checked: int
    violations: int
    worst_margin: float


def sandwich_violations(
    values: int, m: int, s_max: int, length: int | None = None
) -> SandwichCheck:
    """
    Check the sandwich exactly for an equidistributed source.

    Every string of ``length`` block values is enumerated; for each feasible
    ``(R_1..R_{m-1})`` and each ``s`` in ``m..s_max`` the exact conditional
    probability is compared against :func:`conditional_sandwich`.

    Args:
        values: Number of block values ``A**ell``; each has probability
            ``1/values``.
        m: Conditioned target index, ``2 <= m <= values``.
        s_max: Largest tail threshold.
        length: Post-``k`` string length; defaults to ``s_max``.
    """
    length = s_max if length is None else length
    if s_max - 1 > length:
        raise InvalidParameter(f"length {length} cannot resolve s up to {s_max}")
    strings = _all_strings(values, length)
    hits = _first_hits(strings, m)
    head = hits[:, : m - 1]
    feasible = np.all(head > 0, axis=1)
    groups, inverse = np.unique(head[feasible], axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    sizes = np.bincount(inverse, minlength=len(groups))
    probs = [1.0 / values] * m

    checked = 0
    violations = 0
    worst = math.inf
    for s in range(m, s_max + 1):
        bound = conditional_sandwich(probs, s, m)
        tail = ~np.any(strings[feasible, : s - 1] == m - 1, axis=1)
        cond = np.bincount(inverse, weights=tail, minlength=len(groups)) / sizes
        margin = np.minimum(cond - bound.lower, bound.upper - cond)
        checked += len(groups)
        violations += int(np.sum(margin < -1e-12))  # noqa: PLR2004
        worst = min(worst, float(margin.min()))
    logger.debug(
        "sandwich: values=%d m=%d checked=%d violations=%d", values, m, checked, violations
    )
    return SandwichCheck(values, m, checked, violations, worst)


# =============================================================================
# Pairwise law
# =============================================================================


def _check_pair_p(p: float) -> float:
    p = float(p)
    if not 0.0 < p < 0.5:  # noqa: PLR2004
        raise InvalidParameter(f"p must lie in (0, 1/2), got {p}")
    return p


def pair_conditional_pmf(p: float, x: int, y: int) -> float:
    """
    ``P(R_j = y | R_i = x)`` for two distinct targets of probability ``p``.

    Raises:
        InvalidArgs: If ``y == x``; distinct targets never share a time.
    """
    p = _check_pair_p(p)
    if x < 1 or y < 1:
        raise InvalidParameter(f"x and y must be >= 1, got x={x}, y={y}")
    if y == x:
        raise InvalidArgs(f"R_i and R_j cannot both equal {x}")
    rho = (1 - 2 * p) / (1 - p)
    if y < x:
        return p / (1 - p) * rho ** (y - 1)
    return rho ** (x - 1) * (1 - p) ** (y - x - 1) * p


def pair_joint_pmf(p: float, x: int, y: int) -> float:
    """``P(R_i = x, R_j = y)``; zero on the diagonal."""
    p = _check_pair_p(p)
    if x == y:
        return 0.0
    return p * (1 - p) ** (x - 1) * pair_conditional_pmf(p, x, y)


@dataclass
class PairLaw:
    """Conditional pmf of ``R_j`` given ``R_i = x`` on ``y = 1..len(pmf)``."""

    p: float
    x: int
    ys: np.ndarray
    pmf: np.ndarray
    truncation_bound: float

    @property
    def total(self) -> float:
        return float(np.sum(self.pmf))


def pair_conditional_law(p: float, x: int, tol: float = 1e-12) -> PairLaw:
    """Tabulate :func:`pair_conditional_pmf` for fixed ``x`` up to mass ``tol``.

    Mass beyond ``y = N >= x`` is ``rho^(x-1) (1-p)^(N-x)`` exactly.
    """
    p = _check_pair_p(p)
    if x < 1:
        raise InvalidParameter(f"x must be >= 1, got {x}")
    rho = (1 - 2 * p) / (1 - p)
    log_q = math.log1p(-p)
    lead = (x - 1) * math.log(rho)
    extra = max(0, math.ceil((math.log(tol) - lead) / log_q)) if tol < 1 else 0
    n = x + extra
    ys = np.arange(1, n + 1)
    below = p / (1 - p) * np.exp((ys - 1) * math.log(rho))
    above = np.exp(lead + (ys - x - 1) * log_q) * p
    pmf = np.where(ys < x, below, np.where(ys > x, above, 0.0))
    bound = math.exp(lead + (n - x) * log_q)
    return PairLaw(p, x, ys, pmf, bound)


# =============================================================================
# Exact pair covariance of log return times
# =============================================================================


@dataclass
class PairCovariance:
    """Exact ``Cov(ln R_i, ln R_j)`` with the envelopes it is compared to."""

    p: float
    covariance: float
    truncation_bound: float
    terms: int

    @property
    def envelopes(self) -> dict[str, float]:
        return covariance_envelopes(self.p)


def _pair_product_moment(p: float, n: int) -> float:
    """``E[ln R_i ln R_j]`` summed over ``x, y <= n``."""
    q = 1 - p
    log_q = math.log(q)
    rho = (1 - 2 * p) / q
    log_rho = math.log(rho)
    idx = np.arange(1, n + 1, dtype=np.float64)
    ln_idx = np.log(idx)

    # Below the conditioning value: sum_{y<x} (p/q) rho^(y-1) ln y.
    below = np.cumsum(p / q * np.exp((idx - 1) * log_rho) * ln_idx)
    below = np.concatenate([[0.0], below[:-1]])
    # Above: rho^(x-1) sum_{x<y<=n} q^(y-x-1) p ln y, via suffix sums of q^(y-1) ln y.
    weighted = np.exp((idx - 1) * log_q) * ln_idx
    suffix = np.cumsum(weighted[::-1])[::-1]
    suffix = np.concatenate([suffix[1:], [0.0]])
    above = np.exp((idx - 1) * log_rho - idx * log_q) * p * suffix

    marginal = p * np.exp((idx - 1) * log_q)
    return float(np.sum(marginal * ln_idx * (below + above)))


def exact_pair_log_covariance(p: float, tol: float = 1e-10) -> PairCovariance:
    """
    Exact ``Cov(ln R_i, ln R_j)`` for two distinct targets of probability ``p``.

    The joint law ``P(R_i = x) P(R_j = y | R_i = x)`` is summed over
    ``x, y <= N`` with ``N`` grown until the truncation bound is below ``tol``.
    """
    p = float(p)
    if not 0.0 < p <= 0.25:  # noqa: PLR2004
        raise InvalidParameter(f"p must lie in (0, 1/4], got {p}")
    if not tol > 0:
        raise InvalidParameter(f"Tolerance must be positive, got {tol}")
    q = 1 - p
    n = max(64, math.ceil(32 / p))
    while True:
        t1 = log_tail_bound(p, 0.0, 1, n)
        t2 = log_tail_bound(p, 0.0, 2, n)
        bound = t2 + (abs(math.log(p)) + 1) * t1 + 2 * math.log(n) / q * t1
        if bound <= tol / 2:
            break
        n *= 2
    mu = exact_log_moment(p, 1, tol / (8 * (abs(math.log(p)) + 2)))
    covariance = _pair_product_moment(p, n) - mu * mu
    logger.debug("pair covariance: p=%g n=%d cov=%.6g", p, n, covariance)
    return PairCovariance(p, covariance, bound + tol / 2, n)


def covariance_envelopes(p: float) -> dict[str, float]:
    """Reference levels for the pairwise log-covariance at probability ``p``."""
    ln_p = math.log(p)
    return {
        "p_ln_p": p * ln_p,
        "quarter_p_ln_p": p * ln_p / 4,
        "minus_p_ln_p": -p * ln_p,
        "half_log_plus_gamma": p * (-ln_p / 2 + EULER_GAMMA),
    }


# =============================================================================
# Samplers
# =============================================================================


def ordered_spacings_sample(
    k: int, p: float, seed: int, size: int | None = None
) -> np.ndarray:
    """
    Sample ``R_1..R_k`` through ordered spacings.

    ``W_i ~ Geom((k+1-i) p)`` are independent, their partial sums give the
    ordered return times, and a uniform permutation assigns them to indices.

    Returns:
        Shape ``(k,)`` when ``size`` is None, else ``(size, k)``.
    """
    if k < 1:
        raise InvalidParameter(f"k must be >= 1, got {k}")
    if not 0.0 < p or k * p >= 1.0:
        raise InvalidParameter(f"Need 0 < k p < 1, got k={k}, p={p}")
    rng = np.random.default_rng(seed)
    rows = 1 if size is None else size
    rates = (k - np.arange(k)) * p
    spacings = rng.geometric(rates[None, :], size=(rows, k))
    ordered = np.cumsum(spacings, axis=1)
    perms = np.argsort(rng.random((rows, k)), axis=1)
    out = np.empty_like(ordered)
    np.put_along_axis(out, perms, ordered, axis=1)
    return out[0] if size is None else out


def direct_modified_sample(
    values: int, k: int, size: int, seed: int, length: int = 256, chunk: int = 50_000
) -> np.ndarray:
    """
    Sample ``R_1..R_k`` by scanning uniform block streams for ``k`` targets.

    Rows where some target is absent within ``length`` blocks keep 0 there.
    """
    if not 1 <= k <= values:
        raise InvalidParameter(f"Need 1 <= k <= {values}, got {k}")
    rng = np.random.default_rng(seed)
    out = np.empty((size, k), dtype=np.int64)
    for start in range(0, size, chunk):
        rows = min(chunk, size - start)
        streams = rng.integers(0, values, size=(rows, length), dtype=np.int16)
        out[start : start + rows] = _first_hits(streams, k)
    return out


# =============================================================================
# Negative association
# =============================================================================

_KINDS = ("sum", "max", "min", "exceed")


@dataclass(frozen=True)
class MonotoneFunction:
    """A coordinatewise non-decreasing function from the fixed library.

    ``sum``, ``max`` and ``min`` reduce the selected coordinates;
    ``exceed`` is the indicator that their maximum is above ``threshold``.
    Indices are 1-based.
    """

    kind: str
    indices: tuple[int, ...]
    threshold: float = 0.0

    @classmethod
    def parse(cls, spec: str) -> "MonotoneFunction":
        """Parse ``kind:i,j[:threshold]``, e.g. ``max:1,2`` or ``exceed:3:40``."""
        parts = spec.split(":")
        if len(parts) not in (2, 3) or parts[0] not in _KINDS:
            raise InvalidParameter(f"Bad function spec {spec!r}; kinds are {_KINDS}")
        indices = tuple(int(i) for i in parts[1].split(","))
        threshold = float(parts[2]) if len(parts) == 3 else 0.0  # noqa: PLR2004
        if parts[0] == "exceed" and len(parts) != 3:  # noqa: PLR2004
            raise InvalidParameter(f"exceed needs a threshold: {spec!r}")
        return cls(parts[0], indices, threshold)

    def __str__(self) -> str:
        idx = ",".join(str(i) for i in self.indices)
        if self.kind == "exceed":
            return f"exceed:{idx}:{self.threshold:g}"
        return f"{self.kind}:{idx}"

    def __call__(self, samples: np.ndarray) -> np.ndarray:
        cols = samples[:, [i - 1 for i in self.indices]].astype(np.float64)
        if self.kind == "sum":
            return cols.sum(axis=1)
        if self.kind == "max":
            return cols.max(axis=1)
        if self.kind == "min":
            return cols.min(axis=1)
        return (cols.max(axis=1) > self.threshold).astype(np.float64)


@dataclass
class NACheck:
    """Empirical covariance of two monotone functions with its standard error."""

    f1: str
    f2: str
    covariance: float
    standard_error: float
    samples: int

    def within(self, sigmas: float = 3.0) -> bool:
        """True when the covariance is at most ``sigmas`` standard errors above 0."""
        return self.covariance <= sigmas * self.standard_error


def na_empirical_check(
    samples: np.ndarray,
    f1: MonotoneFunction | str,
    f2: MonotoneFunction | str,
) -> NACheck:
    """
    Empirical ``Cov(f1(R), f2(R))`` over sample rows.

    The standard error is the standard deviation of the centred products
    divided by ``sqrt(n)``.
    """
    g1 = MonotoneFunction.parse(f1) if isinstance(f1, str) else f1
    g2 = MonotoneFunction.parse(f2) if isinstance(f2, str) else f2
    if set(g1.indices) & set(g2.indices):
        raise InvalidParameter(f"Index sets of {g1} and {g2} overlap")
    width = samples.shape[1]
    if max(*g1.indices, *g2.indices) > width or min(*g1.indices, *g2.indices) < 1:
        raise InvalidParameter(f"Indices must lie in 1..{width}")
    n = samples.shape[0]
    if n < 2:  # noqa: PLR2004
        raise InvalidParameter("Need at least two samples")
    a = g1(samples)
    b = g2(samples)
    products = (a - a.mean()) * (b - b.mean())
    return NACheck(
        str(g1),
        str(g2),
        float(products.mean()),
        float(products.std(ddof=1) / math.sqrt(n)),
        n,
    )


def na_library(k: int, threshold: float) -> list[tuple[MonotoneFunction, MonotoneFunction]]:
    """The fixed library of disjoint monotone pairs used for ``k`` targets."""
    if k < 2:  # noqa: PLR2004
        raise InvalidParameter(f"Need k >= 2 targets, got {k}")
    lib = [
        (MonotoneFunction("sum", (1,)), MonotoneFunction("sum", (2,))),
        (MonotoneFunction("exceed", (1,), threshold), MonotoneFunction("exceed", (2,), threshold)),
        (MonotoneFunction("min", (1,)), MonotoneFunction("max", (2,))),
    ]
    if k >= 3:  # noqa: PLR2004
        lib.append(
            (MonotoneFunction("max", (1, 2)), MonotoneFunction("exceed", (3,), threshold))
        )
    if k >= 4:  # noqa: PLR2004
        lib += [
            (MonotoneFunction("sum", (1, 2)), MonotoneFunction("sum", (3, 4))),
            (MonotoneFunction("min", (1, 2)), MonotoneFunction("max", (3, 4))),
        ]
    return lib
