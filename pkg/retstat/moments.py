"""
Moments of ``ln R`` for a geometric return time ``R ~ Geom(p)``.

``P(R = r) = p (1-p)^(r-1)`` for ``r >= 1``. Exact values are computed by
summing the series in vectorised chunks until a ratio-test bound on the
remaining tail is below the requested tolerance. For small ``p`` only the head
up to ``2 e^center`` is summed term by term and the rest is integrated with
Euler-Maclaurin corrections and an explicit remainder bound. Asymptotic forms
(``-gamma - ln p`` and ``pi^2/6``) are provided alongside, together with the
envelopes their gaps were validated against.

Every function taking ``p`` accepts a float or a :class:`GeomParam`.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from retstat.errors import InvalidParameter, NonIntegrable

logger = logging.getLogger(__name__)

EULER_GAMMA = 0.57721566490153286061
ZETA2 = math.pi**2 / 6
# Lyapunov constant: E|ln R - mu|^3 stays below this for every p <= 1/2.
THIRD_MOMENT_BOUND = 9.0

MAX_SERIES_TERMS = 10**9
DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class GeomParam:
    """Success probability of a geometric law, ``0 < p < 1``."""

    p: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", _check_p(self.p))

    def __float__(self) -> float:
        return float(self.p)


def _check_p(p: float | GeomParam) -> float:
    if isinstance(p, GeomParam):
        return p.p
    value = float(p)
    if not 0.0 < value < 1.0:
        raise InvalidParameter(f"p must lie in (0, 1), got {value}")
    return value


def _check_tol(tol: float) -> None:
    if not tol > 0:
        raise InvalidParameter(f"Tolerance must be positive, got {tol}")


# =============================================================================
# Series engine
# =============================================================================

# Below this p the head of the series is summed exactly and the tail past
# ``2 e^center`` is replaced by its integral plus Euler-Maclaurin corrections.
SPLIT_SERIES_BELOW = 2.0**-12
_MIN_HEAD_TERMS = 4096
_SUM_CHUNK = 1 << 21

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_GL_FINE_NODES, _GL_FINE_WEIGHTS = np.polynomial.legendre.leggauss(24)


def log_tail_bound(p: float, center: float, order: int, n_summed: int) -> float:
    """Bound on sum over r > n_summed of p q^(r-1) |ln r - center|^order.

    Beyond ``e^center`` the deviation is positive, increasing and concave,
    so the ratio of consecutive terms is decreasing and the tail is
    dominated by a geometric series.
    """
    first = math.log(n_summed + 1) - center
    second = math.log(n_summed + 2) - center
    if first <= 0:
        return math.inf
    rho = (1 - p) * (second / first) ** order
    if rho >= 1:
        return math.inf
    lead = p * math.exp(n_summed * math.log1p(-p)) * first**order
    return lead / (1 - rho)


def _range_sums(
    p: float, center: float, max_order: int, start: int, stop: int, absolute: bool
) -> np.ndarray:
    """Exact sums over ``start <= r < stop``, in chunks."""
    log_q = math.log1p(-p)
    sums = np.zeros(max_order)
    for lo in range(start, stop, _SUM_CHUNK):
        r = np.arange(lo, min(lo + _SUM_CHUNK, stop), dtype=np.float64)
        term = p * np.exp((r - 1) * log_q)
        dev = np.log(r) - center
        if absolute:
            dev = np.abs(dev)
        for m in range(max_order):
            term = term * dev
            sums[m] += term.sum()
    return sums


def _series_sums(
    p: float, center: float, max_order: int, tol: float, absolute: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Term-by-term summation until every ratio-test tail bound is below tol."""
    sums = np.zeros(max_order)
    chunk = int(min(1 << 20, max(1 << 10, 8 / p)))
    start = 1
    while True:
        sums += _range_sums(p, center, max_order, start, start + chunk, absolute)
        n_summed = start + chunk - 1
        bounds = np.array(
            [log_tail_bound(p, center, m + 1, n_summed) for m in range(max_order)]
        )
        if np.all(bounds <= tol):
            return sums, bounds
        if n_summed > MAX_SERIES_TERMS:
            raise NonIntegrable(
                f"Series for p={p} did not reach tolerance {tol} "
                f"within {MAX_SERIES_TERMS} terms"
            )
        start += chunk
        chunk = min(chunk * 2, _SUM_CHUNK)


def _deviation_coefficients(order: int, n: int) -> list[np.ndarray]:
    """Coefficients with ``d^(k)/dx^k (ln x - c)^order = sum_j coef[k][j] d^j / x^k``."""
    coef = np.zeros(order + 1)
    coef[order] = 1.0
    out = [coef]
    j = np.arange(order + 1)
    for k in range(n):
        new = -k * coef
        new[:-1] += j[1:] * coef[1:]
        out.append(new)
        coef = new
    return out


def _term_derivative(
    x: np.ndarray, p: float, center: float, order: int, n: int
) -> np.ndarray:
    """n-th derivative of ``g(x) = p q^(x-1) (ln x - center)^order``."""
    log_q = math.log1p(-p)
    powers = (np.log(x) - center)[..., None] ** np.arange(order + 1)
    total = np.zeros_like(x)
    for k, coef in enumerate(_deviation_coefficients(order, n)):
        total += math.comb(n, k) * log_q ** (n - k) * (powers @ coef) / x**k
    return p * np.exp((x - 1) * log_q) * total


def _panel_edges(a: float, end: float, p: float) -> np.ndarray:
    edges = [a]
    while edges[-1] < end:
        x = edges[-1]
        edges.append(min(2 * x, x + 1 / p, end))
    return np.array(edges)


def _panel_integral(
    g: Callable[[np.ndarray], np.ndarray],
    edges: np.ndarray,
    rule: tuple[np.ndarray, np.ndarray],
) -> float:
    nodes, weights = rule
    half = (np.diff(edges) / 2)[:, None]
    x = edges[:-1, None] + half * (nodes[None, :] + 1)
    return float(np.sum(g(x) * weights[None, :] * half))


def _split_sums(
    p: float, center: float, max_order: int, tol: float, absolute: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Exact head plus an Euler-Maclaurin tail.

    For ``r >= a > e^center`` the deviation is positive, so absolute and
    signed tails coincide. On that range
    ``sum g(r) = int_a^inf g + g(a)/2 - g'(a)/12 + g'''(a)/720 + R`` with
    ``|R| <= (1/720) int_a^inf |g''''|``.
    """
    a = max(_MIN_HEAD_TERMS, math.ceil(2 * math.exp(center)) + 1)
    log_q = math.log1p(-p)

    span = 64 / p
    while True:
        end = float(math.floor(a + span))
        n_end = int(end)
        far = np.array(
            [
                p * math.exp((end - 1) * log_q) * (math.log(end) - center) ** m
                + log_tail_bound(p, center, m, n_end)
                for m in range(1, max_order + 1)
            ]
        )
        if np.all(far <= tol / 4):
            break
        if end > MAX_SERIES_TERMS:
            raise NonIntegrable(f"Tail for p={p} did not reach tolerance {tol}")
        span *= 2
    edges = _panel_edges(float(a), end, p)
    at_a = np.array([float(a)])

    sums = _range_sums(p, center, max_order, 1, a, absolute)
    bounds = np.zeros(max_order)
    for m in range(1, max_order + 1):

        def g(x: np.ndarray, m: int = m) -> np.ndarray:
            return _term_derivative(x, p, center, m, 0)

        def abs_fourth(x: np.ndarray, m: int = m) -> np.ndarray:
            return np.abs(_term_derivative(x, p, center, m, 4))

        fine = _panel_integral(g, edges, (_GL_FINE_NODES, _GL_FINE_WEIGHTS))
        coarse = _panel_integral(g, edges, (_GL_NODES, _GL_WEIGHTS))
        remainder = _panel_integral(abs_fourth, edges, (_GL_FINE_NODES, _GL_FINE_WEIGHTS))
        correction = (
            float(g(at_a)[0]) / 2
            - float(_term_derivative(at_a, p, center, m, 1)[0]) / 12
            + float(_term_derivative(at_a, p, center, m, 3)[0]) / 720
        )
        sums[m - 1] += fine + correction
        bounds[m - 1] = abs(fine - coarse) + remainder / 720 + far[m - 1]
    logger.debug("split series p=%.3g head=%d end=%d bounds=%s", p, a, n_end, bounds)
    return sums, bounds


def _shifted_sums(
    p: float, center: float, max_order: int, tol: float, absolute: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Sum p q^(r-1) (ln r - center)^m for m = 1..max_order.

    Returns the sums and their error bounds, each bound below ``tol``.
    """
    if p < SPLIT_SERIES_BELOW:
        sums, bounds = _split_sums(p, center, max_order, tol, absolute)
        if np.all(bounds <= tol):
            return sums, bounds
        logger.debug("split series bound %s above %.3g, summing directly", bounds, tol)
    return _series_sums(p, center, max_order, tol, absolute)


class _LogMoments(NamedTuple):
    mean: float
    variance: float
    third: float
    bound: float


def _log_moments(p: float, tol: float) -> _LogMoments:
    center = mu_asymptotic(p)
    # Tail tolerance is tightened so the propagated bound stays below tol.
    sums, bounds = _shifted_sums(p, center, 3, tol / 16)
    d1, d2, d3 = (float(s) for s in sums)
    e1, e2, e3 = (float(b) for b in bounds)
    mean = center + d1
    variance = d2 - d1**2
    third = d3 - 3 * d1 * d2 + 2 * d1**3
    err_var = e2 + 2 * abs(d1) * e1 + e1**2
    err_third = (
        e3
        + 3 * (abs(d2) * e1 + abs(d1) * e2 + e1 * e2)
        + 6 * (d1**2 + e1**2) * e1
        + 2 * e1**3
    )
    return _LogMoments(mean, variance, third, max(e1, err_var, err_third))


# =============================================================================
# Public API
# =============================================================================


def exact_log_moment(p: float | GeomParam, order: int, tol: float = DEFAULT_TOL) -> float:
    """
    Exact moment of ``ln R`` for ``R ~ Geom(p)``.

    Args:
        p: Success probability in (0, 1).
        order: 1 for the mean, 2 for the variance, 3 for the (signed) third
            central moment.
        tol: Absolute error bound on the returned value.

    Returns:
        The moment, accurate to ``tol``.
    """
    p = _check_p(p)
    _check_tol(tol)
    if order not in (1, 2, 3):
        raise InvalidParameter(f"order must be 1, 2 or 3, got {order}")
    moments = _log_moments(p, tol)
    return (moments.mean, moments.variance, moments.third)[order - 1]


def mu_asymptotic(p: float | GeomParam) -> float:
    """Asymptotic mean of ``ln R``: ``-gamma - ln p``."""
    return -EULER_GAMMA - math.log(_check_p(p))


def sigma2_asymptotic(p: float | GeomParam) -> float:
    """Asymptotic variance of ``ln R``: ``pi^2 / 6`` for every p."""
    _check_p(p)
    return ZETA2


def mu_envelope(p: float | GeomParam) -> float:
    """Validated bound on ``|mu_exact(p) - mu_asymptotic(p)|`` for p <= 1/16."""
    p = _check_p(p)
    return p * (abs(math.log(p)) / 2 + 1)


def sigma2_envelope(p: float | GeomParam) -> float:
    """Validated bound on ``|sigma2_exact(p) - pi^2/6|`` for p <= 1/16."""
    p = _check_p(p)
    log_p = abs(math.log(p))
    return p * (log_p**2 + 2 * log_p + 2)


def third_abs_central_moment(p: float | GeomParam, tol: float = DEFAULT_TOL) -> float:
    """
    Exact ``E|ln R - mu(p)|^3``.

    Args:
        p: Success probability, at most 1/2.
        tol: Absolute error bound.
    """
    p = _check_p(p)
    _check_tol(tol)
    if p > 0.5:  # noqa: PLR2004
        raise InvalidParameter(f"Third absolute moment requires p <= 1/2, got {p}")
    mean = _log_moments(p, tol / 64).mean
    sums, _ = _shifted_sums(p, mean, 3, tol / 2, absolute=True)
    return float(sums[2])


def dilogarithm(x: float, tol: float = 1e-15) -> float:
    """
    Dilogarithm ``Li2(x) = sum x^k / k^2`` for ``0 <= x <= 1``.

    The direct series is used for ``x <= 1/2``; above that the reflection
    ``Li2(x) = pi^2/6 - ln x ln(1-x) - Li2(1-x)`` keeps convergence fast.
    """
    _check_tol(tol)
    if not 0.0 <= x <= 1.0:
        raise InvalidParameter(f"dilogarithm argument must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return ZETA2
    if x > 0.5:  # noqa: PLR2004
        return ZETA2 - math.log(x) * math.log1p(-x) - dilogarithm(1.0 - x, tol)
    # Tail after N terms is at most x^(N+1) / ((N+1)^2 (1-x)).
    n_terms = 1
    while x ** (n_terms + 1) / ((n_terms + 1) ** 2 * (1 - x)) > tol:
        n_terms += 1
    k = np.arange(1, n_terms + 1, dtype=np.float64)
    return float(np.sum(x**k / k**2))


def inverse_moment(p: float | GeomParam, order: int) -> float:
    """
    ``E[R^-order]`` for ``R ~ Geom(p)``.

    Order 1 is ``-p ln p / (1-p)``; order 2 is ``p Li2(1-p) / (1-p)``.
    """
    p = _check_p(p)
    q = 1.0 - p
    if order == 1:
        return -p * math.log(p) / q
    if order == 2:  # noqa: PLR2004
        return p * dilogarithm(q) / q
    raise InvalidParameter(f"order must be 1 or 2, got {order}")


# =============================================================================
# Euler-Maclaurin comparison of a sum with its integral
# =============================================================================


class GapBound(NamedTuple):
    gap: float
    bound: float


def _unit_integrals(g: Callable[[np.ndarray], np.ndarray], lo: int, hi: int) -> float:
    """Integral of g over [lo, hi] by Gauss-Legendre on each unit interval."""
    left = np.arange(lo, hi, dtype=np.float64)[:, None]
    x = left + (_GL_NODES[None, :] + 1) / 2
    return float(np.sum(g(x) * _GL_WEIGHTS[None, :]) / 2)


def euler_maclaurin_gap(
    f: Callable[[np.ndarray], np.ndarray],
    fprime: Callable[[np.ndarray], np.ndarray],
    decay: float,
    tol: float = 1e-10,
) -> GapBound:
    """
    Compare ``sum_{i>=1} f(i)`` with ``int_1^inf f``.

    Returns the gap ``|sum - integral|`` and the bound
    ``|f(1)|/2 + (1/2) int_1^inf |f'|``; the gap never exceeds the bound.

    Args:
        f: Vectorised function, smooth on [1, inf) and decaying to zero.
        fprime: Vectorised derivative of ``f``.
        decay: Exponential rate ``c > 0`` with ``|f|, |f'| = O(x^m e^(-c x))``;
            fixes the truncation point.
        tol: Allowed contribution of everything past the truncation point.

    Raises:
        NonIntegrable: If the tails have not converged at the truncation
            point implied by ``decay``.
    """
    if not decay > 0:
        raise InvalidParameter(f"decay must be positive, got {decay}")
    _check_tol(tol)
    cutoff = 64 + math.ceil(2 * math.log(1 / tol) / decay)

    def abs_fprime(x: np.ndarray) -> np.ndarray:
        return np.abs(fprime(x))

    points = np.arange(1, cutoff + 1, dtype=np.float64)
    total = float(np.sum(f(points)))
    integral = _unit_integrals(f, 1, cutoff)
    variation = _unit_integrals(abs_fprime, 1, cutoff)

    far = np.arange(cutoff + 1, 2 * cutoff + 1, dtype=np.float64)
    residual = max(
        float(np.sum(np.abs(f(far)))),
        abs(_unit_integrals(f, cutoff, 2 * cutoff)),
        _unit_integrals(abs_fprime, cutoff, 2 * cutoff),
    )
    if not math.isfinite(residual) or residual > tol:
        raise NonIntegrable(
            f"Tail beyond x={cutoff} contributes {residual:.3g} > {tol:.3g}"
        )
    gap = abs(total - integral)
    bound = abs(float(f(np.array([1.0]))[0])) / 2 + variation / 2
    logger.debug("euler_maclaurin_gap: cutoff=%d gap=%.3g bound=%.3g", cutoff, gap, bound)
    return GapBound(gap, bound)


# =============================================================================
# Reports
# =============================================================================


@dataclass
class MomentReport:
    """Exact and asymptotic log-moments of ``Geom(p)``."""

    p: float
    mu_exact: float
    mu_asym: float
    sigma2_exact: float
    sigma2_asym: float
    third_central: float
    third_central_abs: float
    tail_truncation_error_bound: float
    inverse_first: float
    inverse_second: float

    @property
    def mu_gap(self) -> float:
        return self.mu_exact - self.mu_asym

    @property
    def sigma2_gap(self) -> float:
        return self.sigma2_exact - self.sigma2_asym


def log_moment_report(p: float | GeomParam, tol: float = DEFAULT_TOL) -> MomentReport:
    """All log-moment oracles for one ``p``, each accurate to ``tol``."""
    p = _check_p(p)
    _check_tol(tol)
    moments = _log_moments(p, tol)
    third_abs = third_abs_central_moment(p, tol) if p <= 0.5 else math.nan  # noqa: PLR2004
    return MomentReport(
        p=p,
        mu_exact=moments.mean,
        mu_asym=mu_asymptotic(p),
        sigma2_exact=moments.variance,
        sigma2_asym=ZETA2,
        third_central=moments.third,
        third_central_abs=third_abs,
        tail_truncation_error_bound=moments.bound,
        inverse_first=inverse_moment(p, 1),
        inverse_second=inverse_moment(p, 2),
    )
