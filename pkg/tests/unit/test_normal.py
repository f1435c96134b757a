import math

import numpy as np
import pytest
from scipy import stats

from retstat.errors import InvalidParameter
from retstat.normal import (
    kolmogorov_sf,
    norm_cdf,
    norm_cdf_array,
    norm_pdf,
    norm_ppf,
    norm_ppf_array,
)

# High-precision reference quantiles (Mathematica).
PPF_TABLE = [
    (0.0000001, -5.199337582187471),
    (0.00001, -4.264890793922602),
    (0.001, -3.090232306167813),
    (0.05, -1.6448536269514729),
    (0.15, -1.0364333894937896),
    (0.25, -0.6744897501960817),
    (0.35, -0.38532046640756773),
    (0.45, -0.12566134685507402),
    (0.55, 0.12566134685507402),
    (0.65, 0.38532046640756773),
    (0.75, 0.6744897501960817),
    (0.85, 1.0364333894937896),
    (0.95, 1.6448536269514729),
    (0.999, 3.090232306167813),
    (0.99999, 4.264890793922602),
    (0.9999999, 5.199337582187471),
]


@pytest.mark.parametrize(("p", "expected"), PPF_TABLE)
def test_norm_ppf_matches_reference_table(p, expected):
    """Quantiles agree with the reference table to 1e-8."""
    assert norm_ppf(p) == pytest.approx(expected, abs=1e-8)


def test_norm_ppf_round_trips_cdf():
    """Phi(Phi^-1(p)) = p across [1e-6, 1 - 1e-6]."""
    for p in np.concatenate([np.geomspace(1e-6, 0.5, 40), 1 - np.geomspace(1e-6, 0.5, 40)]):
        x = norm_ppf(float(p))
        assert norm_cdf(x) == pytest.approx(float(p), rel=1e-9)


def test_norm_ppf_symmetry_and_domain():
    """Phi^-1(1-p) = -Phi^-1(p); 0 and 1 are outside the domain."""
    assert norm_ppf(0.5) == pytest.approx(0.0, abs=1e-15)
    assert norm_ppf(0.9) == pytest.approx(-norm_ppf(0.1), abs=1e-12)
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(InvalidParameter):
            norm_ppf(bad)


def test_norm_cdf_and_pdf():
    """Standard values of Phi and phi."""
    assert norm_cdf(0.0) == 0.5
    assert norm_cdf(1.959963984540054) == pytest.approx(0.975, abs=1e-14)
    assert norm_pdf(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-15)


def test_array_helpers():
    """Array forms apply the scalar functions element-wise."""
    levels = np.array([0.25, 0.5, 0.75])
    assert norm_ppf_array(levels) == pytest.approx([norm_ppf(v) for v in levels])
    assert norm_cdf_array(np.array([0.0])) == pytest.approx([0.5])


@pytest.mark.parametrize("y", [0.05, 0.3, 0.5, 0.8, 1.0, 1.2, 1.63, 2.5, 4.0])
def test_kolmogorov_sf_matches_reference(y):
    """The limiting Kolmogorov survival function agrees with scipy."""
    assert kolmogorov_sf(y) == pytest.approx(stats.kstwobign.sf(y), abs=1e-12)


def test_kolmogorov_sf_limits():
    """P(K > 0) = 1 and the tail vanishes quickly."""
    assert kolmogorov_sf(0.0) == 1.0
    assert kolmogorov_sf(10.0) < 1e-80
