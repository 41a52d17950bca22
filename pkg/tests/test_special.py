import math

import mpmath
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from retail_abm.special import betainc, f_upper_tail


def test_f_zero_is_one():
    assert f_upper_tail(0.0, 2, 8) == 1.0


@pytest.mark.parametrize("n", [1, 2, 4, 8, 26])
def test_f_one_symmetric(n):
    assert f_upper_tail(1.0, n, n) == pytest.approx(0.5, abs=1e-14)


def test_f_large_table_value():
    # With df1 = 2 the tail has the closed form (1 + df1 F / df2) ** (-df2 / 2).
    assert f_upper_tail(109.60, 2, 8) == pytest.approx((1 + 2 * 109.60 / 8) ** -4, rel=1e-12)
    assert f_upper_tail(109.60, 2, 8) < 5e-4
    assert f_upper_tail(math.inf, 2, 8) == 0.0
    assert math.isnan(f_upper_tail(math.nan, 2, 8))


def test_bad_dof():
    with pytest.raises(ValueError):
        f_upper_tail(1.0, 0, 8)


@settings(max_examples=200)
@given(st.floats(1e-3, 500), st.sampled_from([1, 2, 4, 8]), st.sampled_from([2, 4, 8, 26, 100]))
def test_f_matches_scipy(f, d1, d2):
    assert f_upper_tail(f, d1, d2) == pytest.approx(scipy.stats.f.sf(f, d1, d2), rel=1e-9, abs=1e-15)


@settings(max_examples=200)
@given(st.floats(0.05, 40), st.floats(0.05, 40), st.floats(0, 1))
def test_betainc_matches_mpmath(a, b, x):
    ref = float(mpmath.betainc(a, b, 0, x, regularized=True))
    assert betainc(a, b, x) == pytest.approx(ref, rel=1e-9, abs=1e-14)


def test_betainc_domain():
    with pytest.raises(ValueError):
        betainc(1, 1, 1.5)
    with pytest.raises(ValueError):
        betainc(0, 1, 0.5)
    assert betainc(3, 4, 0.0) == 0.0 and betainc(3, 4, 1.0) == 1.0
