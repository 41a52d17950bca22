import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from retail_abm.choice import Emergency
from retail_abm.config import data_path
from retail_abm.demand import (WEEKS_PER_YEAR, DemandCalendar, DiseaseRow, activate,
                               build_calendar, demand_fraction, load_diseases, season_weeks,
                               weekly_cases)


def test_non_seasonal_calendar_flat():
    cal = build_calendar([DiseaseRow("x", 5200, False)], 1000, 0.3)
    np.testing.assert_allclose(cal.weekly_fraction, 0.3)


def test_all_zero_cases_uniform():
    cal = build_calendar([DiseaseRow("x", 0, True, "rainy")], 1000, 0.25)
    np.testing.assert_allclose(cal.weekly_fraction, 0.25)


def test_rainy_weight_ratio():
    # Mass balance by brute force: 17 weeks at weight 2, 35 at weight 1.
    raw = weekly_cases([DiseaseRow("x", 69, True, "rainy")], 2.0)
    rainy = sorted(season_weeks("rainy"))
    assert rainy == list(range(23, 40))
    off = [w for w in range(1, 53) if w not in rainy]
    np.testing.assert_allclose(raw[[w - 1 for w in rainy]], 2.0)
    np.testing.assert_allclose(raw[[w - 1 for w in off]], 1.0)
    cal = build_calendar([DiseaseRow("x", 69, True, "rainy")], 100, 0.1)
    assert cal.weekly_fraction[30] / cal.weekly_fraction[0] == pytest.approx(2.0)
    assert cal.weekly_fraction.mean() == pytest.approx(0.1)


def test_winter_wraps_year_end():
    w = season_weeks("winter")
    assert 52 in w and 1 in w and 8 in w and 9 not in w and 48 not in w


def test_unknown_season():
    with pytest.raises(ValueError):
        season_weeks("monsoon")


def test_bundled_calendar():
    rows = load_diseases(data_path("diseases.csv"))
    cal = build_calendar(rows, 20000, 0.8)
    assert cal.weekly_fraction.mean() == pytest.approx(0.8)
    assert cal.weekly_fraction.max() <= 1.0
    assert cal.weekly_fraction[30] > cal.weekly_fraction[15]


def test_demand_fraction_growth_and_cap():
    cal = DemandCalendar(np.full(WEEKS_PER_YEAR, 0.5), 0.096)
    assert demand_fraction(cal, 0) == 0.5
    assert demand_fraction(cal, 52) == pytest.approx(0.5 * 1.096)
    assert demand_fraction(cal, 52 * 10) == 1.0


def test_calendar_validation():
    with pytest.raises(ValueError):
        DemandCalendar(np.full(51, 0.1))
    with pytest.raises(ValueError):
        DemandCalendar(np.full(52, 1.1))
    with pytest.raises(ValueError):
        build_calendar([DiseaseRow("x", 1, False)], 0, 0.1)


def test_activate_edges():
    rng = np.random.default_rng(0)
    assert activate(np.arange(100), 0.0, rng).ids.size == 0
    a = activate(np.arange(100), 1.0, rng)
    np.testing.assert_array_equal(a.ids, np.arange(100))
    assert np.all((a.beta >= 0) & (a.beta < 1))
    assert set(a.draws()) == set(range(100))
    with pytest.raises(ValueError):
        activate(np.arange(3), 1.5, rng)


def test_activate_binomial_bound_and_determinism():
    ids = np.arange(20000)
    a = activate(ids, 0.03, np.random.default_rng(11))
    b = activate(ids, 0.03, np.random.default_rng(11))
    sigma = np.sqrt(20000 * 0.03 * 0.97)
    assert abs(a.ids.size - 600) <= 4 * sigma
    np.testing.assert_array_equal(a.ids, b.ids)
    np.testing.assert_array_equal(a.beta, b.beta)
    c = activate(ids, 0.03, np.random.default_rng(12))
    assert not np.array_equal(a.ids, c.ids)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_activate_levels_consistent(seed):
    a = activate(np.arange(500), 0.5, np.random.default_rng(seed))
    expect = np.where(a.beta < 0.4, Emergency.LE, np.where(a.beta < 0.7, Emergency.ME, Emergency.HE))
    np.testing.assert_array_equal(a.level, expect)
