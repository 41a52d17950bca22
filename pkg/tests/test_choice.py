import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from retail_abm.choice import (Attribute, Emergency, Level, PartWorthTable, RetailerProfile,
                               TABLE_ATTRIBUTES, choose, classify, effective_distance,
                               emergency_levels, load_partworths, relative_importance, utility,
                               write_partworths)
from retail_abm.config import data_path
from retail_abm.geo import Channel


@pytest.fixture(scope="module")
def tables():
    return load_partworths(data_path("partworths.csv"))


@pytest.mark.parametrize("attr,value,level", [
    ("price_discount", 10.0, Level.L2),
    ("price_discount", 9.99, Level.L1),
    ("price_discount", 20.0, Level.L2),
    ("price_discount", 20.01, Level.L3),
    ("distance", 2.0, Level.L1),
    ("distance", 2.0001, Level.L2),
    ("distance", 10.0, Level.L2),
    ("distance", 10.5, Level.L3),
    ("emergency", 0.4, Level.L2),
    ("emergency", 0.7, Level.L3),
    ("quality", 0.0, Level.L1),
    ("quality", 1.0, Level.L3),
])
def test_classify_boundaries(attr, value, level):
    assert classify(attr, value) is level


@pytest.mark.parametrize("attr,value", [("quality", 1.2), ("price_discount", -1), ("distance", -0.1),
                                        ("service", math.nan)])
def test_classify_out_of_domain(attr, value):
    with pytest.raises(ValueError):
        classify(attr, value)


@given(st.floats(0, 1))
def test_emergency_levels_matches_classify(beta):
    assert emergency_levels(np.array([beta]))[0] == int(classify("emergency", beta))


def test_bundled_tables_zero_sum(tables):
    assert set(tables) == set(Emergency)
    for t in tables.values():
        for r in t.zero_sum_residuals().values():
            assert abs(r) <= 1e-3


def test_partworths_round_trip(tables, tmp_path):
    p = tmp_path / "pw.csv"
    write_partworths(tables, p)
    again = load_partworths(p)
    for e in Emergency:
        assert again[e].worths == tables[e].worths


def test_zero_sum_violation_rejected(tables, tmp_path):
    t = tables[Emergency.HE]
    bad = dict(t.worths)
    bad[(Attribute.QUALITY, Level.L1)] += 0.01
    p = tmp_path / "bad.csv"
    write_partworths({Emergency.HE: PartWorthTable(Emergency.HE, bad)}, p)
    with pytest.raises(ValueError, match="quality"):
        load_partworths(p)


def _profile(ch, d, q, a, s):
    return RetailerProfile(ch, Level(d), Level(q), Level(a), Level(s))


def test_utility_hand_sum(tables):
    r = _profile(Channel.UNORGANIZED, 2, 2, 2, 1)
    u = utility(1.0, 0.5, r, tables[Emergency.HE])
    assert u == pytest.approx(0.12566 + 0.68198 + 0.08497 + 0.03511 + 0.66468, abs=1e-12)
    assert u == pytest.approx(1.59240, abs=1e-5)


@given(st.floats(0.0, 9.0))
def test_utility_n_zero_ignores_distance_scale(d):
    tables = load_partworths(data_path("partworths.csv"))
    t = tables[Emergency.ME]
    r = _profile(Channel.ORGANIZED, 1, 2, 0, 1)
    d_eff = max(d, 0.1)
    raw = r.store_worth(t) + t.worth(Attribute.DISTANCE, classify("distance", d_eff))
    assert utility(d, 0.0, r, t) == pytest.approx(raw, abs=1e-12)


def test_utility_epharm_clamp(tables):
    # d_eff = 10 falls in the (2, 10] bin, so the L2 distance worth applies.
    t = tables[Emergency.HE]
    r = _profile(Channel.EPHARM, 2, 2, 2, 0)
    expect = (r.store_worth(t) + 0.07211) / math.sqrt(10.0)
    assert utility(3.0, 0.5, r, t) == pytest.approx(expect, abs=1e-12)
    assert effective_distance(3.0, Channel.EPHARM) == 10.0
    assert effective_distance(0.01, Channel.UNORGANIZED) == 0.1


def test_utility_rejects_negative_exponent(tables):
    with pytest.raises(ValueError):
        utility(1.0, -0.1, _profile(Channel.ORGANIZED, 0, 0, 0, 0), tables[Emergency.HE])


def _flat_table(**worths):
    """Table whose worths are zero except the given (attribute, level) overrides."""
    w = {(a, l): 0.0 for a in TABLE_ATTRIBUTES for l in Level}
    w.update(worths)
    return PartWorthTable(Emergency.LE, w)


def test_choose_argmax():
    t = _flat_table(**{})
    w = dict(t.worths)
    w[(Attribute.QUALITY, Level.L3)] = 1.2
    w[(Attribute.QUALITY, Level.L2)] = 0.9
    w[(Attribute.QUALITY, Level.L1)] = 0.1
    t = PartWorthTable(Emergency.LE, w)
    profiles = {1: _profile(Channel.UNORGANIZED, 0, 2, 0, 0), 2: _profile(Channel.ORGANIZED, 0, 1, 0, 0),
                3: _profile(Channel.EPHARM, 0, 0, 0, 0)}
    cands = {Channel.UNORGANIZED: (1, 1.0), Channel.ORGANIZED: (2, 1.0), Channel.EPHARM: (3, 1.0)}
    ch, rid, u = choose(cands, profiles, t, 0.0)
    assert (ch, rid, u) == (Channel.UNORGANIZED, 1, pytest.approx(1.2))


def test_choose_tie_precedence():
    t = _flat_table()
    profiles = {1: _profile(Channel.UNORGANIZED, 0, 0, 0, 0), 2: _profile(Channel.ORGANIZED, 0, 0, 0, 0),
                3: _profile(Channel.EPHARM, 0, 0, 0, 0)}
    cands = {Channel.EPHARM: (3, 1.0), Channel.ORGANIZED: (2, 1.0), Channel.UNORGANIZED: (1, 1.0)}
    assert choose(cands, profiles, t, 0.0)[0] is Channel.UNORGANIZED


def test_choose_all_negative_picks_max():
    w = {(a, l): 0.0 for a in TABLE_ATTRIBUTES for l in Level}
    w[(Attribute.SERVICE, Level.L1)] = -3.0
    w[(Attribute.SERVICE, Level.L2)] = -2.0
    w[(Attribute.SERVICE, Level.L3)] = -0.5
    t = PartWorthTable(Emergency.LE, w)
    profiles = {1: _profile(Channel.UNORGANIZED, 0, 0, 0, 0), 2: _profile(Channel.ORGANIZED, 0, 0, 0, 1),
                3: _profile(Channel.EPHARM, 0, 0, 0, 2)}
    cands = {Channel.UNORGANIZED: (1, 1.0), Channel.ORGANIZED: (2, 1.0), Channel.EPHARM: (3, 1.0)}
    ch, _, u = choose(cands, profiles, t, 0.0)
    assert ch is Channel.EPHARM and u < 0


def test_choose_empty():
    with pytest.raises(ValueError):
        choose({}, {}, _flat_table(), 0.5)


def test_relative_importance_he(tables):
    # Range-formula oracle computed by hand from the bundled HE table.
    ri = relative_importance(tables[Emergency.HE])
    expect = {Attribute.QUALITY: 40.320, Attribute.DISTANCE: 41.340, Attribute.PRICE_DISCOUNT: 8.955,
              Attribute.ASSORTMENT: 7.070, Attribute.SERVICE: 2.316}
    for a, v in expect.items():
        assert ri[a] == pytest.approx(v, abs=5e-3)
    assert sum(ri.values()) == pytest.approx(100.0)


def test_relative_importance_zero_range_and_uniform():
    w = {(a, l): float(l) for a in TABLE_ATTRIBUTES for l in Level}
    ri = relative_importance(PartWorthTable(Emergency.LE, w))
    assert all(v == pytest.approx(20.0) for v in ri.values())
    w[(Attribute.SERVICE, Level.L1)] = w[(Attribute.SERVICE, Level.L3)] = 1.0
    assert relative_importance(PartWorthTable(Emergency.LE, w))[Attribute.SERVICE] == 0.0


def test_level_parse():
    assert Level.parse("m") is Level.L2 and Level.parse("L3") is Level.L3
    with pytest.raises(KeyError):
        Level.parse("X")
