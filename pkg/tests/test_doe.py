import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from retail_abm import doe
from retail_abm.choice import Level
from retail_abm.config import ScenarioConfig, data_path
from retail_abm.geo import Channel

from oracles import lstsq_anova


def test_standard_order():
    d = doe.full_factorial()
    L, M, H = Level
    assert len(d.runs) == 27
    assert d.runs[0] == (L, L, L)
    assert d.runs[13] == (M, M, M)
    assert d.runs[26] == (H, H, H)
    assert d.runs[1] == (L, L, M) and d.runs[3] == (L, M, L) and d.runs[9] == (M, L, L)


def test_unknown_mode():
    with pytest.raises(ValueError):
        doe.full_factorial("price")


def test_bind_changes_only_swept_attribute():
    base = ScenarioConfig()
    for mode in ("discount", "quality"):
        d = doe.full_factorial(mode)
        cfg = d.bind(base, 5)     # (L, M, H)
        for ch, lv in zip(doe.CHANNEL_ORDER, (Level.L1, Level.L2, Level.L3)):
            p, b = cfg.profiles[ch], base.profiles[ch]
            assert getattr(p, mode) is lv
            for other in ("discount", "quality", "assortment", "service"):
                if other != mode:
                    assert getattr(p, other) is getattr(b, other)


def test_bundled_columns_match_standard_order():
    import csv
    for name in ("table_d1.csv", "table_d7.csv"):
        with open(data_path(name), newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [(r["f1"], r["f2"], r["f3"]) for r in rows] == [
            tuple(lv.letter for lv in run) for run in doe.full_factorial().runs]


def test_wrong_response_count():
    with pytest.raises(ValueError, match="27"):
        doe.anova3(np.zeros(26))


def test_constant_response_degenerate():
    t = doe.anova3(np.full(27, 5.0))
    assert t.degenerate
    assert all(r.ss == 0 for r in t.rows)
    assert all(r.contribution == 0 for r in t.rows)
    assert all(math.isnan(r.f) for r in t.rows)


def test_df_column():
    t = doe.anova3(np.arange(27.0) ** 1.5)
    assert [r.df for r in t.rows] == [2, 2, 2, 4, 4, 4, 8, 26]


def _check_against_oracle(y, rel=1e-6):
    t = doe.anova3(y)
    ref = lstsq_anova(y)
    scale = ref[-1]
    for r, s in zip(t.rows, ref):
        assert abs(r.ss - s) <= rel * scale + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=27, max_size=27))
def test_ss_matches_lstsq_oracle(y):
    y = np.array(y)
    if np.ptp(y) < 1e-3:
        return
    _check_against_oracle(y)


def test_f_and_p_match_scipy():
    y = np.random.default_rng(3).normal(size=27) + np.repeat([0, 1, 3], 9)
    t = doe.anova3(y)
    err = t.row("Error")
    for r in t.rows[:6]:
        assert r.f == pytest.approx(r.ms / err.ms)
        assert r.p == pytest.approx(scipy.stats.f.sf(r.f, r.df, 8), rel=1e-9)
    assert t.r2 == pytest.approx(100 * (1 - err.ss / t.row("Total").ss))


def test_quality_factor_names():
    names = doe.full_factorial("quality").factor_names
    assert names == ("Unorganized quality", "Organized quality", "E-Pharmacy quality")


def test_effect_tables_bundled_footprint():
    y = doe.read_response(data_path("table_d1.csv"), "fp_unorg")
    eff = doe.effect_tables(y)
    lo, mid, hi = eff.main[0]
    # The bundled column peaks at medium discount.
    assert mid > lo and mid > hi
    assert lo == pytest.approx(12031.0, abs=0.05)
    assert mid == pytest.approx(17912.3, abs=0.05)
    assert hi == pytest.approx(12068.7, abs=0.05)
    for m in eff.main:
        assert m.mean() == pytest.approx(eff.grand_mean)


def test_effect_tables_constant():
    eff = doe.effect_tables(np.full(27, 2.5))
    for m in eff.main:
        np.testing.assert_allclose(m, 2.5)
    for c in eff.pairs.values():
        np.testing.assert_allclose(c, 2.5)


def test_write_anova_and_effects(tmp_path):
    y = doe.read_response(data_path("table_d7.csv"), "fp_unorg")
    doe.write_anova(doe.anova3(y, doe.full_factorial("quality")), tmp_path / "a.csv")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == ",".join(doe.ANOVA_HEADER)
    assert len(lines) == 1 + 8 + 2
    doe.write_effects(doe.effect_tables(y), tmp_path / "e.csv")
    assert len((tmp_path / "e.csv").read_text().splitlines()) == 1 + 9 + 27


def test_read_response_formats(tmp_path):
    p = tmp_path / "r.txt"
    p.write_text("\n".join(str(i) for i in range(27)) + "\n")
    np.testing.assert_array_equal(doe.read_response(p), np.arange(27.0))
    p.write_text("\n".join(str(i) for i in range(26)) + "\n")
    with pytest.raises(ValueError, match="26"):
        doe.read_response(p)
    with pytest.raises(ValueError, match="column"):
        doe.read_response(data_path("table_d1.csv"), "nope")


def _tiny_cfg():
    return ScenarioConfig(seed=4, town_seed=4, horizon_weeks=30, households=600,
                          n_unorganized=12, n_organized=2, n_epharm=1, extent_km=3.0,
                          n_clusters=3)


def test_sweep_deterministic_and_worker_independent(tmp_path):
    cfg = _tiny_cfg()
    d = doe.full_factorial()
    a = doe.sweep(cfg, d)
    b = doe.sweep(cfg, d)
    c = doe.sweep(cfg, d, workers=2)
    doe.write_sweep(a, tmp_path / "a.csv")
    doe.write_sweep(b, tmp_path / "b.csv")
    doe.write_sweep(c, tmp_path / "c.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "c.csv").read_bytes()
    assert len((tmp_path / "a.csv").read_text().splitlines()) == 28
    assert doe.read_response(tmp_path / "a.csv", "shutdowns").shape == (27,)
    with pytest.raises(KeyError):
        a.response("profit")


def test_sweep_rows_use_distinct_streams():
    cfg = _tiny_cfg()
    # Two identical design rows still draw different demand.
    d = doe.FactorialDesign("discount", (doe.full_factorial().runs[0],) * 2)
    res = doe.sweep(cfg, d)
    a, b = res.summaries
    assert [m.active_customers for m in a.weekly] != [m.active_customers for m in b.weekly]
