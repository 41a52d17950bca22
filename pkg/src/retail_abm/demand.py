"""Weekly demand: disease calendar, growth, and random activation of households."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .choice import Emergency, emergency_levels

WEEKS_PER_YEAR = 52
DEFAULT_GROWTH = 0.096
DEFAULT_IN_SEASON_WEIGHT = 2.0


def _weeks(first: int, last: int) -> frozenset[int]:
    """1-based inclusive calendar weeks, wrapping over the year end."""
    if first <= last:
        return frozenset(range(first, last + 1))
    return frozenset(range(first, WEEKS_PER_YEAR + 1)) | frozenset(range(1, last + 1))


SEASON_WEEKS = {
    "rainy": _weeks(23, 39),
    "winter": _weeks(49, 8),
    "jan-mar": _weeks(1, 13),
    "jun-aug": _weeks(23, 35),
}


def season_weeks(peak_season: str) -> frozenset[int]:
    """Weeks of a peak-season label; ``+`` joins seasons (``winter+rainy``)."""
    weeks: frozenset[int] = frozenset()
    for part in peak_season.lower().split("+"):
        part = part.strip()
        if part not in SEASON_WEEKS:
            raise ValueError(f"unknown season {part!r}; known: {sorted(SEASON_WEEKS)}")
        weeks |= SEASON_WEEKS[part]
    return weeks


@dataclass(frozen=True)
class DiseaseRow:
    name: str
    cases_per_year: float
    seasonal: bool
    peak_season: str = ""


@dataclass(frozen=True)
class DemandCalendar:
    weekly_fraction: np.ndarray
    annual_growth: float = DEFAULT_GROWTH

    def __post_init__(self):
        wf = np.asarray(self.weekly_fraction, dtype=float)
        if wf.shape != (WEEKS_PER_YEAR,):
            raise ValueError(f"weekly_fraction must have {WEEKS_PER_YEAR} entries")
        if np.any((wf < 0) | (wf > 1)):
            raise ValueError("weekly fractions must lie in [0, 1]")
        if self.annual_growth <= -1:
            raise ValueError("annual_growth must be > -1")
        wf.setflags(write=False)
        object.__setattr__(self, "weekly_fraction", wf)


def load_diseases(path: str | Path) -> list[DiseaseRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            seasonal = rec["seasonal"].strip().lower() in ("yes", "y", "true", "1")
            rows.append(DiseaseRow(rec["name"], float(rec["cases_per_year"]), seasonal,
                                   (rec.get("peak_season") or "").strip()))
    return rows


def weekly_cases(rows: Sequence[DiseaseRow],
                 in_season_weight: float = DEFAULT_IN_SEASON_WEIGHT) -> np.ndarray:
    """Spread each disease's annual cases over the 52 calendar weeks."""
    total = np.zeros(WEEKS_PER_YEAR)
    for r in rows:
        if r.cases_per_year < 0:
            raise ValueError(f"{r.name}: negative case count")
        w = np.ones(WEEKS_PER_YEAR)
        if r.seasonal and r.peak_season:
            idx = [k - 1 for k in season_weeks(r.peak_season)]
            w[idx] = in_season_weight
        total += r.cases_per_year * w / w.sum()
    return total


def build_calendar(rows: Sequence[DiseaseRow], population: int, base_mean_fraction: float,
                   annual_growth: float = DEFAULT_GROWTH,
                   in_season_weight: float = DEFAULT_IN_SEASON_WEIGHT) -> DemandCalendar:
    """Weekly demand fractions with the disease-driven seasonal shape.

    Case counts fix only the shape; the level is rescaled so the 52-week mean
    equals ``base_mean_fraction``.
    """
    if population <= 0:
        raise ValueError("population must be > 0")
    if not 0.0 < base_mean_fraction < 1.0:
        raise ValueError("base_mean_fraction must lie in (0, 1)")
    raw = weekly_cases(rows, in_season_weight) / population
    if raw.sum() == 0:
        wf = np.full(WEEKS_PER_YEAR, base_mean_fraction)
    else:
        wf = raw * (base_mean_fraction / raw.mean())
    if wf.max() > 1.0:
        raise ValueError("seasonal peak exceeds 1.0 at this base_mean_fraction")
    return DemandCalendar(wf, annual_growth)


def demand_fraction(cal: DemandCalendar, week_index: int) -> float:
    """Fraction of households with demand in a 0-based simulation week."""
    years, w = divmod(week_index, WEEKS_PER_YEAR)
    return min(1.0, float(cal.weekly_fraction[w]) * (1.0 + cal.annual_growth) ** years)


@dataclass(frozen=True)
class EmergencyDraw:
    beta: float
    level: Emergency


class Activation(NamedTuple):
    ids: np.ndarray      # activated household ids, input order preserved
    beta: np.ndarray     # emergency draw per activated household
    level: np.ndarray    # Emergency code per activated household

    def draws(self) -> dict[int, EmergencyDraw]:
        return {int(i): EmergencyDraw(float(b), Emergency(int(l)))
                for i, b, l in zip(self.ids, self.beta, self.level)}


def activate(households: np.ndarray | Sequence[int], fraction: float,
             rng: np.random.Generator) -> Activation:
    """Roulette-wheel activation: each household spins once with P(demand) = fraction."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    ids = np.asarray(households)
    hit = rng.random(ids.size) < fraction
    chosen = ids[hit]
    beta = rng.random(chosen.size)
    return Activation(chosen, beta, emergency_levels(beta))
