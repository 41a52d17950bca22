"""Attribute levels, part-worth tables and the channel choice rule.

A customer's utility for a store is the sum of the part-worths of the store's
four attribute levels plus the part-worth of the distance bin, scaled by
``1 / d_eff ** n``.  The customer's emergency level picks which part-worth
table applies.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Mapping

import numpy as np

from .geo import Channel

D_MIN_KM = 0.1
EPHARM_MIN_KM = 10.0


class Attribute(str, Enum):
    PRICE_DISCOUNT = "price_discount"
    QUALITY = "quality"
    ASSORTMENT = "assortment"
    SERVICE = "service"
    DISTANCE = "distance"
    EMERGENCY = "emergency"


STORE_ATTRIBUTES = (Attribute.PRICE_DISCOUNT, Attribute.QUALITY,
                    Attribute.ASSORTMENT, Attribute.SERVICE)
TABLE_ATTRIBUTES = STORE_ATTRIBUTES + (Attribute.DISTANCE,)


class Level(IntEnum):
    L1 = 0
    L2 = 1
    L3 = 2

    @classmethod
    def parse(cls, text: str) -> "Level":
        """Accept ``L1``/``L2``/``L3`` or the factor letters ``L``/``M``/``H``."""
        t = text.strip().upper()
        if t in ("L", "M", "H"):
            return cls("LMH".index(t))
        return cls[t]

    @property
    def letter(self) -> str:
        return "LMH"[self.value]


class Emergency(IntEnum):
    LE = 0
    ME = 1
    HE = 2


# Bin edges as printed in the attribute-level table: (low, high, low_inclusive,
# high_inclusive) for L1, L2, L3.
_BINS = {
    Attribute.PRICE_DISCOUNT: ((0, 10, True, False), (10, 20, True, True), (20, 100, False, True)),
    Attribute.QUALITY: ((0, 0.4, True, False), (0.4, 0.7, True, False), (0.7, 1, True, True)),
    Attribute.ASSORTMENT: ((0, 0.4, True, False), (0.4, 0.7, True, False), (0.7, 1, True, True)),
    Attribute.SERVICE: ((0, 0.4, True, False), (0.4, 0.7, True, False), (0.7, 1, True, True)),
    Attribute.EMERGENCY: ((0, 0.4, True, False), (0.4, 0.7, True, False), (0.7, 1, True, True)),
    Attribute.DISTANCE: ((0, 2, True, True), (2, 10, False, True), (10, math.inf, False, False)),
}


def classify(attribute: Attribute | str, raw_value: float) -> Level:
    """Bin a raw attribute value into its level.

    >>> classify("price_discount", 10.0)
    <Level.L2: 1>
    """
    attribute = Attribute(attribute)
    if not math.isfinite(raw_value) and not (attribute is Attribute.DISTANCE and raw_value == math.inf):
        raise ValueError(f"{attribute.value}: non-finite value {raw_value}")
    for level, (lo, hi, lo_in, hi_in) in zip(Level, _BINS[attribute]):
        above = raw_value >= lo if lo_in else raw_value > lo
        below = raw_value <= hi if hi_in else raw_value < hi
        if above and below:
            return level
    raise ValueError(f"{attribute.value}: value {raw_value} outside the attribute's domain")


def emergency_levels(beta: np.ndarray) -> np.ndarray:
    """Vectorised :func:`classify` for emergency draws; returns Emergency codes."""
    beta = np.asarray(beta, dtype=float)
    if np.any((beta < 0) | (beta > 1)):
        raise ValueError("emergency draws must lie in [0, 1]")
    return np.where(beta < 0.4, 0, np.where(beta < 0.7, 1, 2)).astype(np.int64)


@dataclass(frozen=True)
class PartWorthTable:
    emergency: Emergency
    worths: Mapping[tuple[Attribute, Level], float]
    se: Mapping[tuple[Attribute, Level], float] = field(default_factory=dict)

    def __post_init__(self):
        missing = [(a.value, l.name) for a in TABLE_ATTRIBUTES for l in Level
                   if (a, l) not in self.worths]
        if missing:
            raise ValueError(f"{self.emergency.name} table missing levels: {missing}")

    def worth(self, attribute: Attribute, level: Level) -> float:
        return self.worths[(attribute, level)]

    def as_array(self) -> np.ndarray:
        """Part-worths as a (5, 3) array, rows in TABLE_ATTRIBUTES order."""
        return np.array([[self.worths[(a, l)] for l in Level] for a in TABLE_ATTRIBUTES])

    def zero_sum_residuals(self) -> dict[Attribute, float]:
        return {a: sum(self.worths[(a, l)] for l in Level) for a in TABLE_ATTRIBUTES}

    def scaled(self, factor: float) -> "PartWorthTable":
        return PartWorthTable(self.emergency, {k: v * factor for k, v in self.worths.items()},
                              dict(self.se))


PARTWORTH_HEADER = ["emergency", "attribute", "level", "worth", "se"]


def load_partworths(path: str | Path, zero_sum_tol: float | None = 1e-3
                    ) -> dict[Emergency, PartWorthTable]:
    """Read a part-worth CSV holding one or more emergency tables."""
    worths: dict[Emergency, dict] = {}
    ses: dict[Emergency, dict] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != PARTWORTH_HEADER:
            raise ValueError(f"{path}: expected header {','.join(PARTWORTH_HEADER)}")
        for row in reader:
            e = Emergency[row["emergency"].strip()]
            key = (Attribute(row["attribute"].strip()), Level.parse(row["level"]))
            worths.setdefault(e, {})[key] = float(row["worth"])
            ses.setdefault(e, {})[key] = float(row["se"]) if row["se"] else math.nan
    tables = {e: PartWorthTable(e, worths[e], ses[e]) for e in worths}
    if zero_sum_tol is not None:
        for t in tables.values():
            for a, r in t.zero_sum_residuals().items():
                if abs(r) > zero_sum_tol:
                    raise ValueError(f"{t.emergency.name}/{a.value}: part-worths sum to {r:.6f}, "
                                     f"not 0 within {zero_sum_tol}")
    return tables


def write_partworths(tables: Mapping[Emergency, PartWorthTable], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PARTWORTH_HEADER)
        for e in sorted(tables, reverse=True):
            t = tables[e]
            for a in TABLE_ATTRIBUTES:
                for l in Level:
                    se = t.se.get((a, l), math.nan)
                    w.writerow([e.name, a.value, l.name, repr(t.worths[(a, l)]),
                                "" if math.isnan(se) else repr(se)])


@dataclass(frozen=True)
class RetailerProfile:
    channel: Channel
    discount: Level
    quality: Level
    assortment: Level
    service: Level

    def levels(self) -> dict[Attribute, Level]:
        return {Attribute.PRICE_DISCOUNT: self.discount, Attribute.QUALITY: self.quality,
                Attribute.ASSORTMENT: self.assortment, Attribute.SERVICE: self.service}

    def store_worth(self, table: PartWorthTable) -> float:
        return sum(table.worth(a, l) for a, l in self.levels().items())


def effective_distance(d_km: float, channel: Channel, d_min: float = D_MIN_KM,
                       epharm_min: float = EPHARM_MIN_KM) -> float:
    return max(d_km, epharm_min if channel is Channel.EPHARM else d_min)


def utility(d_km: float, n: float, retailer: RetailerProfile, table: PartWorthTable,
            d_min: float = D_MIN_KM, epharm_min: float = EPHARM_MIN_KM) -> float:
    if n < 0:
        raise ValueError(f"mobility exponent must be >= 0, got {n}")
    d_eff = effective_distance(d_km, retailer.channel, d_min, epharm_min)
    bracket = retailer.store_worth(table) + table.worth(Attribute.DISTANCE,
                                                        classify(Attribute.DISTANCE, d_eff))
    return bracket / d_eff ** n


def choose(candidates: Mapping[Channel, tuple[int, float]],
           profiles: Mapping[int, RetailerProfile], table: PartWorthTable, n: float,
           d_min: float = D_MIN_KM, epharm_min: float = EPHARM_MIN_KM
           ) -> tuple[Channel, int, float]:
    """Pick the channel with the highest utility, even if it is negative.

    Exact ties go to the lower Channel value (unorganized first), then to the
    lower retailer id.
    """
    if not candidates:
        raise ValueError("no candidate retailers")
    scored = []
    for ch, (rid, d) in candidates.items():
        u = utility(d, n, profiles[rid], table, d_min, epharm_min)
        scored.append((-u, int(ch), rid, ch, u))
    scored.sort(key=lambda s: s[:3])
    _, _, rid, ch, u = scored[0]
    return ch, rid, u


def relative_importance(table: PartWorthTable) -> dict[Attribute, float]:
    """Range of each attribute's part-worths as a percentage of the summed ranges."""
    arr = table.as_array()
    ranges = arr.max(axis=1) - arr.min(axis=1)
    total = ranges.sum()
    if total == 0:
        return {a: 0.0 for a in TABLE_ATTRIBUTES}
    return {a: float(100.0 * r / total) for a, r in zip(TABLE_ATTRIBUTES, ranges)}
