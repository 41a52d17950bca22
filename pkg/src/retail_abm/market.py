"""Retailer finances: sales profit, running cost and the six-month viability review."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .choice import Level, RetailerProfile
from .geo import Channel

WEEKS_PER_MONTH = 4.345
REVIEW_WINDOW_WEEKS = 26

ORDER_SIZE = 1500.0
GROSS_MARGIN_PCT = 25.0
MONTHLY_COST = 12098.0
WEEKLY_COST = MONTHLY_COST / WEEKS_PER_MONTH
WEEKLY_MIN_PROFIT = 10000.0
# The same Rs. 10000 read as a monthly figure, prorated to a week.  Scenario
# runs on a 20k-household town use this reading (see README).
MONTHLY_READING_MIN_PROFIT = WEEKLY_MIN_PROFIT / WEEKS_PER_MONTH

# Percent discount a store actually gives at each discount level.  The level
# bins are [0,10), [10,20], (20,100]; profit needs a single figure per bin.
# L and M are bin midpoints; H sits just above the 20% market floor and below
# the 25% margin, so high-discount stores survive only with large catchments.
DISCOUNT_PCT = {Level.L1: 5.0, Level.L2: 15.0, Level.L3: 23.25}


class ContractViolation(RuntimeError):
    """An operation was called outside its allowed use."""


class Decision(str, Enum):
    CONTINUE = "continue"
    SHUTDOWN = "shutdown"


def sales_profit(order_size: float, footprint: float, margin_pct: float,
                 discount_pct: float) -> float:
    """Order size x footprint x (margin - discount) / 100; negative when discount > margin."""
    if footprint < 0:
        raise ValueError("footprint must be >= 0")
    return order_size * footprint * (margin_pct - discount_pct) / 100.0


def total_cost(weekly_cost: float, weeks: int) -> float:
    if weeks < 0:
        raise ValueError("weeks must be >= 0")
    return weekly_cost * weeks


@dataclass
class RetailerState:
    id: int
    profile: RetailerProfile
    avg_order_size: float = ORDER_SIZE
    gross_margin_pct: float = GROSS_MARGIN_PCT
    weekly_total_cost: float = WEEKLY_COST
    weekly_min_profit: float = WEEKLY_MIN_PROFIT
    discount_pct: float | None = None
    footprint_ledger: list[int] = field(default_factory=list)
    alive: bool = True
    shutdown_week: int | None = None

    def __post_init__(self):
        if self.discount_pct is None:
            self.discount_pct = DISCOUNT_PCT[self.profile.discount]

    @property
    def channel(self) -> Channel:
        return self.profile.channel

    @property
    def mortal(self) -> bool:
        return self.profile.channel is Channel.UNORGANIZED

    def record_week(self, footprint: int) -> None:
        if footprint < 0:
            raise ValueError("footprint must be >= 0")
        if not self.alive and footprint:
            raise ContractViolation(f"retailer {self.id} is closed but was credited {footprint}")
        self.footprint_ledger.append(int(footprint))

    def window_profit(self, window_weeks: int = REVIEW_WINDOW_WEEKS) -> float:
        fp = sum(self.footprint_ledger[-window_weeks:])
        return sales_profit(self.avg_order_size, fp, self.gross_margin_pct, self.discount_pct)

    def survival_threshold(self, window_weeks: int = REVIEW_WINDOW_WEEKS) -> float:
        return (total_cost(self.weekly_total_cost, window_weeks)
                + window_weeks * self.weekly_min_profit)


def review_viability(state: RetailerState, window_weeks: int = REVIEW_WINDOW_WEEKS,
                     week: int | None = None) -> Decision:
    """Six-month review of an unorganized store.

    The store closes when its sales profit over the window falls short of
    the window's running cost plus the minimum survival profit.  A closing
    store is marked dead in place; ``week`` (weeks elapsed) is recorded.
    """
    if not state.mortal:
        raise ContractViolation(f"{state.channel.kind} retailers are never reviewed")
    if not state.alive:
        raise ContractViolation(f"retailer {state.id} is already closed")
    if state.window_profit(window_weeks) < state.survival_threshold(window_weeks):
        state.alive = False
        state.shutdown_week = len(state.footprint_ledger) if week is None else week
        return Decision.SHUTDOWN
    return Decision.CONTINUE


def tipping_discount(state: RetailerState, window_footprint: float,
                     window_weeks: int = REVIEW_WINDOW_WEEKS) -> float:
    """Largest discount (percent) at which ``window_footprint`` customers still clear the review."""
    if window_footprint <= 0:
        return float("-inf")
    return state.gross_margin_pct - (state.survival_threshold(window_weeks) * 100.0
                                     / (state.avg_order_size * window_footprint))
