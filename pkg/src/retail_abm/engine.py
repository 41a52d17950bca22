"""Weekly agent-based simulation of a town's pharmacy market."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .choice import Attribute, Emergency, Level, PartWorthTable, load_partworths
from .config import ScenarioConfig, data_path
from .demand import DemandCalendar, activate, build_calendar, demand_fraction, load_diseases
from .geo import HOUSEHOLD, Channel, SiteRecord, generate_town, load_sites
from .market import Decision, RetailerState, review_viability


class SimulationError(RuntimeError):
    """The simulation reached a state the model does not allow."""


def load_town(cfg: ScenarioConfig) -> list[SiteRecord]:
    """Sites from ``cfg.sites_file`` or a town generated from ``cfg.town_seed``."""
    if cfg.sites_file:
        return load_sites(cfg.sites_file)
    return generate_town(cfg.households, cfg.n_unorganized, cfg.n_organized, cfg.n_epharm,
                         cfg.extent_km, cfg.n_clusters, seed=cfg.town_seed)


def load_tables(cfg: ScenarioConfig) -> dict[Emergency, PartWorthTable]:
    tables = load_partworths(cfg.partworths_file or data_path("partworths.csv"))
    if set(tables) != set(Emergency):
        raise SimulationError("part-worth file must hold LE, ME and HE tables")
    return tables


def load_calendar(cfg: ScenarioConfig, population: int) -> DemandCalendar:
    rows = load_diseases(cfg.diseases_file or data_path("diseases.csv"))
    return build_calendar(rows, population, cfg.base_mean_fraction, cfg.annual_growth,
                          cfg.in_season_weight)


class World:
    """Town geometry, retailer states and the nearest-open-store cache."""

    def __init__(self, cfg: ScenarioConfig, sites: Sequence[SiteRecord] | None = None,
                 tables: dict[Emergency, PartWorthTable] | None = None):
        self.cfg = cfg
        sites = list(load_town(cfg) if sites is None else sites)
        households = [s for s in sites if s.kind == HOUSEHOLD]
        retailers = sorted((s for s in sites if s.kind != HOUSEHOLD), key=lambda s: s.id)
        if not households:
            raise SimulationError("town has no households")
        for ch in Channel:
            if not any(r.channel is ch for r in retailers):
                raise SimulationError(f"town has no {ch.kind} retailer")
        self.household_ids = np.array([h.id for h in households], dtype=np.int64)
        self.retailer_ids = np.array([r.id for r in retailers], dtype=np.int64)
        self.retailer_channel = np.array([int(r.channel) for r in retailers], dtype=np.int64)
        hlat = np.array([h.point.lat for h in households])
        hlon = np.array([h.point.lon for h in households])
        rlat = np.array([r.point.lat for r in retailers])
        rlon = np.array([r.point.lon for r in retailers])
        self.dist = np.ascontiguousarray(kernels.haversine_matrix(hlat, hlon, rlat, rlon))

        self.tables = load_tables(cfg) if tables is None else tables
        self.calendar = load_calendar(cfg, len(households))
        self.states = [
            RetailerState(int(r.id), cfg.profiles[r.channel], cfg.order_size,
                          cfg.gross_margin_pct, cfg.weekly_cost, cfg.weekly_min_profit,
                          cfg.discount_pct(cfg.profiles[r.channel].discount))
            for r in retailers]
        self.alive = np.ones(len(retailers), dtype=np.bool_)

        # (3 emergency levels, R) store-attribute worths and (3, 3) distance worths.
        self.bracket_store = np.array(
            [[s.profile.store_worth(self.tables[e]) for s in self.states] for e in Emergency])
        self.dist_worth = np.array(
            [[self.tables[e].worth(Attribute.DISTANCE, l) for l in Level] for e in Emergency])
        self.d_floor = np.array([cfg.d_min_km, cfg.d_min_km, cfg.epharm_min_km])
        self.channel_cols = [np.flatnonzero(self.retailer_channel == c).astype(np.int64)
                             for c in range(kernels.N_CHANNELS)]
        self.nearest_idx = np.empty((len(households), kernels.N_CHANNELS), dtype=np.int64)
        self.nearest_d = np.empty((len(households), kernels.N_CHANNELS))
        self.refresh_nearest()

    @property
    def n_households(self) -> int:
        return self.household_ids.size

    def refresh_nearest(self) -> None:
        for c, cols in enumerate(self.channel_cols):
            idx, d = kernels.nearest_alive(self.dist, cols, self.alive)
            self.nearest_idx[:, c] = idx
            self.nearest_d[:, c] = d

    def active_unorganized(self) -> int:
        return int(np.count_nonzero(self.alive[self.channel_cols[kernels.UNORGANIZED]]))


@dataclass(frozen=True)
class WeeklyMetrics:
    week: int                      # 1-based
    demand_fraction: float
    active_customers: int
    footprint: tuple[int, int, int]
    shares: tuple[float, float, float]
    shares_defined: bool
    active_unorg: int
    shutdowns: int                 # closures at this week's review
    dist_all: float
    dist_he: float
    dist_me: float
    dist_le: float


def _mean(x: np.ndarray) -> float:
    return float(x.mean()) if x.size else 0.0


def step(world: World, week_index: int, rng: np.random.Generator) -> WeeklyMetrics:
    """Advance one week: activate households, let each buy once, book sales, review."""
    cfg = world.cfg
    frac = demand_fraction(world.calendar, week_index)
    act = activate(np.arange(world.n_households), frac, rng)
    rows = act.ids
    level = act.level
    chosen, chan, _, travel = kernels.choose_batch(
        world.nearest_idx[rows], world.nearest_d[rows], level, world.bracket_store,
        world.dist_worth, world.d_floor, float(cfg.mobility_n))
    if np.any(chosen < 0):
        raise SimulationError("a customer found no open retailer")

    per_store = np.bincount(chosen, minlength=len(world.states))
    fp = np.bincount(chan, minlength=kernels.N_CHANNELS)
    total = int(fp.sum())
    if total:
        shares = tuple(float(100.0 * f / total) for f in fp)
    else:
        shares = (0.0, 0.0, 0.0)

    # Home delivery means no travel for e-pharmacy customers.
    travel = np.where(chan == kernels.EPHARM, 0.0, travel)
    if cfg.round_trip:
        travel = 2.0 * travel

    for i, s in enumerate(world.states):
        s.record_week(int(per_store[i]))

    week = week_index + 1
    closed = 0
    if week % cfg.review_window == 0:
        for i in world.channel_cols[kernels.UNORGANIZED]:
            s = world.states[i]
            if s.alive and review_viability(s, cfg.review_window, week) is Decision.SHUTDOWN:
                world.alive[i] = False
                closed += 1
        if closed:
            world.refresh_nearest()

    return WeeklyMetrics(
        week=week, demand_fraction=frac, active_customers=int(rows.size),
        footprint=(int(fp[0]), int(fp[1]), int(fp[2])), shares=shares,
        shares_defined=bool(total), active_unorg=world.active_unorganized(), shutdowns=closed,
        dist_all=_mean(travel),
        dist_he=_mean(travel[level == Emergency.HE]),
        dist_me=_mean(travel[level == Emergency.ME]),
        dist_le=_mean(travel[level == Emergency.LE]))


@dataclass
class RunSummary:
    weekly: list[WeeklyMetrics]
    shutdown_weeks: dict[int, int] = field(default_factory=dict)   # retailer id -> week

    def _series(self, name: str) -> np.ndarray:
        return np.array([getattr(m, name) for m in self.weekly], dtype=float)

    @property
    def avg_footprint(self) -> tuple[float, float, float]:
        a = np.array([m.footprint for m in self.weekly], dtype=float).mean(axis=0)
        return tuple(float(x) for x in a)

    @property
    def avg_shares(self) -> tuple[float, float, float]:
        a = np.array([m.shares for m in self.weekly], dtype=float).mean(axis=0)
        return tuple(float(x) for x in a)

    @property
    def shutdowns(self) -> int:
        return len(self.shutdown_weeks)

    @property
    def final_active_unorg(self) -> int:
        return self.weekly[-1].active_unorg

    def avg(self, name: str) -> float:
        return float(self._series(name).mean())


def make_rng(seed: int, row: int | None = None) -> np.random.Generator:
    """Demand stream for a run; sweep rows get independent child streams."""
    if row is None:
        return np.random.default_rng(np.random.SeedSequence(seed))
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(row,)))


def run(cfg: ScenarioConfig, sites: Sequence[SiteRecord] | None = None,
        rng: np.random.Generator | None = None,
        tables: dict[Emergency, PartWorthTable] | None = None) -> RunSummary:
    world = World(cfg, sites, tables)
    rng = make_rng(cfg.seed) if rng is None else rng
    weekly = [step(world, w, rng) for w in range(cfg.horizon_weeks)]
    closed = {s.id: s.shutdown_week for s in world.states if not s.alive}
    return RunSummary(weekly, closed)


# --------------------------------------------------------------------------
# sensitivity scenarios
# --------------------------------------------------------------------------

BEST_CASE = {
    "unorganized": {"discount": "H", "quality": "H", "assortment": "H", "service": "H"},
    "organized": {"discount": "L", "quality": "H", "assortment": "H", "service": "L"},
    "epharm": {"discount": "L", "quality": "H", "assortment": "H", "service": "L"},
}
WORST_CASE = {
    "unorganized": {"discount": "L", "quality": "H", "assortment": "L", "service": "L"},
    "organized": {"discount": "H", "quality": "H", "assortment": "H", "service": "H"},
    "epharm": {"discount": "H", "quality": "H", "assortment": "H", "service": "H"},
}


def sensitivity_suite(cfg: ScenarioConfig, sites: Sequence[SiteRecord] | None = None
                      ) -> dict[str, RunSummary]:
    """Base, best and worst case for unorganized stores on one town and one seed."""
    sites = load_town(cfg) if sites is None else sites
    tables = load_tables(cfg)
    cases = {"base": cfg, "best": cfg.with_profiles(**BEST_CASE),
             "worst": cfg.with_profiles(**WORST_CASE)}
    return {name: run(c, sites, tables=tables) for name, c in cases.items()}


# --------------------------------------------------------------------------
# CSV output
# --------------------------------------------------------------------------

WEEKLY_HEADER = ["week", "fp_unorg", "fp_org", "fp_eph", "share_unorg", "share_org",
                 "share_eph", "active_unorg", "dist_all", "dist_he", "dist_me", "dist_le",
                 "shares_defined", "active_customers", "shutdowns", "demand_fraction"]
SUMMARY_HEADER = ["avg_fp_unorg", "avg_fp_org", "avg_fp_eph", "share_unorg", "share_org",
                  "share_eph", "shutdowns", "final_active_unorg",
                  "avg_dist_all", "avg_dist_he", "avg_dist_me", "avg_dist_le"]


def _fmt(x: float) -> str:
    return repr(round(float(x), 10)) if math.isfinite(x) else str(x)


def write_weekly(summary: RunSummary, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WEEKLY_HEADER)
        for m in summary.weekly:
            w.writerow([m.week, *m.footprint, *(_fmt(s) for s in m.shares), m.active_unorg,
                        _fmt(m.dist_all), _fmt(m.dist_he), _fmt(m.dist_me), _fmt(m.dist_le),
                        int(m.shares_defined), m.active_customers, m.shutdowns,
                        _fmt(m.demand_fraction)])


def summary_row(s: RunSummary) -> list:
    return [*(_fmt(x) for x in s.avg_footprint), *(_fmt(x) for x in s.avg_shares),
            s.shutdowns, s.final_active_unorg, _fmt(s.avg("dist_all")), _fmt(s.avg("dist_he")),
            _fmt(s.avg("dist_me")), _fmt(s.avg("dist_le"))]


def write_summary(summaries: dict[str, RunSummary], path: str | Path,
                  label: str | None = "scenario") -> None:
    """One row per run; ``label`` adds a leading name column (None for a single run)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(([label] if label else []) + SUMMARY_HEADER)
        for name, s in summaries.items():
            w.writerow(([name] if label else []) + summary_row(s))
