"""3x3x3 full-factorial experiments over the engine and their fixed-effects ANOVA."""
from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .choice import Level
from .config import ScenarioConfig
from .engine import RunSummary, load_tables, load_town, make_rng, run
from .geo import Channel, SiteRecord
from .special import f_upper_tail

N_RUNS = 27
CHANNEL_ORDER = (Channel.UNORGANIZED, Channel.ORGANIZED, Channel.EPHARM)
_CHANNEL_LABEL = {Channel.UNORGANIZED: "Unorganized", Channel.ORGANIZED: "Organized",
                  Channel.EPHARM: "E-Pharmacy"}
MODES = {"discount": "discount", "quality": "quality"}


@dataclass(frozen=True)
class FactorialDesign:
    mode: str
    runs: tuple[tuple[Level, Level, Level], ...]

    @property
    def attribute(self) -> str:
        return MODES[self.mode]

    @property
    def factor_names(self) -> tuple[str, str, str]:
        return tuple(f"{_CHANNEL_LABEL[ch]} {self.attribute}" for ch in CHANNEL_ORDER)

    def bind(self, cfg: ScenarioConfig, row: int) -> ScenarioConfig:
        """Config for one design row: only the swept attribute changes."""
        return cfg.with_profiles(**{ch.kind: {self.attribute: lv}
                                    for ch, lv in zip(CHANNEL_ORDER, self.runs[row])})


def full_factorial(mode: str = "discount") -> FactorialDesign:
    """All 27 level combinations in standard order, first factor varying slowest."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {sorted(MODES)}")
    return FactorialDesign(mode, tuple(itertools.product(Level, repeat=3)))


# --------------------------------------------------------------------------
# ANOVA
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AnovaRow:
    source: str
    df: int
    ss: float
    ms: float
    f: float
    p: float
    contribution: float


@dataclass(frozen=True)
class AnovaTable:
    rows: tuple[AnovaRow, ...]
    r2: float
    adj_r2: float
    degenerate: bool

    def row(self, source: str) -> AnovaRow:
        for r in self.rows:
            if r.source == source:
                return r
        raise KeyError(source)


def _cube(design: FactorialDesign | None, response: Sequence[float]) -> np.ndarray:
    y = np.asarray(response, dtype=float)
    if y.shape != (N_RUNS,):
        raise ValueError(f"expected {N_RUNS} responses, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise ValueError("responses must be finite")
    design = design or full_factorial()
    cube = np.empty((3, 3, 3))
    for (a, b, c), v in zip(design.runs, y):
        cube[a, b, c] = v
    return cube


def anova3(response: Sequence[float], design: FactorialDesign | None = None) -> AnovaTable:
    """Balanced fixed-effects ANOVA; the three-way interaction is the error term."""
    design = design or full_factorial()
    y = _cube(design, response)
    g = y.mean()
    mains = [y.mean(axis=tuple(k for k in range(3) if k != i)) - g for i in range(3)]
    ss_main = [9.0 * float(np.sum(m ** 2)) for m in mains]
    ss_pair = []
    for i, j in ((0, 1), (0, 2), (1, 2)):
        other = 3 - i - j
        cell = y.mean(axis=other) - g
        inter = cell - mains[i][:, None] - mains[j][None, :]
        ss_pair.append(3.0 * float(np.sum(inter ** 2)))
    ss_total = float(np.sum((y - g) ** 2))
    ss_err = max(ss_total - sum(ss_main) - sum(ss_pair), 0.0)
    degenerate = ss_total == 0.0 or ss_err == 0.0

    names = design.factor_names
    sources = list(names) + [f"{names[i]}*{names[j]}" for i, j in ((0, 1), (0, 2), (1, 2))]
    dfs = [2, 2, 2, 4, 4, 4]
    ms_err = ss_err / 8.0
    rows = []
    for src, df, ss in zip(sources, dfs, ss_main + ss_pair):
        ms = ss / df
        if ms_err > 0:
            f = ms / ms_err
            p = f_upper_tail(f, df, 8)
        else:
            f = p = math.nan
        contrib = 100.0 * ss / ss_total if ss_total > 0 else 0.0
        rows.append(AnovaRow(src, df, ss, ms, f, p, contrib))
    rows.append(AnovaRow("Error", 8, ss_err, ms_err, math.nan, math.nan,
                         100.0 * ss_err / ss_total if ss_total > 0 else 0.0))
    rows.append(AnovaRow("Total", 26, ss_total, math.nan, math.nan, math.nan,
                         100.0 if ss_total > 0 else 0.0))
    if ss_total > 0:
        r2 = 100.0 * (1.0 - ss_err / ss_total)
        adj = 100.0 * (1.0 - (ss_err / 8.0) / (ss_total / 26.0))
    else:
        r2 = adj = math.nan
    return AnovaTable(tuple(rows), r2, adj, degenerate)


ANOVA_HEADER = ["source", "df", "adj_ss", "adj_ms", "f", "p", "contribution"]


def _num(x: float) -> str:
    return "" if math.isnan(x) else repr(round(float(x), 10))


def write_anova(table: AnovaTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ANOVA_HEADER)
        for r in table.rows:
            w.writerow([r.source, r.df, _num(r.ss), _num(r.ms), _num(r.f), _num(r.p),
                        _num(r.contribution)])
        w.writerow(["R-Sq", "", _num(table.r2), "", "", "", ""])
        w.writerow(["R-Sq(adj)", "", _num(table.adj_r2), "", "", "", ""])


# --------------------------------------------------------------------------
# effect tables
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EffectTables:
    factor_names: tuple[str, str, str]
    grand_mean: float
    main: tuple[np.ndarray, np.ndarray, np.ndarray]          # level means, (3,) each
    pairs: dict[tuple[int, int], np.ndarray]                 # cell means, (3, 3)


def effect_tables(response: Sequence[float],
                  design: FactorialDesign | None = None) -> EffectTables:
    design = design or full_factorial()
    y = _cube(design, response)
    main = tuple(y.mean(axis=tuple(k for k in range(3) if k != i)) for i in range(3))
    pairs = {(i, j): y.mean(axis=3 - i - j) for i, j in ((0, 1), (0, 2), (1, 2))}
    return EffectTables(design.factor_names, float(y.mean()), main, pairs)


EFFECTS_HEADER = ["factor_a", "level_a", "factor_b", "level_b", "mean"]


def write_effects(eff: EffectTables, path: str | Path) -> None:
    """Main-effect rows leave the second factor blank; interaction rows fill both."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EFFECTS_HEADER)
        for name, means in zip(eff.factor_names, eff.main):
            for lv, m in zip(Level, means):
                w.writerow([name, lv.letter, "", "", _num(m)])
        for (i, j), cells in eff.pairs.items():
            for a in Level:
                for b in Level:
                    w.writerow([eff.factor_names[i], a.letter, eff.factor_names[j], b.letter,
                                _num(cells[a, b])])


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------

RESPONSES = ("fp_unorg", "fp_org", "fp_eph", "share_unorg", "share_org", "share_eph",
             "shutdowns")
SWEEP_HEADER = ["run", "f1", "f2", "f3", *RESPONSES]


@dataclass
class SweepResult:
    design: FactorialDesign
    summaries: list[RunSummary]

    def response(self, name: str) -> np.ndarray:
        if name not in RESPONSES:
            raise KeyError(f"unknown response {name!r}")
        return np.array([_responses(s)[name] for s in self.summaries])


def _responses(s: RunSummary) -> dict[str, float]:
    fp, sh = s.avg_footprint, s.avg_shares
    return dict(zip(RESPONSES, (*fp, *sh, float(s.shutdowns))))


_WORKER: dict = {}


def _init_worker(sites, tables):
    _WORKER["sites"] = sites
    _WORKER["tables"] = tables


def _run_row(args) -> RunSummary:
    cfg, row, seed = args
    try:
        return run(cfg, _WORKER["sites"], make_rng(seed, row), _WORKER["tables"])
    except Exception as exc:
        raise RuntimeError(f"sweep row {row + 1} failed: {exc}") from exc


def sweep(cfg: ScenarioConfig, design: FactorialDesign, seed: int | None = None,
          workers: int = 1, sites: Sequence[SiteRecord] | None = None) -> SweepResult:
    """One engine run per design row on a shared town.

    Row ``r`` draws demand from a child stream keyed by (seed, r), so results
    do not depend on worker count or completion order.
    """
    seed = cfg.seed if seed is None else seed
    sites = list(load_town(cfg) if sites is None else sites)
    tables = load_tables(cfg)
    jobs = [(design.bind(cfg, r), r, seed) for r in range(len(design.runs))]
    if workers <= 1:
        _init_worker(sites, tables)
        out = [_run_row(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(sites, tables)) as pool:
            out = list(pool.map(_run_row, jobs))
    return SweepResult(design, out)


def write_sweep(result: SweepResult, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r, (levels, s) in enumerate(zip(result.design.runs, result.summaries), 1):
            resp = _responses(s)
            w.writerow([r, *(lv.letter for lv in levels),
                        *(_num(resp[k]) for k in RESPONSES[:6]), int(resp["shutdowns"])])


def read_response(path: str | Path, column: str | None = None) -> np.ndarray:
    """Read 27 responses from a plain one-value-per-line file or a named CSV column."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if column is None:
        try:
            vals = [float(ln) for ln in lines]
        except ValueError:
            raise ValueError(f"{path}: expected one number per line (or pass a column name)")
    else:
        reader = csv.DictReader(lines)
        if column not in (reader.fieldnames or []):
            raise ValueError(f"{path}: no column {column!r}")
        vals = [float(rec[column]) for rec in reader]
    if len(vals) != N_RUNS:
        raise ValueError(f"{path}: expected {N_RUNS} responses, got {len(vals)}")
    return np.array(vals)
