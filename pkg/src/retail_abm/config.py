"""Scenario configuration and the flat ``key = value`` config file format."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .choice import Level, RetailerProfile
from .geo import Channel
from . import market

DATA_ENV = "RETAIL_ABM_DATA"


class ConfigError(ValueError):
    """Bad, missing or unknown configuration key."""


def data_dir() -> Path:
    """Bundled data directory, overridable with ``$RETAIL_ABM_DATA``."""
    env = os.environ.get(DATA_ENV)
    if env:
        return Path(env)
    return Path(str(resources.files("retail_abm") / "data"))


def data_path(name: str) -> Path:
    return data_dir() / name


# Base-case store levels: (discount, quality, assortment, service).
BASE_LEVELS = {
    Channel.UNORGANIZED: ("M", "H", "L", "H"),
    Channel.ORGANIZED: ("H", "H", "H", "M"),
    Channel.EPHARM: ("H", "H", "H", "L"),
}


def make_profile(channel: Channel, discount, quality, assortment, service) -> RetailerProfile:
    lv = [x if isinstance(x, Level) else Level.parse(x)
          for x in (discount, quality, assortment, service)]
    return RetailerProfile(channel, *lv)


def base_profiles() -> dict[Channel, RetailerProfile]:
    return {ch: make_profile(ch, *lv) for ch, lv in BASE_LEVELS.items()}


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    town_seed: int = 0
    horizon_weeks: int = 312
    mobility_n: float = 0.5
    sites_file: str | None = None
    households: int = 20000
    n_unorganized: int = 159
    n_organized: int = 7
    n_epharm: int = 4
    extent_km: float = 10.0
    n_clusters: int = 12
    partworths_file: str | None = None
    diseases_file: str | None = None
    base_mean_fraction: float = 0.8
    annual_growth: float = 0.096
    in_season_weight: float = 2.0
    order_size: float = market.ORDER_SIZE
    gross_margin_pct: float = market.GROSS_MARGIN_PCT
    weekly_cost: float = market.WEEKLY_COST
    weekly_min_profit: float = market.MONTHLY_READING_MIN_PROFIT
    review_window: int = market.REVIEW_WINDOW_WEEKS
    discount_pct_l: float = market.DISCOUNT_PCT[Level.L1]
    discount_pct_m: float = market.DISCOUNT_PCT[Level.L2]
    discount_pct_h: float = market.DISCOUNT_PCT[Level.L3]
    d_min_km: float = 0.1
    epharm_min_km: float = 10.0
    round_trip: bool = False
    profiles: Mapping[Channel, RetailerProfile] = field(default_factory=base_profiles)

    def __post_init__(self):
        if self.horizon_weeks < 1:
            raise ConfigError("horizon_weeks must be >= 1")
        if self.mobility_n < 0:
            raise ConfigError("mobility_n must be >= 0")
        if self.review_window < 1:
            raise ConfigError("review_window must be >= 1")
        if set(self.profiles) != set(Channel):
            raise ConfigError("profiles must cover all three channels")
        for ch, p in self.profiles.items():
            if p.channel is not ch:
                raise ConfigError(f"profile for {ch.kind} carries channel {p.channel.kind}")

    def discount_pct(self, level: Level) -> float:
        return (self.discount_pct_l, self.discount_pct_m, self.discount_pct_h)[level]

    def with_profiles(self, **levels: Mapping[str, str]) -> "ScenarioConfig":
        """Copy with some store attributes changed, e.g. ``unorganized={"discount": "H"}``."""
        profiles = dict(self.profiles)
        for kind, changes in levels.items():
            ch = Channel.from_kind(kind)
            profiles[ch] = dataclasses.replace(
                profiles[ch], **{k: Level.parse(v) if isinstance(v, str) else v
                                 for k, v in changes.items()})
        return dataclasses.replace(self, profiles=profiles)

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


# --------------------------------------------------------------------------
# key = value files
# --------------------------------------------------------------------------

_SCALAR_KEYS = {
    "seed": ("seed", int),
    "town_seed": ("town_seed", int),
    "horizon_weeks": ("horizon_weeks", int),
    "mobility_n": ("mobility_n", float),
    "sites_file": ("sites_file", str),
    "town.households": ("households", int),
    "town.unorganized": ("n_unorganized", int),
    "town.organized": ("n_organized", int),
    "town.epharm": ("n_epharm", int),
    "town.extent_km": ("extent_km", float),
    "town.clusters": ("n_clusters", int),
    "partworths_file": ("partworths_file", str),
    "diseases_file": ("diseases_file", str),
    "demand.base_mean_fraction": ("base_mean_fraction", float),
    "demand.annual_growth": ("annual_growth", float),
    "demand.in_season_weight": ("in_season_weight", float),
    "order_size": ("order_size", float),
    "gross_margin_pct": ("gross_margin_pct", float),
    "weekly_cost": ("weekly_cost", float),
    "weekly_min_profit": ("weekly_min_profit", float),
    "review_window": ("review_window", int),
    "discount_pct.L": ("discount_pct_l", float),
    "discount_pct.M": ("discount_pct_m", float),
    "discount_pct.H": ("discount_pct_h", float),
    "distance.min_km": ("d_min_km", float),
    "distance.epharm_min_km": ("epharm_min_km", float),
    "distance.round_trip": ("round_trip", "bool"),
}
# Empty value allowed (means "not set") only for these.
_OPTIONAL = {"sites_file", "partworths_file", "diseases_file"}
_PROFILE_FIELDS = ("discount", "quality", "assortment", "service")
_PROFILE_KEYS = {f"{ch.kind}.{f}" for ch in Channel for f in _PROFILE_FIELDS}
REQUIRED_KEYS = tuple(_SCALAR_KEYS) + tuple(sorted(_PROFILE_KEYS))


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if k in out:
            raise ConfigError(f"{source}:{n}: duplicate key {k!r}")
        out[k] = v
    return out


def _convert(key: str, value: str, kind):
    if kind == "bool":
        low = value.lower()
        if low in ("1", "true", "yes"):
            return True
        if low in ("0", "false", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind.__name__}") from None


def config_from_mapping(kv: Mapping[str, str], base_dir: Path | None = None) -> ScenarioConfig:
    """Build a config from a complete key/value mapping; every key is required."""
    unknown = sorted(set(kv) - set(REQUIRED_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    missing = [k for k in REQUIRED_KEYS if k not in kv]
    if missing:
        raise ConfigError(f"missing config key: {missing[0]}"
                          + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))
    values: dict[str, Any] = {}
    for key, (attr, kind) in _SCALAR_KEYS.items():
        raw = kv[key]
        if raw == "":
            if attr not in _OPTIONAL:
                raise ConfigError(f"{key}: empty value")
            values[attr] = None
            continue
        val = _convert(key, raw, kind)
        if attr in _OPTIONAL and base_dir is not None and not Path(val).is_absolute():
            val = str(base_dir / val)
        values[attr] = val
    profiles = {}
    for ch in Channel:
        try:
            profiles[ch] = make_profile(ch, *(kv[f"{ch.kind}.{f}"] for f in _PROFILE_FIELDS))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{ch.kind}: bad attribute level ({exc})") from None
    return ScenarioConfig(profiles=profiles, **values)


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    kv = parse_kv(path.read_text(encoding="utf-8"), str(path))
    return config_from_mapping(kv, base_dir=path.parent)


def config_to_mapping(cfg: ScenarioConfig) -> dict[str, str]:
    out: dict[str, str] = {}
    for key, (attr, kind) in _SCALAR_KEYS.items():
        v = getattr(cfg, attr)
        if v is None:
            out[key] = ""
        elif kind == "bool":
            out[key] = "true" if v else "false"
        else:
            out[key] = repr(v) if isinstance(v, float) else str(v)
    for ch in Channel:
        p = cfg.profiles[ch]
        for f in _PROFILE_FIELDS:
            out[f"{ch.kind}.{f}"] = getattr(p, f).letter
    return out


def dump_config(cfg: ScenarioConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config_to_mapping(cfg).items())
