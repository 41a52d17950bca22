"""Spatial points, site files and synthetic towns."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .kernels import EARTH_RADIUS_KM

KM_PER_DEG_LAT = EARTH_RADIUS_KM * math.pi / 180.0
SITE_HEADER = ["id", "kind", "lat", "lon"]

# Anchor of generated towns (south of Kolkata); only the local geometry matters.
TOWN_ORIGIN = (22.30, 88.25)


class Channel(IntEnum):
    """Retail channel; the integer value is the tie-break precedence."""

    UNORGANIZED = kernels.UNORGANIZED
    ORGANIZED = kernels.ORGANIZED
    EPHARM = kernels.EPHARM

    @property
    def kind(self) -> str:
        return _CHANNEL_KIND[self]

    @classmethod
    def from_kind(cls, kind: str) -> "Channel":
        return _KIND_CHANNEL[kind]


_CHANNEL_KIND = {Channel.UNORGANIZED: "unorganized", Channel.ORGANIZED: "organized",
                 Channel.EPHARM: "epharm"}
_KIND_CHANNEL = {v: k for k, v in _CHANNEL_KIND.items()}
HOUSEHOLD = "household"
KINDS = (HOUSEHOLD, "unorganized", "organized", "epharm")


class SiteFormatError(ValueError):
    """A site file row could not be parsed or failed validation."""


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class SiteRecord:
    id: int
    kind: str
    point: GeoPoint

    @property
    def channel(self) -> Channel | None:
        return None if self.kind == HOUSEHOLD else Channel.from_kind(self.kind)


def distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle (haversine) distance in km."""
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    h = (math.sin((p2 - p1) / 2.0) ** 2
         + math.cos(p1) * math.cos(p2) * math.sin(math.radians(b.lon - a.lon) / 2.0) ** 2)
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(h, 1.0)))


def distance_matrix(a: Sequence[SiteRecord], b: Sequence[SiteRecord]) -> np.ndarray:
    """Pairwise km between two record lists, shape ``(len(a), len(b))``."""
    la = np.array([r.point.lat for r in a], dtype=float)
    oa = np.array([r.point.lon for r in a], dtype=float)
    lb = np.array([r.point.lat for r in b], dtype=float)
    ob = np.array([r.point.lon for r in b], dtype=float)
    return kernels.haversine_matrix(la, oa, lb, ob)


# --------------------------------------------------------------------------
# site files
# --------------------------------------------------------------------------

def load_sites(path: str | Path) -> list[SiteRecord]:
    """Parse a site CSV (``id,kind,lat,lon``).

    Raises SiteFormatError naming the 1-based file line for malformed rows,
    unknown kinds, out-of-range coordinates and duplicate ids.
    """
    records: list[SiteRecord] = []
    seen: set[int] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return records
        if [h.strip() for h in header] != SITE_HEADER:
            raise SiteFormatError(f"line 1: expected header {','.join(SITE_HEADER)}, got {header}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 4:
                raise SiteFormatError(f"line {line}: expected 4 fields, got {len(row)}")
            try:
                sid = int(row[0])
                lat, lon = float(row[2]), float(row[3])
            except ValueError as exc:
                raise SiteFormatError(f"line {line}: {exc}") from None
            kind = row[1].strip()
            if kind not in KINDS:
                raise SiteFormatError(f"line {line}: unknown kind {kind!r}")
            try:
                point = GeoPoint(lat, lon)
            except ValueError as exc:
                raise SiteFormatError(f"line {line}: {exc}") from None
            if sid in seen:
                raise SiteFormatError(f"line {line}: duplicate id {sid}")
            seen.add(sid)
            records.append(SiteRecord(sid, kind, point))
    return records


def write_sites(records: Iterable[SiteRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SITE_HEADER)
        for r in records:
            w.writerow([r.id, r.kind, repr(r.point.lat), repr(r.point.lon)])


def validate_counts(records: Sequence[SiteRecord], expected: dict[str, int]) -> None:
    counts = {k: 0 for k in KINDS}
    for r in records:
        counts[r.kind] += 1
    bad = {k: (counts[k], n) for k, n in expected.items() if counts[k] != n}
    if bad:
        raise SiteFormatError("kind counts differ from expected: "
                              + ", ".join(f"{k}: got {g}, want {w}" for k, (g, w) in bad.items()))


# --------------------------------------------------------------------------
# synthetic town
# --------------------------------------------------------------------------

def _to_geo(xy_km: np.ndarray) -> np.ndarray:
    lat0, lon0 = TOWN_ORIGIN
    lat = lat0 + xy_km[:, 1] / KM_PER_DEG_LAT
    lon = lon0 + xy_km[:, 0] / (KM_PER_DEG_LAT * math.cos(math.radians(lat0)))
    return np.round(np.column_stack([lat, lon]), 7)


def generate_town(n_households: int = 20000, n_unorg: int = 159, n_org: int = 7,
                  n_epharm: int = 4, extent_km: float = 10.0, n_clusters: int = 12,
                  seed: int = 0) -> list[SiteRecord]:
    """Clustered synthetic town inside an ``extent_km`` square.

    Households come from a Gaussian mixture; unorganized stores sit at
    randomly chosen household positions (so density-weighted), organized
    stores at the edge of the heaviest clusters (one cluster sigma from the
    centre, random bearing), and e-pharm depots on the square's boundary.
    Ids run households first, then unorganized, organized, epharm.
    """
    for name, val in (("n_households", n_households), ("n_unorg", n_unorg),
                      ("n_org", n_org), ("n_epharm", n_epharm)):
        if val < 0:
            raise ValueError(f"{name} must be >= 0, got {val}")
    if extent_km <= 0:
        raise ValueError(f"extent_km must be > 0, got {extent_km}")
    if n_clusters < 1:
        raise ValueError(f"n_clusters must be >= 1, got {n_clusters}")

    rng = np.random.default_rng(seed)
    margin = 0.1 * extent_km
    centers = rng.uniform(margin, extent_km - margin, size=(n_clusters, 2))
    weights = rng.dirichlet(np.full(n_clusters, 2.0))
    sigma = rng.uniform(0.05, 0.12, size=n_clusters) * extent_km

    def draw(n):
        out = np.empty((0, 2))
        while out.shape[0] < n:
            k = rng.choice(n_clusters, size=2 * (n - out.shape[0]) + 8, p=weights)
            pts = centers[k] + rng.normal(size=(k.size, 2)) * sigma[k, None]
            inside = np.all((pts >= 0.0) & (pts <= extent_km), axis=1)
            out = np.vstack([out, pts[inside]])
        return out[:n]

    households = draw(n_households)
    # Stores at household-like positions, jittered by ~50 m.
    unorg = draw(n_unorg) + rng.normal(scale=0.05, size=(n_unorg, 2))
    unorg = np.clip(unorg, 0.0, extent_km)
    heavy = np.argsort(-weights, kind="stable")
    host = heavy[np.arange(n_org) % n_clusters]
    bearing = rng.uniform(0.0, 2.0 * math.pi, size=n_org)
    org = centers[host] + sigma[host, None] * np.column_stack([np.cos(bearing), np.sin(bearing)])
    org = np.clip(org, 0.0, extent_km)
    # Boundary depots: random edge, random position along it.
    edge = rng.integers(0, 4, size=n_epharm)
    t = rng.uniform(0.0, extent_km, size=n_epharm)
    eph = np.column_stack([
        np.select([edge == 0, edge == 1, edge == 2], [t, extent_km, t], 0.0),
        np.select([edge == 0, edge == 1, edge == 2], [0.0, t, extent_km], t),
    ])

    records: list[SiteRecord] = []
    sid = 1
    for kind, pts in ((HOUSEHOLD, households), ("unorganized", unorg),
                      ("organized", org), ("epharm", eph)):
        for lat, lon in _to_geo(pts.reshape(-1, 2)):
            records.append(SiteRecord(sid, kind, GeoPoint(float(lat), float(lon))))
            sid += 1
    return records


# --------------------------------------------------------------------------
# nearest retailer per channel
# --------------------------------------------------------------------------

def nearest_per_channel(customer: SiteRecord, sites: Sequence[SiteRecord],
                        dead: frozenset[int] | set[int] = frozenset()
                        ) -> dict[Channel, tuple[int, float]]:
    """Nearest alive retailer per channel as ``{channel: (id, km)}``.

    Channels with no alive retailer are absent.  Equal distances resolve to
    the lowest id.
    """
    best: dict[Channel, tuple[int, float]] = {}
    for s in sites:
        ch = s.channel
        if ch is None or s.id in dead:
            continue
        d = distance(customer.point, s.point)
        cur = best.get(ch)
        if cur is None or d < cur[1] or (d == cur[1] and s.id < cur[0]):
            best[ch] = (s.id, d)
    return best
