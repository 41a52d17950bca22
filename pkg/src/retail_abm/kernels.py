"""Hot inner loops of the simulator.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version with identical semantics.  The numba path is used when numba imports
cleanly and ``RETAIL_ABM_DISABLE_JIT`` is unset (or ``0``); otherwise the
numpy path is bound.  Both are importable directly as ``numba_kernels`` /
``numpy_kernels`` so tests and the benchmark can compare them.
"""
from __future__ import annotations

import os
import types

import numpy as np

EARTH_RADIUS_KM = 6371.0

# Channel codes double as choice precedence: lower code wins exact ties.
UNORGANIZED, ORGANIZED, EPHARM = 0, 1, 2
N_CHANNELS = 3


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------

def _np_haversine_matrix(lat1, lon1, lat2, lon2):
    p1 = np.radians(lat1)[:, None]
    p2 = np.radians(lat2)[None, :]
    dphi = p2 - p1
    dlmb = np.radians(lon2)[None, :] - np.radians(lon1)[:, None]
    h = np.sin(dphi / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.minimum(h, 1.0)))


def _np_nearest_alive(dist, cols, alive):
    """Per row, the alive column in ``cols`` with the smallest distance.

    ``cols`` must be sorted by retailer id so ``argmin``'s first-hit rule
    gives the lowest-id tie break.  Rows with no alive column get -1 / inf.
    """
    n = dist.shape[0]
    live = cols[alive[cols]]
    if live.size == 0:
        return np.full(n, -1, dtype=np.int64), np.full(n, np.inf)
    sub = dist[:, live]
    j = np.argmin(sub, axis=1)
    return live[j].astype(np.int64), sub[np.arange(n), j]


def _np_choose_batch(nearest_idx, nearest_d, level, bracket_store, dist_worth,
                     d_floor, n_exp):
    """Vectorised choice for a batch of active customers.

    nearest_idx, nearest_d : (a, 3) nearest retailer index / km per channel,
        index -1 when a channel has no alive retailer.
    level : (a,) emergency level code 0=LE, 1=ME, 2=HE.
    bracket_store : (3, R) store-attribute part-worth sum per level/retailer.
    dist_worth : (3, 3) distance part-worth per level and distance bin.
    d_floor : (3,) minimum effective distance per channel.

    Returns chosen retailer index, chosen channel, utility and geometric
    distance of the chosen store (all length ``a``).
    """
    a = nearest_idx.shape[0]
    d_eff = np.maximum(nearest_d, d_floor[None, :])
    dbin = np.where(d_eff <= 2.0, 0, np.where(d_eff <= 10.0, 1, 2))
    lvl = level[:, None]
    safe_idx = np.where(nearest_idx >= 0, nearest_idx, 0)
    bracket = bracket_store[lvl, safe_idx] + dist_worth[lvl, dbin]
    util = bracket / d_eff ** n_exp
    util = np.where(nearest_idx >= 0, util, -np.inf)
    ch = np.argmax(util, axis=1)
    rows = np.arange(a)
    return (nearest_idx[rows, ch], ch.astype(np.int64), util[rows, ch],
            nearest_d[rows, ch])


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

def _build_numba():
    import numba

    @numba.njit(cache=True)
    def haversine_matrix(lat1, lon1, lat2, lon2):
        n, m = lat1.shape[0], lat2.shape[0]
        out = np.empty((n, m))
        r = np.pi / 180.0
        for i in range(n):
            p1 = lat1[i] * r
            c1 = np.cos(p1)
            for j in range(m):
                p2 = lat2[j] * r
                sp = np.sin((p2 - p1) / 2.0)
                sl = np.sin((lon2[j] - lon1[i]) * r / 2.0)
                h = sp * sp + c1 * np.cos(p2) * sl * sl
                if h > 1.0:
                    h = 1.0
                out[i, j] = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(h))
        return out

    @numba.njit(cache=True)
    def nearest_alive(dist, cols, alive):
        n = dist.shape[0]
        idx = np.full(n, -1, dtype=np.int64)
        best = np.full(n, np.inf)
        for i in range(n):
            for c in cols:
                if alive[c] and dist[i, c] < best[i]:
                    best[i] = dist[i, c]
                    idx[i] = c
        return idx, best

    @numba.njit(cache=True)
    def choose_batch(nearest_idx, nearest_d, level, bracket_store, dist_worth,
                     d_floor, n_exp):
        a = nearest_idx.shape[0]
        chosen = np.empty(a, dtype=np.int64)
        chan = np.empty(a, dtype=np.int64)
        util = np.empty(a)
        travel = np.empty(a)
        for i in range(a):
            lv = level[i]
            best_u = -np.inf
            best_c = -1
            for c in range(3):
                r = nearest_idx[i, c]
                if r < 0:
                    continue
                d = nearest_d[i, c]
                de = d if d > d_floor[c] else d_floor[c]
                if de <= 2.0:
                    b = 0
                elif de <= 10.0:
                    b = 1
                else:
                    b = 2
                u = (bracket_store[lv, r] + dist_worth[lv, b]) / de ** n_exp
                if best_c < 0 or u > best_u:
                    best_u = u
                    best_c = c
            chan[i] = best_c
            util[i] = best_u
            if best_c >= 0:
                chosen[i] = nearest_idx[i, best_c]
                travel[i] = nearest_d[i, best_c]
            else:
                chosen[i] = -1
                travel[i] = np.nan
        return chosen, chan, util, travel

    return types.SimpleNamespace(
        haversine_matrix=haversine_matrix,
        nearest_alive=nearest_alive,
        choose_batch=choose_batch,
    )


numpy_kernels = types.SimpleNamespace(
    haversine_matrix=_np_haversine_matrix,
    nearest_alive=_np_nearest_alive,
    choose_batch=_np_choose_batch,
)

try:
    numba_kernels = _build_numba()
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_kernels = None

JIT_DISABLED = os.environ.get("RETAIL_ABM_DISABLE_JIT", "0") not in ("", "0")
USING_NUMBA = numba_kernels is not None and not JIT_DISABLED
active = numba_kernels if USING_NUMBA else numpy_kernels

haversine_matrix = active.haversine_matrix
nearest_alive = active.nearest_alive
choose_batch = active.choose_batch
