"""Choice-based conjoint: sample size, design generation, simulation and logit fitting.

Part-worths are effects coded: an attribute with k levels has k-1 free
coefficients and the last level's worth is minus their sum, so each
attribute's worths add up to zero by construction.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .choice import TABLE_ATTRIBUTES, Attribute, Emergency, Level, PartWorthTable

# Short column codes used in dataset files.
ATTRIBUTE_CODES = {Attribute.PRICE_DISCOUNT: "P", Attribute.QUALITY: "v",
                   Attribute.ASSORTMENT: "A", Attribute.SERVICE: "S", Attribute.DISTANCE: "d"}


class ConjointError(RuntimeError):
    """Design or estimation failure."""


def min_sample_size(l: int, J: int, T: int) -> int:
    """Smallest respondent count with N >= 500 l / (J T)."""
    if l <= 0 or J <= 0 or T <= 0:
        raise ValueError("l, J and T must all be > 0")
    # Integer ceiling avoids float round-off on exact quotients.
    return -(-500 * l // (J * T))


# --------------------------------------------------------------------------
# design
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignDiagnostics:
    level_counts: tuple[tuple[int, ...], ...]   # per attribute, count of each level
    balance_deviation: int                      # max - min level count over attributes
    overlap_rate: float                         # share of (task, alt pair, attribute) with equal levels
    duplicate_profiles: int


@dataclass(frozen=True)
class ChoiceDesign:
    n_levels: tuple[int, ...]
    levels: np.ndarray          # (T, J, K) level index per task/alternative/attribute

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=np.int64)
        if lv.ndim != 3 or lv.shape[2] != len(self.n_levels):
            raise ValueError("levels must have shape (T, J, n_attributes)")
        if np.any(lv < 0) or np.any(lv >= np.array(self.n_levels)):
            raise ValueError("level index out of range")
        lv.setflags(write=False)
        object.__setattr__(self, "levels", lv)

    @property
    def T(self) -> int:
        return self.levels.shape[0]

    @property
    def J(self) -> int:
        return self.levels.shape[1]

    def diagnostics(self) -> DesignDiagnostics:
        flat = self.levels.reshape(-1, len(self.n_levels))
        counts = tuple(tuple(int(c) for c in np.bincount(flat[:, k], minlength=n))
                       for k, n in enumerate(self.n_levels))
        dev = max(max(c) - min(c) for c in counts)
        return DesignDiagnostics(counts, dev, _overlap(self.levels) / _pair_cells(self.levels),
                                 _duplicates(self.levels))


def _pair_cells(lv: np.ndarray) -> int:
    T, J, K = lv.shape
    return T * (J * (J - 1) // 2) * K


def _overlap(lv: np.ndarray) -> int:
    eq = lv[:, :, None, :] == lv[:, None, :, :]
    J = lv.shape[1]
    iu = np.triu_indices(J, 1)
    return int(eq[:, iu[0], iu[1], :].sum())


def _duplicates(lv: np.ndarray) -> int:
    eq = np.all(lv[:, :, None, :] == lv[:, None, :, :], axis=3)
    iu = np.triu_indices(lv.shape[1], 1)
    return int(eq[:, iu[0], iu[1]].sum())


def _min_pairs(J: int, n: int) -> int:
    """Fewest equal-level pairs when J alternatives share n levels."""
    q, r = divmod(J, n)
    return r * (q + 1) * q // 2 + (n - r) * q * (q - 1) // 2


def generate_design(n_levels: Sequence[int] = (3, 3, 3, 3, 3), T: int = 16, J: int = 4,
                    seed: int = 0, n_swaps: int = 20000) -> ChoiceDesign:
    """Randomized level-balanced design with low within-task overlap.

    Each attribute column starts as a shuffled, balanced repetition of its
    levels.  Random swaps of one attribute's levels between two cells keep
    the balance; a swap is kept when it does not raise the overlap count and
    does not create a duplicate profile within a task.
    """
    n_levels = tuple(int(n) for n in n_levels)
    if not n_levels or min(n_levels) < 1:
        raise ValueError("every attribute needs at least one level")
    if J < 2:
        raise ValueError("J must be >= 2: a task with one alternative offers no choice")
    if T < 1:
        raise ValueError("T must be >= 1")
    if J > math.prod(n_levels):
        raise ValueError(f"J={J} exceeds the {math.prod(n_levels)} distinct profiles")
    if T * J < max(n_levels):
        raise ValueError("T*J must be at least the largest level count")

    rng = np.random.default_rng(seed)
    cells = T * J
    cols = []
    for n in n_levels:
        col = np.tile(np.arange(n), -(-cells // n))[:cells]
        cols.append(rng.permutation(col))
    lv = np.stack(cols, axis=1).reshape(T, J, len(n_levels))

    def task_cost(t: int) -> tuple[int, int]:
        sub = lv[t:t + 1]
        return _duplicates(sub), _overlap(sub)

    cost = [task_cost(t) for t in range(T)]
    K = len(n_levels)
    floor = T * sum(_min_pairs(J, n) for n in n_levels)
    for _ in range(n_swaps):
        if sum(c[1] for c in cost) == floor and not any(c[0] for c in cost):
            break
        k = int(rng.integers(K))
        a, b = rng.integers(cells, size=2)
        ta, ja = divmod(int(a), J)
        tb, jb = divmod(int(b), J)
        if lv[ta, ja, k] == lv[tb, jb, k]:
            continue
        before = [cost[ta]] if ta == tb else [cost[ta], cost[tb]]
        lv[ta, ja, k], lv[tb, jb, k] = lv[tb, jb, k], lv[ta, ja, k]
        after = [task_cost(ta)] if ta == tb else [task_cost(ta), task_cost(tb)]
        if tuple(map(sum, zip(*after))) <= tuple(map(sum, zip(*before))):
            cost[ta] = after[0]
            if ta != tb:
                cost[tb] = after[1]
        else:
            lv[ta, ja, k], lv[tb, jb, k] = lv[tb, jb, k], lv[ta, ja, k]
    if any(c[0] for c in cost):
        raise ConjointError("could not remove duplicate profiles within tasks")
    return ChoiceDesign(n_levels, lv)


DESIGN_HEADER = ["task", "alt"] + [f"level_{ATTRIBUTE_CODES[a]}" for a in TABLE_ATTRIBUTES]


def write_design(design: ChoiceDesign, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if len(design.n_levels) == len(TABLE_ATTRIBUTES):
            w.writerow(DESIGN_HEADER)
        else:
            w.writerow(["task", "alt"] + [f"level_{k + 1}" for k in range(len(design.n_levels))])
        for t in range(design.T):
            for j in range(design.J):
                w.writerow([t + 1, j + 1, *(int(x) + 1 for x in design.levels[t, j])])


def read_design(path: str | Path, n_levels: Sequence[int] | None = None) -> ChoiceDesign:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    body = np.array([[int(x) for x in r] for r in rows[1:]], dtype=np.int64)
    T, J = int(body[:, 0].max()), int(body[:, 1].max())
    lv = np.zeros((T, J, body.shape[1] - 2), dtype=np.int64)
    lv[body[:, 0] - 1, body[:, 1] - 1] = body[:, 2:] - 1
    if n_levels is None:
        n_levels = tuple(int(x) + 1 for x in lv.reshape(-1, lv.shape[2]).max(axis=0))
    return ChoiceDesign(tuple(n_levels), lv)


# --------------------------------------------------------------------------
# coding and simulation
# --------------------------------------------------------------------------

def effects_matrix(design: ChoiceDesign) -> np.ndarray:
    """Effects-coded regressors, shape (T, J, P) with P = sum(levels - 1)."""
    blocks = []
    for k, n in enumerate(design.n_levels):
        lv = design.levels[:, :, k]
        x = np.zeros(lv.shape + (n - 1,))
        for m in range(n - 1):
            x[..., m] = (lv == m).astype(float) - (lv == n - 1).astype(float)
        blocks.append(x)
    return np.concatenate(blocks, axis=2)


def worths_to_params(worths: Sequence[Sequence[float]]) -> np.ndarray:
    """Per-attribute level worths -> free coefficients (all levels but the last)."""
    return np.concatenate([np.asarray(w[:-1], dtype=float) for w in worths])


def params_to_worths(theta: np.ndarray, n_levels: Sequence[int]) -> list[np.ndarray]:
    out, i = [], 0
    for n in n_levels:
        b = theta[i:i + n - 1]
        out.append(np.append(b, -b.sum()))
        i += n - 1
    return out


def table_worths(table: PartWorthTable) -> list[list[float]]:
    return [[table.worth(a, l) for l in Level] for a in TABLE_ATTRIBUTES]


@dataclass(frozen=True)
class ChoiceDataset:
    design: ChoiceDesign
    choices: np.ndarray     # (R, T) chosen alternative index

    def __post_init__(self):
        ch = np.asarray(self.choices, dtype=np.int64)
        if ch.ndim != 2 or ch.shape[1] != self.design.T:
            raise ValueError("choices must have shape (R, T)")
        if np.any(ch < 0) or np.any(ch >= self.design.J):
            raise ValueError("chosen index outside [0, J)")
        ch.setflags(write=False)
        object.__setattr__(self, "choices", ch)

    @property
    def R(self) -> int:
        return self.choices.shape[0]


def choice_probabilities(u: np.ndarray) -> np.ndarray:
    """Softmax over the last axis."""
    z = u - u.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def simulate_choices(design: ChoiceDesign, worths: Sequence[Sequence[float]], R: int,
                     seed: int = 0) -> ChoiceDataset:
    """Draw each respondent's choice per task from the logit probabilities."""
    if R < 1:
        raise ValueError("R must be >= 1")
    theta = worths_to_params(worths)
    p = choice_probabilities(effects_matrix(design) @ theta)      # (T, J)
    rng = np.random.default_rng(seed)
    cum = np.cumsum(p, axis=1)
    draws = rng.random((R, design.T))
    choices = (draws[:, :, None] >= cum[None, :, :]).sum(axis=2)
    return ChoiceDataset(design, np.minimum(choices, design.J - 1))


# --------------------------------------------------------------------------
# estimation
# --------------------------------------------------------------------------

def _counts(data: ChoiceDataset) -> tuple[np.ndarray, np.ndarray]:
    """Per task: number of times each alternative was chosen, and respondents."""
    n = np.zeros((data.design.T, data.design.J))
    for t in range(data.design.T):
        n[t] = np.bincount(data.choices[:, t], minlength=data.design.J)
    return n, n.sum(axis=1)


def log_likelihood(theta: np.ndarray, data: ChoiceDataset) -> float:
    X = effects_matrix(data.design)
    u = X @ theta
    m = u.max(axis=1, keepdims=True)
    lse = (m + np.log(np.exp(u - m).sum(axis=1, keepdims=True)))[:, 0]
    n, tot = _counts(data)
    return float((n * u).sum() - (tot * lse).sum())


def score(theta: np.ndarray, data: ChoiceDataset) -> np.ndarray:
    X = effects_matrix(data.design)
    p = choice_probabilities(X @ theta)
    n, tot = _counts(data)
    xbar = np.einsum("tj,tjp->tp", p, X)
    return np.einsum("tj,tjp->p", n, X) - (tot[:, None] * xbar).sum(axis=0)


def hessian(theta: np.ndarray, data: ChoiceDataset) -> np.ndarray:
    X = effects_matrix(data.design)
    p = choice_probabilities(X @ theta)
    _, tot = _counts(data)
    xbar = np.einsum("tj,tjp->tp", p, X)
    d = X - xbar[:, None, :]
    return -np.einsum("t,tj,tjp,tjq->pq", tot, p, d, d)


@dataclass(frozen=True)
class MnlFit:
    n_levels: tuple[int, ...]
    theta: np.ndarray
    cov: np.ndarray
    worths: list[np.ndarray]
    se: list[np.ndarray]
    log_likelihood: float
    iterations: int
    gradient_norm: float
    trace: tuple[float, ...] = field(default=())   # LL after each accepted step

    def p_values(self) -> list[np.ndarray]:
        """Two-sided Wald p-values per level."""
        return [np.array([math.erfc(abs(w) / s / math.sqrt(2.0)) if s > 0 else math.nan
                          for w, s in zip(ws, ss)]) for ws, ss in zip(self.worths, self.se)]


def _level_se(cov: np.ndarray, n_levels: Sequence[int]) -> list[np.ndarray]:
    out, i = [], 0
    for n in n_levels:
        block = cov[i:i + n - 1, i:i + n - 1]
        # Last level = -(sum of the free coefficients).
        last = float(block.sum())
        out.append(np.sqrt(np.append(np.diag(block), last)))
        i += n - 1
    return out


def _check_levels_observed(data: ChoiceDataset) -> None:
    flat = data.design.levels.reshape(-1, len(data.design.n_levels))
    for k, n in enumerate(data.design.n_levels):
        missing = sorted(set(range(n)) - set(flat[:, k].tolist()))
        if missing:
            raise ConjointError(f"attribute {k} level(s) {[m + 1 for m in missing]} never shown")


def _deficient_attribute(info: np.ndarray, n_levels: Sequence[int]) -> int | None:
    i = 0
    for k, n in enumerate(n_levels):
        block = info[i:i + n - 1, i:i + n - 1]
        if n > 1 and np.linalg.matrix_rank(block) < n - 1:
            return k
        i += n - 1
    return None


def fit_mnl(data: ChoiceDataset, tol: float = 1e-8, max_iter: int = 100) -> MnlFit:
    """Conditional-logit MLE by damped Newton steps with step halving."""
    _check_levels_observed(data)
    n_levels = data.design.n_levels
    P = sum(n - 1 for n in n_levels)
    theta = np.zeros(P)
    ll = log_likelihood(theta, data)
    trace = [ll]
    g = score(theta, data)
    it = 0
    while np.max(np.abs(g)) >= tol:
        if it >= max_iter:
            raise ConjointError(f"no convergence after {max_iter} iterations; "
                                f"|grad|={np.max(np.abs(g)):.3e}; LL trace tail {trace[-5:]}")
        info = -hessian(theta, data)
        try:
            step = np.linalg.solve(info, g)
        except np.linalg.LinAlgError:
            k = _deficient_attribute(info, n_levels)
            raise ConjointError("singular information matrix"
                                + (f" (attribute {k} not identified)" if k is not None else "")
                                ) from None
        t = 1.0
        for _ in range(60):
            cand = theta + t * step
            ll_new = log_likelihood(cand, data)
            if ll_new >= ll:
                break
            t *= 0.5
        else:
            raise ConjointError(f"line search failed at iteration {it}; LL trace tail {trace[-5:]}")
        theta, ll = cand, ll_new
        trace.append(ll)
        g = score(theta, data)
        it += 1
        if np.max(np.abs(theta)) > 50:
            raise ConjointError(f"coefficients diverging (separation?); LL trace tail {trace[-5:]}")
    info = -hessian(theta, data)
    eig = np.linalg.eigvalsh(info)
    if eig.min() <= 1e-10 * max(eig.max(), 1.0):
        k = _deficient_attribute(info, n_levels)
        raise ConjointError("singular information matrix"
                            + (f" (attribute {k} not identified)" if k is not None else ""))
    cov = np.linalg.inv(info)
    return MnlFit(n_levels, theta, cov, params_to_worths(theta, n_levels),
                  _level_se(cov, n_levels), ll, it, float(np.max(np.abs(g))), tuple(trace))


# --------------------------------------------------------------------------
# file formats
# --------------------------------------------------------------------------

DATASET_HEADER = ["resp", "task", "alt", "chosen"] + [
    f"level_{ATTRIBUTE_CODES[a]}" for a in TABLE_ATTRIBUTES]
REPORT_HEADER = ["attribute", "level", "worth", "se", "p"]


def write_dataset(data: ChoiceDataset, path: str | Path) -> None:
    if len(data.design.n_levels) != len(TABLE_ATTRIBUTES):
        raise ValueError("dataset files carry exactly the five table attributes")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_HEADER)
        for r in range(data.R):
            for t in range(data.design.T):
                for j in range(data.design.J):
                    w.writerow([r + 1, t + 1, j + 1, int(data.choices[r, t] == j),
                                *(int(x) + 1 for x in data.design.levels[t, j])])


def read_dataset(path: str | Path) -> ChoiceDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != DATASET_HEADER:
            raise ValueError(f"{path}: expected header {','.join(DATASET_HEADER)}")
        body = np.array([[int(x) for x in r] for r in reader], dtype=np.int64)
    if body.size == 0:
        raise ValueError(f"{path}: no rows")
    R, T, J = (int(body[:, i].max()) for i in range(3))
    if body.shape[0] != R * T * J:
        raise ValueError(f"{path}: expected {R * T * J} rows for R={R}, T={T}, J={J}")
    lv = np.zeros((T, J, len(TABLE_ATTRIBUTES)), dtype=np.int64)
    first = body[body[:, 0] == 1]
    lv[first[:, 1] - 1, first[:, 2] - 1] = first[:, 4:] - 1
    choices = np.full((R, T), -1, dtype=np.int64)
    for r, t, j, c in body[:, :4]:
        if c:
            if choices[r - 1, t - 1] >= 0:
                raise ValueError(f"{path}: respondent {r} task {t} has two choices")
            choices[r - 1, t - 1] = j - 1
    if np.any(choices < 0):
        raise ValueError(f"{path}: some respondent/task has no choice")
    return ChoiceDataset(ChoiceDesign((3,) * len(TABLE_ATTRIBUTES), lv), choices)


def write_report(fit: MnlFit, path: str | Path) -> None:
    attrs = list(TABLE_ATTRIBUTES) if len(fit.n_levels) == len(TABLE_ATTRIBUTES) else None
    pv = fit.p_values()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for k, (ws, ss, ps) in enumerate(zip(fit.worths, fit.se, pv)):
            name = attrs[k].value if attrs else str(k)
            for m, (wv, sv, pvv) in enumerate(zip(ws, ss, ps)):
                w.writerow([name, f"L{m + 1}", repr(round(float(wv), 10)),
                            repr(round(float(sv), 10)), repr(round(float(pvv), 10))])


def fit_to_table(fit: MnlFit, emergency: Emergency) -> PartWorthTable:
    worths = {(a, l): float(fit.worths[k][l]) for k, a in enumerate(TABLE_ATTRIBUTES)
              for l in Level}
    se = {(a, l): float(fit.se[k][l]) for k, a in enumerate(TABLE_ATTRIBUTES) for l in Level}
    return PartWorthTable(emergency, worths, se)


def load_true_worths(tables: Mapping[Emergency, PartWorthTable],
                     emergency: Emergency = Emergency.HE) -> list[list[float]]:
    return table_worths(tables[emergency])
