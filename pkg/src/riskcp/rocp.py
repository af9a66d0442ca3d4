"""Risk-optimal conformal prediction.

For every candidate label ``y`` of a test point, find the smallest ``beta`` at
which the plug-in sets ``C(x; beta)`` cover the calibration labels plus
``y`` often enough:

    (#{i : Y_i in C(X_i; beta)} + 1{y in C(X_test; beta)}) / (n + 1) >= 1 - alpha

The prediction set keeps the candidates ``y`` with ``y in C(X_test; beta_y)``,
and the action is the robust minimax action on that set.

The search runs over a finite ascending grid: zero, the breakpoints of every
record's selector (calibration and test), and a uniform grid on
``[0, max_loss + 1]``. The grid is a symmetric function of the ``n + 1``
points, which is what the coverage guarantee needs. Beyond the grid a
fallback maps every set to the full label space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import Dataset, DiscreteDistribution, LossTable, PredictionSet, UsageError
from .pointwise import VALUE_TIE_TOL, Objective, ProfileBatch, pointwise_solution, value_profile
from .robust import cached_robust_action

# beta_y when no grid point satisfies the constraint; C(x; inf) is the full set.
FALLBACK_BETA = math.inf
UNIFORM_POINTS = 256


@dataclass(frozen=True)
class RocpResult:
    set: PredictionSet
    per_label_beta: tuple[float, ...]
    action: int
    certificate: float
    alpha: float
    fallback: bool = False

    def beta_map(self, labels) -> dict[str, float | str]:
        return {
            name: ("infeasible-at-grid-max" if math.isinf(b) else b)
            for name, b in zip(labels.labels, self.per_label_beta)
        }


def required_count(n_cal: int, alpha: float) -> int:
    """Smallest count ``c`` with ``c / (n_cal + 1) >= 1 - alpha``."""
    return max(0, math.ceil((1.0 - alpha) * (n_cal + 1) - 1e-9))


def uniform_grid(table: LossTable, points: int = UNIFORM_POINTS) -> np.ndarray:
    return np.linspace(0.0, table.overall_max + 1.0, points)


@lru_cache(maxsize=8192)
def _profile(table: LossTable, dist: DiscreteDistribution, objective: Objective):
    return value_profile(table, dist, objective)


@lru_cache(maxsize=65536)
def _set_at(table: LossTable, dist: DiscreteDistribution, t: float, objective: Objective) -> PredictionSet:
    return pointwise_solution(table, dist, t, objective).set


def _set_for(table: LossTable, dist: DiscreteDistribution, beta: float, objective: Objective):
    """Scalar-path ``C(x; beta)``; profiles and sets are memoized per law."""
    if math.isinf(beta):
        return PredictionSet.full(table.n_labels)
    vp = _profile(table, dist, objective)
    obj = vp.values - beta * vp.grid
    t = float(vp.grid[obj <= obj.min() + VALUE_TIE_TOL].max())
    return _set_at(table, dist, t, objective)


def coverage_count(
    cal: Dataset,
    test_pred: DiscreteDistribution,
    candidate_y: int,
    beta: float,
    table: LossTable,
    objective: Objective = "expected",
) -> float:
    """Augmented empirical coverage at ``beta`` for one candidate label."""
    labels = cal.true_labels()
    hits = sum(int(y) in _set_for(table, r.prediction, beta, objective) for r, y in zip(cal, labels))
    hits += candidate_y in _set_for(table, test_pred, beta, objective)
    return hits / (len(cal) + 1)


def beta_search(
    cal: Dataset,
    test_pred: DiscreteDistribution,
    candidate_y: int,
    alpha: float,
    table: LossTable,
    beta_grid: Sequence[float],
    objective: Objective = "expected",
) -> float:
    """First grid ``beta`` meeting the coverage constraint, else ``FALLBACK_BETA``.

    A plain ascending scan: the augmented count is not assumed monotone.
    """
    need = required_count(len(cal), alpha)
    for beta in beta_grid:
        count = coverage_count(cal, test_pred, candidate_y, beta, table, objective)
        if round(count * (len(cal) + 1)) >= need:
            return float(beta)
    return FALLBACK_BETA


class RocpCalibration:
    """Calibration-side state shared by every test point.

    Holds the calibration sets' profile batch, their selector breakpoints and
    the calibration coverage count on the base grid.
    """

    def __init__(
        self,
        cal: Dataset,
        table: LossTable,
        alpha: float,
        objective: Objective = "expected",
        uniform_points: int = UNIFORM_POINTS,
    ):
        if not 0.0 < alpha < 1.0:
            raise UsageError(f"alpha={alpha} outside (0, 1)")
        if cal.labels != table.labels:
            raise UsageError("calibration label space differs from the loss table's")
        self.table = table
        self.alpha = alpha
        self.objective = objective
        self.labels = cal.true_labels()
        self.n = len(cal)
        self.need = required_count(self.n, alpha)
        self.batch = ProfileBatch(table, cal.probs, objective) if self.n else None
        bps = self.batch.breakpoints() if self.n else []
        self.base_grid = np.unique(
            np.concatenate([[0.0], uniform_grid(table, uniform_points), *bps])
        )
        self.base_counts = self.counts(self.base_grid)

    def counts(self, betas: np.ndarray) -> np.ndarray:
        """Number of calibration labels covered at each beta."""
        betas = np.asarray(betas, dtype=float)
        if self.n == 0:
            return np.zeros(betas.shape, dtype=int)
        out = np.empty(betas.shape, dtype=int)
        rows = np.arange(self.n)
        for s in _chunks(betas.size, max(1, 4_000_000 // (self.n * self.batch.u.shape[1]))):
            mem = self.batch.membership(betas.ravel()[s])
            out.ravel()[s] = mem[:, rows, self.labels].sum(axis=1)
        return out

    def decide(self, test_probs: np.ndarray, chunk: int = 256) -> list[RocpResult]:
        test_probs = np.atleast_2d(np.asarray(test_probs, dtype=float))
        results: list[RocpResult] = []
        for s in _chunks(test_probs.shape[0], chunk):
            results.extend(self._decide_chunk(test_probs[s]))
        return results

    def _decide_chunk(self, probs: np.ndarray) -> list[RocpResult]:
        table, k = self.table, self.table.n_labels
        tb = ProfileBatch(table, probs, self.objective)
        n_test = len(tb)
        base_mem = tb.membership(self.base_grid)  # (G, n_test, K)
        test_bps = tb.breakpoints()

        extra = np.full((n_test, max((b.size for b in test_bps), default=0)), np.nan)
        for i, b in enumerate(test_bps):
            extra[i, : b.size] = b
        valid = ~np.isnan(extra)
        extra_counts = np.zeros(extra.shape, dtype=int)
        extra_counts[valid] = self.counts(extra[valid])
        extra_mem = np.zeros(extra.shape + (k,), dtype=bool)
        for i in range(n_test):
            if valid[i].any():
                extra_mem[i, valid[i]] = tb.membership(extra[i, valid[i]], rows=slice(i, i + 1))[:, 0]

        # feasibility on base grid: (G, n_test, K)
        base_ok = self.base_counts[:, None, None] + base_mem >= self.need
        extra_ok = (extra_counts[:, :, None] + extra_mem >= self.need) & valid[:, :, None]

        results = []
        for i in range(n_test):
            betas = np.full(k, FALLBACK_BETA)
            inside = np.ones(k, dtype=bool)
            col_ok = base_ok[:, i, :]
            has = col_ok.any(axis=0)
            first = np.argmax(col_ok, axis=0)
            betas[has] = self.base_grid[first[has]]
            inside[has] = base_mem[first[has], i, np.nonzero(has)[0]]
            for j in np.nonzero(valid[i])[0]:
                b = extra[i, j]
                for y in np.nonzero(extra_ok[i, j] & (b < betas))[0]:
                    betas[y] = b
                    inside[y] = extra_mem[i, j, y]
            s = PredictionSet.from_mask(inside)
            fallback = s.is_empty
            if fallback:
                s = PredictionSet.full(k)
            action, cert = cached_robust_action(table, s, self.alpha)
            results.append(RocpResult(s, tuple(betas.tolist()), action, cert, self.alpha, fallback))
        return results


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


def rocp_decide(
    cal: Dataset,
    test_pred: DiscreteDistribution,
    alpha: float,
    table: LossTable,
    objective: Objective = "expected",
) -> RocpResult:
    return RocpCalibration(cal, table, alpha, objective).decide(test_pred.probs[None])[0]


def rocp_decide_batch(
    cal: Dataset,
    test: Dataset | np.ndarray,
    alpha: float,
    table: LossTable,
    objective: Objective = "expected",
) -> list[RocpResult]:
    probs = test.probs if isinstance(test, Dataset) else test
    return RocpCalibration(cal, table, alpha, objective).decide(probs)


def search_grid(calib: RocpCalibration, test_pred: DiscreteDistribution) -> np.ndarray:
    """The full ascending grid used for one test point."""
    extra = ProfileBatch(calib.table, test_pred.probs[None], calib.objective).breakpoints()[0]
    return np.unique(np.concatenate([calib.base_grid, extra]))
