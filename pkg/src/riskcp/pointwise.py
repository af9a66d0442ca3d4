"""Per-covariate machinery over one discrete label law.

Given a law ``p`` (the true conditional, or a model's plug-in estimate) and a
coverage level ``t``, the optimal set is a loss sublevel set of the action
minimizing ``t * Q_t(a) + (1 - t) * M(a)``, where ``Q_t(a)`` is the
``t``-quantile of ``loss(a, Y)`` and ``M(a)`` the worst loss of ``a``.
``V(t)`` is that minimum. The dual selector picks ``t`` minimizing
``V(t) - beta * t``.

``Q_t`` is a left-continuous step function of ``t`` that jumps only at the
cumulative masses of the loss distribution, so ``V(t) - beta * t`` is
piecewise linear and its minimum over ``[0, 1]`` sits on the finite grid
``{0, 1}`` union all cumulative masses. Everything here works on that grid.

Two objectives are supported. ``"expected"`` is the one above. ``"quantile"``
drops the out-of-set term (``V(t) = min_a Q_t(a)``), which gives the in-set
max-min construction used for the RAC-style baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import DiscreteDistribution, LossTable, PredictionSet, UsageError, argmin_first

Objective = Literal["expected", "quantile"]

QUANTILE_TOL = 1e-12
MEMBER_TOL = 1e-12
ACTION_TOL = 1e-12
VALUE_TIE_TOL = 1e-9


def _check_objective(objective: str) -> None:
    if objective not in ("expected", "quantile"):
        raise UsageError(f"unknown objective {objective!r}")


def loss_cdf(row: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct losses of one action and their cumulative masses.

    ``probs`` is ``(n, K)``. Returns ``thetas`` of shape ``(G,)`` ascending and
    ``cum`` of shape ``(n, G)``. Cumulative masses within ``QUANTILE_TOL`` of
    one are snapped to exactly one, so ``cum[:, -1] == 1``. Groups whose labels
    carry no mass repeat the previous cumulative value.
    """
    order = np.argsort(row, kind="stable")
    srow = row[order]
    last_of_group = np.r_[srow[1:] != srow[:-1], True]
    cum = np.cumsum(probs[:, order], axis=1)[:, last_of_group]
    cum[cum >= 1.0 - QUANTILE_TOL] = 1.0
    return srow[last_of_group], cum


@dataclass(frozen=True)
class QuantileProfile:
    """Loss CDF of one action: ``P(loss <= thetas[k]) = masses[k]``."""

    thetas: np.ndarray
    masses: np.ndarray


def quantile_profile(table: LossTable, a: int, dist: DiscreteDistribution) -> QuantileProfile:
    thetas, cum = loss_cdf(table.values[a], dist.probs[None, :])
    cum = cum[0]
    keep = np.diff(np.r_[0.0, cum]) > 0
    return QuantileProfile(thetas[keep], cum[keep])


def quantile(profile: QuantileProfile, t: float) -> float:
    if t <= 0:
        raise UsageError(f"quantile level t={t} must be positive")
    k = int(np.argmax(profile.masses >= t - QUANTILE_TOL))
    return float(profile.thetas[k])


def sublevel_set(table: LossTable, a: int, theta: float) -> PredictionSet:
    return PredictionSet.from_mask(table.values[a] <= theta + MEMBER_TOL)


@dataclass(frozen=True)
class PointwiseSolution:
    t: float
    action: int
    theta: float
    set: PredictionSet
    value: float


def _action_objectives(table: LossTable, dist: DiscreteDistribution, t: float, objective: str):
    qs = np.array([quantile(quantile_profile(table, a, dist), t) for a in range(table.n_actions)])
    if objective == "quantile":
        return qs, qs
    return t * qs + (1.0 - t) * table.max_losses, qs


def pointwise_solution(
    table: LossTable, dist: DiscreteDistribution, t: float, objective: Objective = "expected"
) -> PointwiseSolution:
    _check_objective(objective)
    if not 0.0 <= t <= 1.0:
        raise UsageError(f"coverage level t={t} outside [0, 1]")
    if t == 0.0:
        if objective == "quantile":
            raise UsageError("the quantile objective needs t > 0")
        a = argmin_first(table.max_losses, ACTION_TOL)
        m = float(table.max_losses[a])
        return PointwiseSolution(0.0, a, m, PredictionSet.full(table.n_labels), m)
    obj, qs = _action_objectives(table, dist, t, objective)
    a = argmin_first(obj, ACTION_TOL)
    theta = float(qs[a])
    return PointwiseSolution(t, a, theta, sublevel_set(table, a, theta), float(obj[a]))


@dataclass(frozen=True)
class ValueProfile:
    """``V`` evaluated on its candidate grid (ascending, duplicates removed)."""

    grid: np.ndarray
    values: np.ndarray
    objective: str = "expected"

    def value_at(self, t: float) -> float:
        i = int(np.argmin(np.abs(self.grid - t)))
        if abs(self.grid[i] - t) > 1e-15:
            raise UsageError(f"t={t} is not a candidate grid point")
        return float(self.values[i])


def candidate_grid(table: LossTable, dist: DiscreteDistribution, objective: Objective = "expected"):
    points = [1.0] if objective == "quantile" else [0.0, 1.0]
    for a in range(table.n_actions):
        points.extend(quantile_profile(table, a, dist).masses.tolist())
    return np.unique(np.array(points))


def value_profile(
    table: LossTable, dist: DiscreteDistribution, objective: Objective = "expected"
) -> ValueProfile:
    _check_objective(objective)
    grid = candidate_grid(table, dist, objective)
    values = np.array([pointwise_solution(table, dist, t, objective).value for t in grid])
    return ValueProfile(grid, values, objective)


@dataclass(frozen=True)
class SelectorResult:
    beta: float
    g_minus: float
    g_plus: float
    chosen: float
    solution: PointwiseSolution


def selector(
    table: LossTable,
    dist: DiscreteDistribution,
    beta: float,
    objective: Objective = "expected",
    profile: ValueProfile | None = None,
) -> SelectorResult:
    """Extremal minimizers of ``V(u) - beta * u``; ``chosen`` is the largest."""
    if beta < 0:
        raise UsageError(f"beta={beta} must be nonnegative")
    if profile is None:
        profile = value_profile(table, dist, objective)
    obj = profile.values - beta * profile.grid
    ties = profile.grid[obj <= obj.min() + VALUE_TIE_TOL]
    g_minus, g_plus = float(ties.min()), float(ties.max())
    sol = pointwise_solution(table, dist, g_plus, profile.objective)
    return SelectorResult(beta, g_minus, g_plus, g_plus, sol)


def set_for_beta(
    table: LossTable, dist: DiscreteDistribution, beta: float, objective: Objective = "expected"
) -> tuple[PredictionSet, int, float]:
    res = selector(table, dist, beta, objective)
    return res.solution.set, res.solution.action, res.chosen


class ProfileBatch:
    """Candidate grids, ``V`` values and optimal sets for many laws at once.

    Row ``i`` describes law ``probs[i]``. Columns are candidate coverage
    levels (unsorted, possibly repeated; unusable slots carry ``V = inf``).

    Attributes
    ----------
    u : (n, T) candidate coverage levels
    v : (n, T) value ``V_i(u)``
    action : (n, T) optimal action at each level
    theta : (n, T) loss threshold at each level
    member : (n, T, K) membership of each label in the optimal set
    """

    def __init__(self, table: LossTable, probs: np.ndarray, objective: Objective = "expected"):
        _check_objective(objective)
        probs = np.atleast_2d(np.asarray(probs, dtype=float))
        n, k = probs.shape
        if k != table.n_labels:
            raise UsageError(f"laws have {k} labels, table has {table.n_labels}")
        self.table = table
        self.objective = objective
        m = table.n_actions
        cdfs = [loss_cdf(table.values[a], probs) for a in range(m)]
        head = [np.ones((n, 1))] if objective == "quantile" else [np.zeros((n, 1)), np.ones((n, 1))]
        u = np.concatenate(head + [cum for _, cum in cdfs], axis=1)
        n_t = u.shape[1]

        obj = np.empty((m, n, n_t))
        qs = np.empty((m, n, n_t))
        big_m = table.max_losses
        for a, (thetas, cum) in enumerate(cdfs):
            # index of the first group whose cumulative mass reaches t
            idx = (cum[:, None, :] < u[:, :, None] - QUANTILE_TOL).sum(axis=2)
            idx = np.minimum(idx, thetas.size - 1)
            qs[a] = thetas[idx]
            obj[a] = qs[a] if objective == "quantile" else u * qs[a] + (1.0 - u) * big_m[a]

        best = obj.min(axis=0)
        action = np.argmax(obj <= best[None] + ACTION_TOL, axis=0)
        theta = np.take_along_axis(qs, action[None], axis=0)[0]
        member = table.values[action] <= theta[:, :, None] + MEMBER_TOL

        zero = u <= 0.0
        if objective == "expected":
            a0 = argmin_first(big_m, ACTION_TOL)
            action[zero] = a0
            theta[zero] = big_m[a0]
            best[zero] = big_m[a0]
            member[zero] = True
        else:
            best[zero] = np.inf

        self.u = u
        self.v = best
        self.action = action
        self.theta = theta
        self.member = member

    def __len__(self) -> int:
        return self.u.shape[0]

    def chosen_index(self, betas: np.ndarray, rows: np.ndarray | slice = slice(None)) -> np.ndarray:
        """Column of the largest minimizer of ``V - beta * u``; shape ``(len(betas), n_rows)``."""
        betas = np.asarray(betas, dtype=float)
        u, v = self.u[rows], self.v[rows]
        obj = v[None] - betas[:, None, None] * u[None]
        ties = obj <= obj.min(axis=2, keepdims=True) + VALUE_TIE_TOL
        return np.argmax(np.where(ties, u[None], -1.0), axis=2)

    def chosen_u(self, betas: np.ndarray) -> np.ndarray:
        idx = self.chosen_index(betas)
        return np.take_along_axis(self.u[None].repeat(len(idx), 0), idx[:, :, None], 2)[:, :, 0]

    def extremal_u(self, beta: float) -> tuple[np.ndarray, np.ndarray]:
        """Per-row ``(g_minus, g_plus)`` at a single ``beta``."""
        obj = self.v - beta * self.u
        ties = obj <= obj.min(axis=1, keepdims=True) + VALUE_TIE_TOL
        g_minus = np.where(ties, self.u, np.inf).min(axis=1)
        g_plus = np.where(ties, self.u, -np.inf).max(axis=1)
        return g_minus, g_plus

    def inner_min(self, beta: float) -> np.ndarray:
        """Per-row ``min_u V(u) - beta * u``."""
        return (self.v - beta * self.u).min(axis=1)

    def membership(self, betas: np.ndarray, rows: np.ndarray | slice = slice(None)) -> np.ndarray:
        """Optimal-set membership at each beta; shape ``(len(betas), n_rows, K)``."""
        idx = self.chosen_index(betas, rows)
        member = self.member[rows]
        n_rows = member.shape[0]
        return member[np.arange(n_rows)[None, :], idx]

    def breakpoints(self) -> list[np.ndarray]:
        """For each row, the positive betas where the largest minimizer moves up.

        Walks the lower envelope of the lines ``beta -> V(u) - beta * u``
        from ``beta = 0`` in order of increasing slope magnitude ``u``.
        """
        n = len(self)
        start = self.chosen_index(np.zeros(1))[0]
        cur = start.copy()
        beta = np.zeros(n)
        active = np.ones(n, dtype=bool)
        out: list[list[float]] = [[] for _ in range(n)]
        rows = np.arange(n)
        for _ in range(self.u.shape[1]):
            if not active.any():
                break
            u_cur = self.u[rows, cur][:, None]
            v_cur = self.v[rows, cur][:, None]
            up = (self.u > u_cur + 1e-15) & np.isfinite(self.v)
            with np.errstate(divide="ignore", invalid="ignore"):
                cross = np.where(up, (self.v - v_cur) / (self.u - u_cur), np.inf)
            cross = np.maximum(cross, beta[:, None])
            nxt = cross.min(axis=1)
            active &= np.isfinite(nxt)
            tie = cross <= nxt[:, None] + 1e-12
            cand = np.argmax(np.where(tie, self.u, -1.0), axis=1)
            for i in np.nonzero(active)[0]:
                out[i].append(float(nxt[i]))
            cur = np.where(active, cand, cur)
            beta = np.where(active, nxt, beta)
        return [np.array(sorted(set(b for b in bs if b > 0))) for bs in out]
