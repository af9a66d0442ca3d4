"""Oracle set design when the conditional label laws are known.

The covariate distribution is a finite weighted list of conditional laws.
Minimizing ``E[V_X(t(X))]`` subject to ``E[t(X)] >= 1 - alpha`` is solved
through the concave dual

    phi(beta) = beta * (1 - alpha) + E[min_u V_X(u) - beta * u]

whose one-sided slopes are ``(1 - alpha) - E[g_plus]`` (right) and
``(1 - alpha) - E[g_minus]`` (left).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DiscreteDistribution, LossTable, PredictionSet, UsageError
from .pointwise import Objective, ProfileBatch, pointwise_solution

log = logging.getLogger(__name__)

COVERAGE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PopulationInstance:
    table: LossTable
    conditionals: np.ndarray  # (J, K)
    weights: np.ndarray  # (J,)
    alpha: float
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        cond = np.atleast_2d(np.asarray(self.conditionals, dtype=float))
        cond = np.array([DiscreteDistribution(row).probs for row in cond])
        w = np.asarray(self.weights, dtype=float).ravel()
        if cond.shape[0] == 0:
            raise UsageError("population needs at least one covariate")
        if w.shape != (cond.shape[0],):
            raise UsageError(f"{w.size} weights for {cond.shape[0]} covariates")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise UsageError("weights must be nonnegative and sum to 1")
        if not 0.0 < self.alpha < 1.0:
            raise UsageError(f"alpha={self.alpha} outside (0, 1)")
        ids = tuple(self.ids) or tuple(f"x{j}" for j in range(cond.shape[0]))
        object.__setattr__(self, "conditionals", cond)
        object.__setattr__(self, "weights", w / w.sum())
        object.__setattr__(self, "ids", ids)

    @classmethod
    def uniform(cls, table: LossTable, conditionals, alpha: float) -> "PopulationInstance":
        cond = np.atleast_2d(conditionals)
        return cls(table, cond, np.full(cond.shape[0], 1.0 / cond.shape[0]), alpha)

    def __len__(self) -> int:
        return self.weights.size


class _Solver:
    """Caches the candidate grids of one instance."""

    def __init__(self, inst: PopulationInstance, objective: Objective = "expected"):
        self.inst = inst
        self.batch = ProfileBatch(inst.table, inst.conditionals, objective)

    def phi(self, beta: float) -> float:
        w = self.inst.weights
        return float(beta * (1.0 - self.inst.alpha) + w @ self.batch.inner_min(beta))

    def expected_selectors(self, beta: float) -> tuple[float, float]:
        g_minus, g_plus = self.batch.extremal_u(beta)
        w = self.inst.weights
        return float(w @ g_minus), float(w @ g_plus)

    def beta_max(self) -> float:
        last = max((b[-1] for b in self.batch.breakpoints() if b.size), default=0.0)
        return max(self.inst.table.overall_max, last) + 1.0


def dual_value(inst: PopulationInstance, beta: float) -> float:
    if beta < 0:
        raise UsageError(f"beta={beta} must be nonnegative")
    return _Solver(inst).phi(beta)


@dataclass(frozen=True)
class IntervalCheck:
    holds: bool
    e_g_minus: float
    e_g_plus: float


def interval_condition(inst: PopulationInstance, beta: float) -> IntervalCheck:
    """Whether ``E[g_minus] <= 1 - alpha <= E[g_plus]`` at ``beta``.

    At ``beta = 0`` only the right inequality is required.
    """
    if beta < 0:
        raise UsageError(f"beta={beta} must be nonnegative")
    return _interval(_Solver(inst), beta)


def _interval(solver: _Solver, beta: float) -> IntervalCheck:
    target = 1.0 - solver.inst.alpha
    e_minus, e_plus = solver.expected_selectors(beta)
    right = e_plus >= target - COVERAGE_TOL
    left = beta == 0.0 or e_minus <= target + COVERAGE_TOL
    return IntervalCheck(bool(left and right), e_minus, e_plus)


def solve_dual(inst: PopulationInstance, tol: float = 1e-9) -> float:
    """Smallest maximizer of ``phi`` on ``[0, beta_max]``.

    Bisects on the sign of the right slope ``(1 - alpha) - E[g_plus]``, then
    snaps to the kink of ``phi`` inside the final bracket so that the interval
    condition holds exactly rather than up to the bracket width.
    """
    return _solve_dual(_Solver(inst), tol)


def _solve_dual(solver: _Solver, tol: float = 1e-9) -> float:
    target = 1.0 - solver.inst.alpha

    def covered(beta: float) -> bool:
        return solver.expected_selectors(beta)[1] >= target - COVERAGE_TOL

    if covered(0.0):
        return 0.0
    lo, hi = 0.0, solver.beta_max()
    if not covered(hi):
        log.warning("E[g_plus] below target at beta_max=%g; returning beta_max", hi)
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if covered(mid):
            hi = mid
        else:
            lo = mid
    # E[g_plus] is a right-continuous step function that only jumps at kinks
    # of phi, so the smallest kink near the bracket is the exact maximizer.
    # The window is padded because value ties within VALUE_TIE_TOL can make
    # the coverage test flip a few ulps-times-slope before the kink.
    pad = max(1e-6, 1e-6 * hi)
    kinks = np.concatenate([b[(b > lo - pad) & (b <= hi + pad)] for b in solver.batch.breakpoints()])
    for beta in np.sort(kinks):
        if _interval(solver, float(beta)).holds:
            return float(beta)
    return hi


@dataclass(frozen=True)
class CoverageAssignment:
    beta_star: float
    t: np.ndarray
    randomized_indices: tuple[int, ...]
    expected_t: float
    primal_value: float
    dual_value: float
    target: float

    @property
    def slack(self) -> float:
        """Over-coverage ``E[t] - (1 - alpha)``; negative means the fill fell short."""
        return self.expected_t - self.target


def coverage_assignment(inst: PopulationInstance, objective: Objective = "expected") -> CoverageAssignment:
    """Deterministic version of the two-selector coverage assignment.

    With ``beta* > 0`` every covariate starts at ``g_minus`` and covariates
    are moved to ``g_plus`` in index order until the coverage target is met.
    """
    solver = _Solver(inst, objective)
    beta = _solve_dual(solver)
    g_minus, g_plus = solver.batch.extremal_u(beta)
    w = inst.weights
    target = 1.0 - inst.alpha
    moved: list[int] = []
    if beta == 0.0:
        t = g_plus.copy()
    else:
        t = g_minus.copy()
        for j in range(len(inst)):
            if w @ t >= target - COVERAGE_TOL:
                break
            if g_plus[j] > g_minus[j]:
                t[j] = g_plus[j]
                moved.append(j)
    expected_t = float(w @ t)
    if expected_t < target - COVERAGE_TOL:
        log.warning("coverage fill short by %.3g after moving every covariate", target - expected_t)
    primal = float(w @ _values_at(solver.batch, t))
    return CoverageAssignment(beta, t, tuple(moved), expected_t, primal, solver.phi(beta), target)


def _values_at(batch: ProfileBatch, t: np.ndarray) -> np.ndarray:
    cols = np.argmin(np.abs(batch.u - t[:, None]), axis=1)
    return batch.v[np.arange(len(batch)), cols]


def oracle_sets(
    inst: PopulationInstance, assignment: CoverageAssignment | None = None
) -> list[tuple[PredictionSet, int, float]]:
    """Optimal set, action and coverage level for each covariate."""
    if assignment is None:
        assignment = coverage_assignment(inst)
    out = []
    for j, t in enumerate(assignment.t):
        sol = pointwise_solution(inst.table, DiscreteDistribution(inst.conditionals[j]), float(t))
        out.append((sol.set, sol.action, float(t)))
    return out


def covariate_grids(inst: PopulationInstance) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per covariate, the distinct candidate levels and ``V`` on them."""
    batch = ProfileBatch(inst.table, inst.conditionals)
    out = []
    for j in range(len(inst)):
        u, first = np.unique(batch.u[j], return_index=True)
        out.append((u, batch.v[j][first]))
    return out


def from_json(obj: dict, table: LossTable, alpha: float | None = None) -> PopulationInstance:
    """Parse ``{"alpha": .., "covariates": [{"id", "probs", "weight"}, ...]}``."""
    covs: Sequence[dict] = obj.get("covariates", [])
    if not covs:
        raise UsageError("population file has no covariates")
    a = obj.get("alpha") if alpha is None else alpha
    if a is None:
        raise UsageError("alpha missing from both the population file and the command line")
    probs = np.array([c["probs"] for c in covs], dtype=float)
    weights = np.array([c.get("weight", 1.0) for c in covs], dtype=float)
    weights = weights / weights.sum()
    ids = tuple(str(c.get("id", f"x{j}")) for j, c in enumerate(covs))
    return PopulationInstance(table, probs, weights, float(a), ids)
