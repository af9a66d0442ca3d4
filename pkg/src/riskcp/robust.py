"""Decisions on a fixed prediction set under a miscoverage budget.

For a set ``S`` and action ``a`` the worst expected loss over label laws
putting at least ``1 - alpha`` mass on ``S`` has the closed form

    L_S(a; alpha) = in_sup + alpha * max(out_sup - in_sup, 0)

where ``in_sup``/``out_sup`` are the largest losses of ``a`` inside and
outside ``S``. The minimax action minimizes this over actions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import INFEASIBLE, LossTable, PredictionSet, UsageError, argmin_first


@dataclass(frozen=True)
class RobustRiskBreakdown:
    in_sup: float
    out_sup: float
    value: float
    alpha: float


@dataclass(frozen=True)
class WorstCaseWitness:
    """Worst-case label law: ``mass_in`` on ``y_in`` and ``mass_out`` on ``y_out``."""

    y_in: int
    y_out: int | None
    mass_in: float
    mass_out: float

    def as_probs(self, k: int) -> np.ndarray:
        p = np.zeros(k)
        p[self.y_in] += self.mass_in
        if self.y_out is not None:
            p[self.y_out] += self.mass_out
        return p


@dataclass(frozen=True)
class DecisionOutcome:
    action: int
    certificate: RobustRiskBreakdown
    witness: WorstCaseWitness


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise UsageError(f"alpha={alpha} outside [0, 1]")


def _check_set(table: LossTable, s: PredictionSet) -> None:
    if s.size != table.n_labels:
        raise UsageError(f"set over {s.size} labels used with a {table.n_labels}-label table")


def in_set_sup(table: LossTable, a: int, s: PredictionSet) -> float:
    _check_set(table, s)
    if s.is_empty:
        raise UsageError("in-set supremum of an empty set")
    return float(max(table.loss(a, y) for y in s))


def out_set_sup(table: LossTable, a: int, s: PredictionSet) -> float:
    """Largest loss outside ``s``; for the full set this is the in-set value."""
    _check_set(table, s)
    if s.is_full:
        return table.max_loss(a)
    return float(max(table.loss(a, y) for y in s.complement()))


def worst_case_risk(table: LossTable, a: int, s: PredictionSet, alpha: float) -> RobustRiskBreakdown:
    _check_alpha(alpha)
    _check_set(table, s)
    if s.is_empty:
        # No law covers the empty set unless the constraint is vacuous.
        out = table.max_loss(a)
        value = out if alpha >= 1.0 else INFEASIBLE
        return RobustRiskBreakdown(INFEASIBLE, out, value, alpha)
    lin = in_set_sup(table, a, s)
    lout = out_set_sup(table, a, s)
    if s.is_full:
        return RobustRiskBreakdown(lin, lout, lin, alpha)
    return RobustRiskBreakdown(lin, lout, lin + alpha * max(lout - lin, 0.0), alpha)


def worst_case_witness(table: LossTable, a: int, s: PredictionSet, alpha: float) -> WorstCaseWitness:
    _check_alpha(alpha)
    _check_set(table, s)
    if s.is_empty:
        raise UsageError("no witness exists for an empty set")
    row = table.values[a]
    members = list(s)
    y_in = members[int(np.argmax(row[members]))]
    if not s.is_full and alpha > 0.0:
        outside = list(s.complement())
        y_out = outside[int(np.argmax(row[outside]))]
        if row[y_out] > row[y_in]:
            return WorstCaseWitness(y_in, y_out, 1.0 - alpha, alpha)
    return WorstCaseWitness(y_in, None, 1.0, 0.0)


def robust_action(table: LossTable, s: PredictionSet, alpha: float) -> DecisionOutcome:
    _check_alpha(alpha)
    _check_set(table, s)
    if s.is_empty:
        raise UsageError("robust action is undefined on an empty set")
    breakdowns = [worst_case_risk(table, a, s, alpha) for a in range(table.n_actions)]
    best = argmin_first([b.value for b in breakdowns])
    return DecisionOutcome(best, breakdowns[best], worst_case_witness(table, best, s, alpha))


def risk_certificate(table: LossTable, s: PredictionSet, alpha: float) -> float:
    return robust_action(table, s, alpha).certificate.value


@lru_cache(maxsize=65536)
def cached_robust_action(table: LossTable, s: PredictionSet, alpha: float) -> tuple[int, float]:
    """``(action, certificate)`` memoized per distinct set; used on large test batches."""
    out = robust_action(table, s, alpha)
    return out.action, out.certificate.value


def brute_force_worst_case(table: LossTable, a: int, s: PredictionSet, alpha: float) -> float:
    """Maximize expected loss over two-point laws that keep ``1 - alpha`` mass on ``s``.

    Enumerates ``q * delta_y1 + (1 - q) * delta_y2`` with ``y1`` in ``s``,
    ``y2`` anywhere and ``q`` in ``{1 - alpha, 1}``. On a finite label space
    the supremum over all covering laws is attained in this family.
    """
    _check_alpha(alpha)
    _check_set(table, s)
    if s.is_empty:
        return table.max_loss(a) if alpha >= 1.0 else INFEASIBLE
    best = -np.inf
    for y1, y2, q in itertools.product(list(s), range(table.n_labels), (1.0 - alpha, 1.0)):
        p = np.zeros(table.n_labels)
        p[y1] += q
        p[y2] += 1.0 - q
        if p[s.mask_array()].sum() < 1.0 - alpha - 1e-15:
            continue
        best = max(best, float(table.values[a] @ p))
    return best


def minimax_value(table: LossTable, sets: Sequence[PredictionSet], alpha: float) -> float:
    """Worst certificate over a finite family of covariate-indexed sets."""
    if len(sets) == 0:
        raise UsageError("minimax value needs at least one set")
    return max(risk_certificate(table, s, alpha) for s in sets)
