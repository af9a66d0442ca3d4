"""Comparison methods: max-min (RAC) and best-response actions, LAS/APS split conformal sets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Dataset, DiscreteDistribution, LossTable, PredictionSet, UsageError, argmin_first
from .robust import in_set_sup

SCORE_TOL = 1e-12


def rac_action(table: LossTable, s: PredictionSet) -> tuple[int, float]:
    """Max-min rule: the action with the smallest worst loss inside ``s``."""
    if s.is_empty:
        raise UsageError("max-min action is undefined on an empty set")
    sups = [in_set_sup(table, a, s) for a in range(table.n_actions)]
    best = argmin_first(sups)
    return best, sups[best]


def best_response(table: LossTable, dist: DiscreteDistribution) -> tuple[int, float]:
    risks = table.values @ dist.probs
    best = argmin_first(risks)
    return best, float(risks[best])


def las_score(dist: DiscreteDistribution, y: int) -> float:
    return 1.0 - dist[y]


def aps_score(dist: DiscreteDistribution, y: int) -> float:
    """Mass of labels ranked at or above ``y`` (descending probability, index ties)."""
    return float(aps_scores(dist.probs[None])[0, y])


def las_scores(probs: np.ndarray) -> np.ndarray:
    return 1.0 - np.asarray(probs, dtype=float)


def aps_scores(probs: np.ndarray) -> np.ndarray:
    """All APS scores of an ``(n, K)`` array, without randomization."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    order = np.argsort(-probs, axis=1, kind="stable")
    cum = np.cumsum(np.take_along_axis(probs, order, axis=1), axis=1)
    out = np.empty_like(cum)
    np.put_along_axis(out, order, cum, axis=1)
    return out


SCORES: dict[str, Callable[[np.ndarray], np.ndarray]] = {"LAS": las_scores, "APS": aps_scores}


@dataclass(frozen=True)
class ConformalThreshold:
    score_name: str
    tau: float
    alpha: float
    n_cal: int


def quantile_index(n_cal: int, alpha: float) -> int:
    """1-based rank ``ceil((n + 1)(1 - alpha))`` capped to ``[1, n]``."""
    k = math.ceil((n_cal + 1) * (1.0 - alpha) - 1e-9)
    return min(max(k, 1), n_cal)


def conformal_calibrate(cal: Dataset, score_name: str, alpha: float) -> ConformalThreshold:
    if score_name not in SCORES:
        raise UsageError(f"unknown score {score_name!r}; expected one of {sorted(SCORES)}")
    if len(cal) == 0:
        raise UsageError("conformal calibration needs at least one record")
    labels = cal.true_labels()
    scores = SCORES[score_name](cal.probs)[np.arange(len(cal)), labels]
    tau = float(np.sort(scores)[quantile_index(len(cal), alpha) - 1])
    return ConformalThreshold(score_name, tau, alpha, len(cal))


def conformal_masks(threshold: ConformalThreshold, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Set membership ``(n, K)`` and a flag marking sets replaced by the top label."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    mask = SCORES[threshold.score_name](probs) <= threshold.tau + SCORE_TOL
    empty = ~mask.any(axis=1)
    if empty.any():
        top = np.argmax(probs[empty], axis=1)
        mask[np.nonzero(empty)[0], top] = True
    return mask, empty


def conformal_set(threshold: ConformalThreshold, dist: DiscreteDistribution) -> PredictionSet:
    mask, _ = conformal_masks(threshold, dist.probs[None])
    return PredictionSet.from_mask(mask[0])
