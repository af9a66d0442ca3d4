"""Synthetic tasks: Dirichlet-distributed conditionals and the 3-bit driving hazard task."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .core import Dataset, DiscreteDistribution, LabelSpace, LossTable, UsageError, validate_loss_table

DRIVING_ACTIONS = ("STOP", "LEFT", "RIGHT", "KEEP")
# State bits are (ahead, left, right), most significant first: "100" = blocked ahead.
DRIVING_LABELS = tuple(format(i, "03b") for i in range(8))


@dataclass(frozen=True)
class DrivingSpec:
    collision: float = 60.0
    turn: float = 3.0
    unnecessary: float = 2.0
    stop_free: float = 6.0
    stop_blocked: float = 2.0
    # Beta(a, b) parameters for the per-bit hazard probabilities (ahead, left, right).
    hazard_beta: tuple[tuple[float, float], ...] = ((0.6, 2.0), (0.5, 2.5), (0.5, 2.5))

    def __post_init__(self):
        costs = (self.collision, self.turn, self.unnecessary, self.stop_free, self.stop_blocked)
        if min(costs) < 0:
            raise UsageError("driving costs must be nonnegative")
        if len(self.hazard_beta) != 3 or min(min(ab) for ab in self.hazard_beta) <= 0:
            raise UsageError("hazard_beta needs three positive (a, b) pairs")


def state_bits(label: str) -> tuple[int, int, int]:
    return int(label[0]), int(label[1]), int(label[2])


def driving_loss_table(spec: DrivingSpec = DrivingSpec()) -> LossTable:
    rows = []
    for action in DRIVING_ACTIONS:
        row = []
        for label in DRIVING_LABELS:
            ahead, left, right = state_bits(label)
            if action == "KEEP":
                v = spec.collision * ahead
            elif action == "STOP":
                v = spec.stop_free * (1 - ahead) + spec.stop_blocked * ahead
            else:
                side = left if action == "LEFT" else right
                v = spec.collision * side + spec.turn + spec.unnecessary * (1 - ahead)
            row.append(v)
        rows.append(row)
    return validate_loss_table(rows, DRIVING_ACTIONS, DRIVING_LABELS)


def driving_probs(p: np.ndarray) -> np.ndarray:
    """Product law over the 8 states for ``(n, 3)`` hazard probabilities."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    bits = np.array([state_bits(s) for s in DRIVING_LABELS])  # (8, 3)
    factors = np.where(bits[None], p[:, None, :], 1.0 - p[:, None, :])
    return factors.prod(axis=2)


def driving_predictor(p_ahead: float, p_left: float, p_right: float) -> DiscreteDistribution:
    for v in (p_ahead, p_left, p_right):
        if not 0.0 <= v <= 1.0:
            raise UsageError(f"hazard probability {v} outside [0, 1]")
    return DiscreteDistribution(driving_probs([p_ahead, p_left, p_right])[0])


def corrupt(probs: np.ndarray, temperature: float = 1.0, noise: float = 0.0) -> np.ndarray:
    """Distort laws by tempering (``p ** (1 / T)``) and mixing with the uniform law."""
    probs = np.asarray(probs, dtype=float)
    if temperature == 1.0 and noise == 0.0:
        return probs.copy()
    if temperature <= 0 or not 0.0 <= noise <= 1.0:
        raise UsageError("temperature must be positive and noise in [0, 1]")
    out = probs ** (1.0 / temperature)
    out /= out.sum(axis=-1, keepdims=True)
    k = probs.shape[-1]
    return (1.0 - noise) * out + noise / k


@dataclass(frozen=True)
class SynthSpec:
    task: Literal["dirichlet", "driving"] = "dirichlet"
    labels: tuple[str, ...] = ("Normal", "Pneumonia", "COVID-19", "LungOpacity")
    concentration: float = 0.5
    temperature: float = 1.0
    noise: float = 0.0
    driving: DrivingSpec = field(default_factory=DrivingSpec)

    def label_space(self) -> LabelSpace:
        return LabelSpace(DRIVING_LABELS if self.task == "driving" else self.labels)


@dataclass(frozen=True)
class SynthData:
    pooled: Dataset
    true_conditionals: np.ndarray


def sample_conditionals(spec: SynthSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if spec.task == "driving":
        ab = np.array(spec.driving.hazard_beta)
        hazard = rng.beta(ab[:, 0], ab[:, 1], size=(n, 3))
        return driving_probs(hazard)
    if spec.task == "dirichlet":
        return rng.dirichlet(np.full(len(spec.labels), spec.concentration), size=n)
    raise UsageError(f"unknown synthetic task {spec.task!r}")


def sample_labels(conditionals: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row via inverse-CDF sampling."""
    cdf = np.cumsum(conditionals, axis=1)
    u = rng.random(conditionals.shape[0]) * cdf[:, -1]
    return (u[:, None] >= cdf).sum(axis=1).clip(max=conditionals.shape[1] - 1)


def generate(spec: SynthSpec, n: int, seed: int, prefix: str = "r") -> SynthData:
    """``n`` labeled records plus their true conditionals; deterministic in ``seed``."""
    if n < 1:
        raise UsageError("need at least one record")
    rng = np.random.default_rng(seed)
    truth = sample_conditionals(spec, n, rng)
    y = sample_labels(truth, rng)
    preds = corrupt(truth, spec.temperature, spec.noise)
    return SynthData(Dataset.from_arrays(preds, spec.label_space(), y, prefix=prefix), truth)


def gen_synthetic(spec: SynthSpec, n_cal: int, n_test: int, seed: int) -> tuple[Dataset, Dataset, np.ndarray]:
    """Calibration and test datasets drawn from one pooled sample.

    Returns ``(cal, test, true_conditionals)`` with the conditionals stacked
    calibration-first.
    """
    if n_cal < 1 or n_test < 1:
        raise UsageError("calibration and test counts must be at least 1")
    data = generate(spec, n_cal + n_test, seed)
    records = data.pooled.records
    cal = Dataset(records[:n_cal], data.pooled.labels)
    test = Dataset(records[n_cal:], data.pooled.labels)
    return cal, test, data.true_conditionals
