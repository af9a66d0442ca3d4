"""Shared domain types: label/action spaces, loss tables, distributions, sets, datasets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

PROB_SUM_TOL = 1e-6
# Sums closer to one than this are left alone so file round trips are exact.
RENORMALIZE_TOL = 1e-12
# Saturating stand-in for an infeasible worst-case loss (empty set, alpha < 1).
INFEASIBLE = math.inf


class UsageError(ValueError):
    """Raised when an operation is called outside its precondition."""


class ValidationError(ValueError):
    """Raised when external data violates a type invariant.

    ``errors`` holds every violation found, not just the first.
    """

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _unique_names(names: Sequence[str], kind: str) -> tuple[str, ...]:
    names = tuple(str(n) for n in names)
    if not names:
        raise ValidationError([f"{kind} space must be nonempty"])
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ValidationError([f"duplicate {kind} names: {dupes}"])
    return names


@dataclass(frozen=True)
class LabelSpace:
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", _unique_names(self.labels, "label"))

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, name: str) -> int:
        try:
            return self.labels.index(name)
        except ValueError:
            raise ValidationError([f"unknown label {name!r}"]) from None


@dataclass(frozen=True)
class ActionSpace:
    actions: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "actions", _unique_names(self.actions, "action"))

    def __len__(self) -> int:
        return len(self.actions)

    def index(self, name: str) -> int:
        try:
            return self.actions.index(name)
        except ValueError:
            raise ValidationError([f"unknown action {name!r}"]) from None


@dataclass(frozen=True, eq=False)
class LossTable:
    """Nonnegative loss ``values[a, y]`` stored one row per action."""

    values: np.ndarray
    actions: ActionSpace
    labels: LabelSpace

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        errors = _grid_errors(values, self.actions, self.labels)
        if errors:
            raise ValidationError(errors)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def loss(self, a: int, y: int) -> float:
        self._check(a, y)
        return float(self.values[a, y])

    def max_loss(self, a: int) -> float:
        self._check(a, 0)
        return float(self.values[a].max())

    @property
    def max_losses(self) -> np.ndarray:
        return self.values.max(axis=1)

    @property
    def overall_max(self) -> float:
        return float(self.values.max())

    def _check(self, a: int, y: int) -> None:
        if not 0 <= a < self.n_actions:
            raise UsageError(f"action index {a} out of range [0, {self.n_actions})")
        if not 0 <= y < self.n_labels:
            raise UsageError(f"label index {y} out of range [0, {self.n_labels})")

    def to_json(self) -> dict:
        return {
            "actions": list(self.actions.actions),
            "labels": list(self.labels.labels),
            "loss": self.values.tolist(),
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, LossTable):
            return NotImplemented
        return (
            self.actions == other.actions
            and self.labels == other.labels
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self) -> int:
        return hash((self.actions, self.labels, self.values.tobytes()))


def _grid_errors(values: np.ndarray, actions: ActionSpace, labels: LabelSpace) -> list[str]:
    errors = []
    shape = (len(actions), len(labels))
    if values.ndim != 2 or values.shape != shape:
        return [f"loss grid has shape {values.shape}, expected {shape} (actions x labels)"]
    for a, y in zip(*np.nonzero(~np.isfinite(values))):
        errors.append(f"non-finite loss at ({actions.actions[a]}, {labels.labels[y]})")
    with np.errstate(invalid="ignore"):
        negative = np.isfinite(values) & (values < 0)
    for a, y in zip(*np.nonzero(negative)):
        errors.append(f"negative loss at ({actions.actions[a]}, {labels.labels[y]})")
    return errors


def validate_loss_table(
    raw: Sequence[Sequence[float]],
    actions: ActionSpace | Sequence[str],
    labels: LabelSpace | Sequence[str],
) -> LossTable:
    """Build a :class:`LossTable`, raising :class:`ValidationError` listing every violation."""
    if not isinstance(actions, ActionSpace):
        actions = ActionSpace(tuple(actions))
    if not isinstance(labels, LabelSpace):
        labels = LabelSpace(tuple(labels))
    try:
        values = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError([f"loss grid is not a rectangular numeric array: {exc}"]) from None
    errors = _grid_errors(values, actions, labels)
    if errors:
        raise ValidationError(errors)
    return LossTable(values, actions, labels)


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Probability vector over a label space.

    Vectors whose sum is within ``PROB_SUM_TOL`` of one are renormalized;
    anything further off is rejected.
    """

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).ravel()
        errors = []
        if p.size == 0:
            errors.append("probability vector is empty")
        elif not np.all(np.isfinite(p)):
            errors.append("probability vector has non-finite entries")
        elif np.any(p < 0):
            errors.append(f"negative probability at index {int(np.argmax(p < 0))}")
        else:
            total = p.sum()
            if abs(total - 1.0) > PROB_SUM_TOL:
                errors.append(f"probabilities sum to {total!r}, not 1")
            elif abs(total - 1.0) > RENORMALIZE_TOL:
                p = p / total
        if errors:
            raise ValidationError(errors)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return self.probs.size

    def __getitem__(self, y: int) -> float:
        return float(self.probs[y])

    def mass(self, s: "PredictionSet") -> float:
        return float(self.probs[s.mask_array()].sum())

    def expected_loss(self, table: LossTable, a: int) -> float:
        return float(table.values[a] @ self.probs)

    @classmethod
    def point_mass(cls, k: int, y: int) -> "DiscreteDistribution":
        p = np.zeros(k)
        p[y] = 1.0
        return cls(p)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __hash__(self) -> int:
        return hash(self.probs.tobytes())


@dataclass(frozen=True, order=True)
class PredictionSet:
    """Subset of label indices ``0..size-1``, stored as an integer bit mask."""

    size: int
    bits: int = 0

    def __post_init__(self):
        if self.size < 1:
            raise UsageError("label space size must be positive")
        if self.bits < 0 or self.bits >> self.size:
            raise UsageError(f"bits {self.bits:#b} outside a {self.size}-label space")

    @classmethod
    def of(cls, size: int, members: Iterable[int]) -> "PredictionSet":
        bits = 0
        for y in members:
            if not 0 <= y < size:
                raise UsageError(f"label index {y} out of range [0, {size})")
            bits |= 1 << y
        return cls(size, bits)

    @classmethod
    def full(cls, size: int) -> "PredictionSet":
        return cls(size, (1 << size) - 1)

    @classmethod
    def empty(cls, size: int) -> "PredictionSet":
        return cls(size, 0)

    @classmethod
    def from_mask(cls, mask: Sequence[bool]) -> "PredictionSet":
        return cls.of(len(mask), (i for i, m in enumerate(mask) if m))

    @classmethod
    def all_nonempty(cls, size: int) -> Iterator["PredictionSet"]:
        for bits in range(1, 1 << size):
            yield cls(size, bits)

    def __contains__(self, y: int) -> bool:
        return 0 <= y < self.size and bool(self.bits >> y & 1)

    def __iter__(self) -> Iterator[int]:
        return (y for y in range(self.size) if self.bits >> y & 1)

    def __len__(self) -> int:
        return bin(self.bits).count("1")

    @property
    def members(self) -> tuple[int, ...]:
        return tuple(self)

    @property
    def is_empty(self) -> bool:
        return self.bits == 0

    @property
    def is_full(self) -> bool:
        return self.bits == (1 << self.size) - 1

    def complement(self) -> "PredictionSet":
        return PredictionSet(self.size, ((1 << self.size) - 1) & ~self.bits)

    def mask_array(self) -> np.ndarray:
        return np.array([self.bits >> y & 1 for y in range(self.size)], dtype=bool)

    def issubset(self, other: "PredictionSet") -> bool:
        return self.bits & ~other.bits == 0

    def names(self, labels: LabelSpace) -> list[str]:
        return [labels.labels[y] for y in self]


@dataclass(frozen=True)
class LabeledRecord:
    id: str
    prediction: DiscreteDistribution
    true_label: int | None = None

    def __post_init__(self):
        if self.true_label is not None and not 0 <= self.true_label < len(self.prediction):
            raise ValidationError(
                [f"record {self.id!r}: label index {self.true_label} out of range"]
            )


@dataclass(frozen=True)
class Dataset:
    records: tuple[LabeledRecord, ...]
    labels: LabelSpace
    _probs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        k = len(self.labels)
        bad = [r.id for r in records if len(r.prediction) != k]
        if bad:
            raise ValidationError([f"record {i!r} has wrong number of probabilities" for i in bad])
        probs = np.array([r.prediction.probs for r in records], dtype=float).reshape(len(records), k)
        probs.setflags(write=False)
        object.__setattr__(self, "_probs", probs)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[LabeledRecord]:
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def probs(self) -> np.ndarray:
        """Predictions stacked into an ``(n, K)`` array."""
        return self._probs

    @property
    def is_labeled(self) -> bool:
        return all(r.true_label is not None for r in self.records)

    def true_labels(self) -> np.ndarray:
        missing = [r.id for r in self.records if r.true_label is None]
        if missing:
            raise UsageError(f"{len(missing)} record(s) lack a true label, e.g. {missing[0]!r}")
        return np.array([r.true_label for r in self.records], dtype=int)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.records[i] for i in indices), self.labels)

    @classmethod
    def from_arrays(
        cls,
        probs: np.ndarray,
        labels: LabelSpace,
        true_labels: Sequence[int] | None = None,
        ids: Sequence[str] | None = None,
        prefix: str = "r",
    ) -> "Dataset":
        probs = np.asarray(probs, dtype=float)
        n = probs.shape[0]
        if ids is None:
            ids = [f"{prefix}{i}" for i in range(n)]
        records = tuple(
            LabeledRecord(
                ids[i],
                DiscreteDistribution(probs[i]),
                None if true_labels is None else int(true_labels[i]),
            )
            for i in range(n)
        )
        return cls(records, labels)


def argmin_first(values: Sequence[float], tol: float = 1e-12) -> int:
    """Smallest index whose value is within ``tol`` of the minimum."""
    values = np.asarray(values, dtype=float)
    return int(np.argmax(values <= values.min() + tol))


# Loss matrices for the four-class chest X-ray task. Rows are actions.
MEDICAL_LABELS = ("Normal", "Pneumonia", "COVID-19", "LungOpacity")
MEDICAL_ACTIONS = ("NoAction", "Antibiotics", "Quarantine", "Testing")
_LAMBDA0 = [[0, 8, 8, 6], [10, 0, 7, 3], [10, 7, 0, 2], [9, 6, 6, 0]]
_LAMBDA1 = [[0, 8, 8, 6], [100, 0, 70, 3], [100, 70, 0, 2], [90, 60, 60, 0]]


def _from_label_major(rows) -> LossTable:
    return validate_loss_table(np.array(rows, dtype=float).T, MEDICAL_ACTIONS, MEDICAL_LABELS)


def medical_lambda0() -> LossTable:
    return _from_label_major(_LAMBDA0)


def medical_lambda1() -> LossTable:
    """Lambda0 with severe mismatches penalized ten times harder."""
    return _from_label_major(_LAMBDA1)
