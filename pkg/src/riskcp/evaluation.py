"""Test-set metrics for (set, action, label) decisions and their aggregation over splits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import LossTable, PredictionSet, UsageError
from .robust import worst_case_risk


@dataclass(frozen=True)
class Decision:
    """One test point's outcome. ``set`` is ``None`` for set-free methods."""

    set: PredictionSet | None
    action: int
    label: int | None = None
    id: str = ""
    certificate: float | None = None


def _labels(decisions: Sequence[Decision]) -> np.ndarray:
    missing = [d.id or str(i) for i, d in enumerate(decisions) if d.label is None]
    if missing:
        raise UsageError(f"{len(missing)} decision(s) lack a true label, e.g. {missing[0]!r}")
    return np.array([d.label for d in decisions], dtype=int)


def _nonempty(decisions: Sequence[Decision]) -> None:
    if not decisions:
        raise UsageError("no decisions to evaluate")


def avg_worst_case_risk(decisions: Sequence[Decision], table: LossTable, alpha: float) -> float:
    _nonempty(decisions)
    total = 0.0
    for d in decisions:
        if d.set is None or d.set.is_empty:
            raise UsageError(f"decision {d.id!r} has no nonempty prediction set")
        total += worst_case_risk(table, d.action, d.set, alpha).value
    return total / len(decisions)


def avg_realized_loss(decisions: Sequence[Decision], table: LossTable) -> float:
    _nonempty(decisions)
    labels = _labels(decisions)
    actions = np.array([d.action for d in decisions])
    return float(table.values[actions, labels].mean())


def miscoverage(decisions: Sequence[Decision]) -> float:
    _nonempty(decisions)
    labels = _labels(decisions)
    if any(d.set is None for d in decisions):
        raise UsageError("miscoverage needs a prediction set for every decision")
    return float(np.mean([y not in d.set for d, y in zip(decisions, labels)]))


def critical_mistake_rates(decisions: Sequence[Decision], table: LossTable) -> dict[int, tuple[float, int]]:
    """Per label with support: share of its points whose action is a worst action for it."""
    _nonempty(decisions)
    labels = _labels(decisions)
    actions = np.array([d.action for d in decisions])
    worst = table.values == table.values.max(axis=0, keepdims=True)  # (m, K)
    out = {}
    for y in range(table.n_labels):
        hit = labels == y
        support = int(hit.sum())
        if support:
            out[y] = (float(worst[actions[hit], y].mean()), support)
    return out


@dataclass(frozen=True)
class EvaluationReport:
    method_name: str
    alpha: float
    n_test: int
    avg_worst_case_risk: float | None
    avg_realized_loss: float
    miscoverage: float | None
    critical_mistakes: dict[str, tuple[float, int]]
    set_source: str = ""
    empty_set_replacements: int = 0

    def to_json(self) -> dict:
        d = asdict(self)
        d["critical_mistakes"] = {k: {"rate": r, "support": s} for k, (r, s) in self.critical_mistakes.items()}
        return d


def evaluate(
    decisions: Sequence[Decision],
    table: LossTable,
    alpha: float,
    method_name: str,
    set_source: str = "",
    empty_set_replacements: int = 0,
) -> EvaluationReport:
    has_sets = all(d.set is not None for d in decisions)
    crit = critical_mistake_rates(decisions, table)
    return EvaluationReport(
        method_name=method_name,
        alpha=alpha,
        n_test=len(decisions),
        avg_worst_case_risk=avg_worst_case_risk(decisions, table, alpha) if has_sets else None,
        avg_realized_loss=avg_realized_loss(decisions, table),
        miscoverage=miscoverage(decisions) if has_sets else None,
        critical_mistakes={table.labels.labels[y]: v for y, v in crit.items()},
        set_source=set_source,
        empty_set_replacements=empty_set_replacements,
    )


@dataclass(frozen=True)
class MetricSummary:
    mean: float | None
    stderr: float | None
    n: int


@dataclass(frozen=True)
class AggregateReport:
    method_name: str
    alpha: float
    splits: int
    avg_worst_case_risk: MetricSummary
    avg_realized_loss: MetricSummary
    miscoverage: MetricSummary
    critical_mistakes: dict[str, MetricSummary] = field(default_factory=dict)
    set_source: str = ""

    def to_json(self) -> dict:
        return asdict(self)

    def rows(self) -> list[dict]:
        """Flat ``metric, mean, stderr`` rows for CSV output."""
        base = {"method": self.method_name, "set_source": self.set_source, "alpha": self.alpha, "splits": self.splits}
        out = []
        for name in ("avg_worst_case_risk", "avg_realized_loss", "miscoverage"):
            s: MetricSummary = getattr(self, name)
            out.append({**base, "metric": name, "mean": s.mean, "stderr": s.stderr, "n": s.n})
        for label, s in self.critical_mistakes.items():
            out.append({**base, "metric": f"critical_mistake[{label}]", "mean": s.mean, "stderr": s.stderr, "n": s.n})
        return out


def _summary(values: Sequence[float | None]) -> MetricSummary:
    vals = np.array([v for v in values if v is not None], dtype=float)
    if vals.size == 0:
        return MetricSummary(None, None, 0)
    stderr = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size >= 2 else None
    return MetricSummary(float(vals.mean()), stderr, int(vals.size))


def aggregate(reports: Sequence[EvaluationReport]) -> AggregateReport:
    """Mean and standard error of each metric across independent splits."""
    if not reports:
        raise UsageError("nothing to aggregate")
    methods = {(r.method_name, r.set_source) for r in reports}
    if len(methods) > 1:
        raise UsageError(f"cannot aggregate mixed methods {sorted(methods)}")
    alphas = {r.alpha for r in reports}
    if len(alphas) > 1:
        raise UsageError(f"cannot aggregate mixed alphas {sorted(alphas)}")
    labels = list(dict.fromkeys(k for r in reports for k in r.critical_mistakes))
    crit = {
        k: _summary([r.critical_mistakes[k][0] for r in reports if k in r.critical_mistakes])
        for k in labels
    }
    first = reports[0]
    return AggregateReport(
        method_name=first.method_name,
        alpha=first.alpha,
        splits=len(reports),
        avg_worst_case_risk=_summary([r.avg_worst_case_risk for r in reports]),
        avg_realized_loss=_summary([r.avg_realized_loss for r in reports]),
        miscoverage=_summary([r.miscoverage for r in reports]),
        critical_mistakes=crit,
        set_source=first.set_source,
    )
