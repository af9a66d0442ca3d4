"""Method registry and the split x alpha x method sweep."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import best_response, conformal_calibrate, conformal_masks, rac_action
from .core import Dataset, LossTable, PredictionSet, UsageError
from .evaluation import AggregateReport, Decision, EvaluationReport, aggregate, evaluate
from .io import load_dataset, load_loss_table, write_json, write_text
from .robust import cached_robust_action, worst_case_risk
from .rocp import UNIFORM_POINTS, RocpCalibration
from .synth import DrivingSpec, SynthSpec, generate

log = logging.getLogger(__name__)

# name -> (set source, decision rule)
METHODS: dict[str, tuple[str, str]] = {
    "rocp": ("rocp", "robust"),
    "rac-proxy": ("rac-proxy", "maxmin"),
    "best-response": ("none", "best-response"),
    "las/robust": ("las", "robust"),
    "las/maxmin": ("las", "maxmin"),
    "aps/robust": ("aps", "robust"),
    "aps/maxmin": ("aps", "maxmin"),
}


@dataclass(frozen=True)
class MethodOutput:
    decisions: list[Decision]
    set_source: str
    empty_set_replacements: int = 0
    betas: list[tuple[float, ...]] | None = None


def _act(table: LossTable, s: PredictionSet, rule: str, alpha: float) -> tuple[int, float]:
    if rule == "robust":
        return cached_robust_action(table, s, alpha)
    a, _ = rac_action(table, s)
    # certificates are always the robust worst case of the chosen action
    return a, worst_case_risk(table, a, s, alpha).value


def run_method(
    method: str,
    cal: Dataset,
    test: Dataset,
    table: LossTable,
    alpha: float,
    uniform_points: int = UNIFORM_POINTS,
) -> MethodOutput:
    """Sets and actions for every test record under one named method."""
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    if cal.labels != table.labels or test.labels != table.labels:
        raise UsageError("dataset label space differs from the loss table's")
    source, rule = METHODS[method]
    labels = [r.true_label for r in test]
    ids = [r.id for r in test]

    if source == "none":
        out = []
        for r in test:
            a, _ = best_response(table, r.prediction)
            out.append(Decision(None, a, r.true_label, r.id, None))
        return MethodOutput(out, source)

    replaced = 0
    betas = None
    if source in ("rocp", "rac-proxy"):
        objective = "expected" if source == "rocp" else "quantile"
        results = RocpCalibration(cal, table, alpha, objective, uniform_points).decide(test.probs)
        sets = [res.set for res in results]
        replaced = sum(res.fallback for res in results)
        betas = [res.per_label_beta for res in results]
    else:
        threshold = conformal_calibrate(cal, source.upper(), alpha)
        masks, empty = conformal_masks(threshold, test.probs)
        sets = [PredictionSet.from_mask(m) for m in masks]
        replaced = int(empty.sum())

    out = []
    for s, y, rid in zip(sets, labels, ids):
        a, cert = _act(table, s, rule, alpha)
        out.append(Decision(s, a, y, rid, cert))
    return MethodOutput(out, source, replaced, betas)


@dataclass
class ExperimentConfig:
    alphas: list[float] = field(default_factory=lambda: [0.1])
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    loss: str = "builtin:lambda0"
    cal: str | None = None
    test: str | None = None
    synth: dict = field(default_factory=dict)
    n_cal: int = 200
    n_test: int = 1000
    seed: int = 0
    splits: int = 20
    out: str = "results"
    uniform_points: int = UNIFORM_POINTS
    formats: list[str] = field(default_factory=lambda: ["json", "csv"])

    def __post_init__(self):
        bad = [a for a in self.alphas if not 0.0 < a < 1.0]
        if bad:
            raise UsageError(f"alphas must lie in (0, 1), got {bad}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise UsageError(f"unknown methods {unknown}; choose from {sorted(METHODS)}")
        if self.splits < 1:
            raise UsageError("splits must be at least 1")
        if (self.cal is None) != (self.test is None):
            raise UsageError("give both cal and test files, or neither")

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise UsageError(f"unknown config keys {unknown}")
        return cls(**obj)

    def synth_spec(self) -> SynthSpec:
        kw = dict(self.synth)
        if "driving" in kw:
            d = dict(kw["driving"])
            if "hazard_beta" in d:
                d["hazard_beta"] = tuple(tuple(ab) for ab in d["hazard_beta"])
            kw["driving"] = DrivingSpec(**d)
        if "labels" in kw:
            kw["labels"] = tuple(kw["labels"])
        return SynthSpec(**kw)


def _pool(config: ExperimentConfig, table: LossTable) -> Dataset:
    if config.cal is not None:
        cal = load_dataset(config.cal, table.labels)
        test = load_dataset(config.test, table.labels)
        pooled = Dataset(cal.records + test.records, table.labels)
        if not pooled.is_labeled:
            raise UsageError("sweep needs labels on every calibration and test record")
        return pooled
    spec = config.synth_spec()
    if spec.label_space() != table.labels:
        raise UsageError("synthetic label space differs from the loss table's")
    return generate(spec, config.n_cal + config.n_test, config.seed).pooled


def split_indices(n: int, n_cal: int, seed: int, split: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng([seed, split]).permutation(n)
    return np.sort(perm[:n_cal]), np.sort(perm[n_cal:])


@dataclass(frozen=True)
class SweepResult:
    aggregates: list[AggregateReport]
    reports: list[EvaluationReport]
    paths: list[Path]


def run_experiment(config: ExperimentConfig) -> SweepResult:
    table = load_loss_table(config.loss)
    pooled = _pool(config, table)
    n_cal = config.n_cal if config.cal is None else len(load_dataset(config.cal, table.labels))
    if not 1 <= n_cal < len(pooled):
        raise UsageError(f"calibration size {n_cal} leaves no test records out of {len(pooled)}")

    per_key: dict[tuple[str, float], list[EvaluationReport]] = {}
    for split in range(config.splits):
        cal_idx, test_idx = split_indices(len(pooled), n_cal, config.seed, split)
        cal, test = pooled.subset(cal_idx), pooled.subset(test_idx)
        for alpha in config.alphas:
            for method in config.methods:
                res = run_method(method, cal, test, table, alpha, config.uniform_points)
                rep = evaluate(res.decisions, table, alpha, method, res.set_source, res.empty_set_replacements)
                per_key.setdefault((method, alpha), []).append(rep)
        log.info("split %d/%d done", split + 1, config.splits)

    aggregates = [aggregate(per_key[(m, a)]) for a in config.alphas for m in config.methods]
    reports = [r for a in config.alphas for m in config.methods for r in per_key[(m, a)]]
    out = Path(config.out)
    paths = []
    if "json" in config.formats:
        write_json(out / "report.json", {
            "config": asdict(config),
            "aggregates": [agg.to_json() for agg in aggregates],
            "splits": [r.to_json() for r in reports],
        })
        paths.append(out / "report.json")
    if "csv" in config.formats:
        write_text(out / "report.csv", aggregates_csv(aggregates))
        paths.append(out / "report.csv")
    return SweepResult(aggregates, reports, paths)


CSV_FIELDS = ["method", "set_source", "alpha", "splits", "metric", "mean", "stderr", "n"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def aggregates_csv(aggregates: Sequence[AggregateReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for agg in aggregates:
        for row in agg.rows():
            w.writerow([_fmt(row[k]) for k in CSV_FIELDS])
    return buf.getvalue()


def reports_csv(reports: Sequence[EvaluationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "set_source", "alpha", "n_test", "metric", "value", "support"])
    for r in reports:
        base = [r.method_name, r.set_source, _fmt(r.alpha), r.n_test]
        for name in ("avg_worst_case_risk", "avg_realized_loss", "miscoverage"):
            w.writerow(base + [name, _fmt(getattr(r, name)), ""])
        for label, (rate, support) in r.critical_mistakes.items():
            w.writerow(base + [f"critical_mistake[{label}]", _fmt(rate), support])
    return buf.getvalue()
