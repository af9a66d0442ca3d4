"""File formats: JSON loss tables, JSON Lines datasets and decisions."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .core import (
    Dataset,
    DiscreteDistribution,
    LabeledRecord,
    LabelSpace,
    LossTable,
    ValidationError,
    medical_lambda0,
    medical_lambda1,
    validate_loss_table,
)


class DataIOError(OSError):
    """A file could not be read or written."""


def _read_text(path: Path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise DataIOError(f"{path}: {exc.strerror or exc}") from None


def _builtin_table(name: str) -> LossTable:
    from .synth import DrivingSpec, driving_loss_table

    tables = {"lambda0": medical_lambda0, "lambda1": medical_lambda1,
              "driving": lambda: driving_loss_table(DrivingSpec())}
    if name not in tables:
        raise ValidationError([f"unknown builtin loss table {name!r}; choose from {sorted(tables)}"])
    return tables[name]()


def load_loss_table(path: str | Path) -> LossTable:
    """Read ``{"actions": [...], "labels": [...], "loss": [[...], ...]}``.

    ``builtin:lambda0``, ``builtin:lambda1`` and ``builtin:driving`` name the
    packaged tables.
    """
    if str(path).startswith("builtin:"):
        return _builtin_table(str(path)[len("builtin:"):])
    text = _read_text(Path(path))
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError([f"{path}:{exc.lineno}: invalid JSON ({exc.msg})"]) from None
    missing = [k for k in ("actions", "labels", "loss") if k not in obj]
    if missing:
        raise ValidationError([f"{path}: missing key {k!r}" for k in missing])
    try:
        return validate_loss_table(obj["loss"], obj["actions"], obj["labels"])
    except ValidationError as exc:
        raise ValidationError([f"{path}: {e}" for e in exc.errors]) from None


def save_loss_table(table: LossTable, path: str | Path) -> None:
    write_text(Path(path), json.dumps(table.to_json(), indent=1) + "\n")


def write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise DataIOError(f"{path}: {exc.strerror or exc}") from None


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    for lineno, line in enumerate(_read_text(Path(path)).splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError([f"{path}:{lineno}: invalid JSON ({exc.msg})"]) from None
        if not isinstance(obj, dict):
            raise ValidationError([f"{path}:{lineno}: expected a JSON object"])
        yield lineno, obj


def load_dataset(path: str | Path, labels: LabelSpace) -> Dataset:
    """Read ``{"id": str, "probs": [K floats], "label": optional str}`` per line."""
    records = []
    errors = []
    seen = set()
    for lineno, obj in iter_jsonl(path):
        where = f"{path}:{lineno}"
        try:
            rid = str(obj["id"])
            probs = obj["probs"]
        except KeyError as exc:
            errors.append(f"{where}: missing key {exc.args[0]!r}")
            continue
        if rid in seen:
            errors.append(f"{where}: duplicate id {rid!r}")
        seen.add(rid)
        if not isinstance(probs, list) or len(probs) != len(labels):
            errors.append(f"{where}: 'probs' must be a list of {len(labels)} numbers")
            continue
        try:
            dist = DiscreteDistribution(probs)
        except (ValidationError, TypeError, ValueError) as exc:
            errors.append(f"{where}: {exc}")
            continue
        label = obj.get("label")
        y = None
        if label is not None:
            if label not in labels.labels:
                errors.append(f"{where}: unknown label {label!r}")
                continue
            y = labels.labels.index(label)
        records.append(LabeledRecord(rid, dist, y))
    if errors:
        raise ValidationError(errors)
    return Dataset(tuple(records), labels)


def dataset_lines(dataset: Dataset, raw_probs: np.ndarray | None = None) -> Iterable[str]:
    probs = dataset.probs if raw_probs is None else raw_probs
    for r, p in zip(dataset, probs):
        obj = {"id": r.id, "probs": [float(x) for x in p]}
        if r.true_label is not None:
            obj["label"] = dataset.labels.labels[r.true_label]
        yield json.dumps(obj)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    write_jsonl(path, dataset_lines(dataset))


def write_jsonl(path: str | Path, lines: Iterable[str | dict]) -> None:
    text = "".join((ln if isinstance(ln, str) else json.dumps(ln)) + "\n" for ln in lines)
    write_text(Path(path), text)


def write_json(path: str | Path, obj) -> None:
    write_text(Path(path), json.dumps(obj, indent=1) + "\n")


def read_json(path: str | Path):
    text = _read_text(Path(path))
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError([f"{path}:{exc.lineno}: invalid JSON ({exc.msg})"]) from None
