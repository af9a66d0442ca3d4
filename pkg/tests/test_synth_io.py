import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riskcp.core import Dataset, LabelSpace, ValidationError
from riskcp.io import DataIOError, load_dataset, load_loss_table, save_dataset, save_loss_table
from riskcp.synth import (
    DRIVING_ACTIONS, DRIVING_LABELS, DrivingSpec, SynthSpec, corrupt, driving_loss_table, driving_predictor,
    driving_probs, gen_synthetic, generate, sample_labels,
)
from conftest import tables
from oracles import driving_loss


def test_driving_examples():
    t = driving_loss_table()
    cell = lambda a, y: t.loss(DRIVING_ACTIONS.index(a), DRIVING_LABELS.index(y))
    assert cell("KEEP", "000") == 0
    assert cell("LEFT", "010") == 65
    assert cell("STOP", "100") == 2


def test_driving_custom_costs():
    t = driving_loss_table(DrivingSpec(collision=10, turn=1, unnecessary=0, stop_free=4, stop_blocked=1))
    for a in DRIVING_ACTIONS:
        for y in DRIVING_LABELS:
            ref = driving_loss(a, y, M=10, turn=1, unnec=0, stop_free=4, stop_block=1)
            assert t.loss(DRIVING_ACTIONS.index(a), DRIVING_LABELS.index(y)) == ref


def test_driving_predictor():
    assert driving_predictor(0, 0, 0).probs.tolist() == [1] + [0] * 7
    assert driving_predictor(0.5, 0.5, 0.5).probs.tolist() == [0.125] * 8
    assert driving_predictor(0.2, 0.1, 0.3)[0] == pytest.approx(0.504, abs=1e-15)
    assert driving_probs(np.random.default_rng(0).random((50, 3))).sum(axis=1) == pytest.approx(np.ones(50))


def test_driving_bit_marginals():
    spec = SynthSpec(task="driving")
    data = generate(spec, 100_000, seed=11)
    y = data.pooled.true_labels()
    bits = np.array([[int(c) for c in DRIVING_LABELS[i]] for i in range(8)])[y]
    ab = np.array(spec.driving.hazard_beta)
    p = ab[:, 0] / ab.sum(axis=1)
    sigma = np.sqrt(p * (1 - p) / y.size)
    assert np.all(np.abs(bits.mean(axis=0) - p) <= 3 * sigma)


def test_label_sampler_frequencies():
    p = np.array([0.7, 0.1, 0.1, 0.1])
    y = sample_labels(np.tile(p, (10_000, 1)), np.random.default_rng(4))
    freq = np.bincount(y, minlength=4) / y.size
    assert np.all(np.abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / y.size))


def test_generation_deterministic_and_uncorrupted():
    cal1, test1, truth = gen_synthetic(SynthSpec(), 30, 20, seed=9)
    cal2, test2, _ = gen_synthetic(SynthSpec(), 30, 20, seed=9)
    assert cal1 == cal2 and test1 == test2
    assert np.array_equal(np.vstack([cal1.probs, test1.probs]), truth)
    assert gen_synthetic(SynthSpec(), 30, 20, seed=10)[0] != cal1


def test_corruption_knobs():
    p = np.array([[0.7, 0.2, 0.1]])
    assert np.array_equal(corrupt(p), p)
    flat = corrupt(p, temperature=1e6)
    assert flat == pytest.approx(np.full((1, 3), 1 / 3), abs=1e-5)
    assert corrupt(p, noise=1.0) == pytest.approx(np.full((1, 3), 1 / 3))


def test_dataset_round_trip(tmp_path):
    cal, _, _ = gen_synthetic(SynthSpec(concentration=0.3), 50, 1, seed=2)
    save_dataset(cal, tmp_path / "d.jsonl")
    back = load_dataset(tmp_path / "d.jsonl", cal.labels)
    assert back == cal and np.array_equal(back.probs, cal.probs)


@settings(max_examples=25)
@given(tables())
def test_loss_table_round_trip(tmp_path_factory, table):
    path = tmp_path_factory.mktemp("t") / "loss.json"
    save_loss_table(table, path)
    assert load_loss_table(path) == table


def test_builtin_tables(lam0, lam1):
    assert load_loss_table("builtin:lambda0") == lam0
    assert load_loss_table("builtin:lambda1") == lam1
    assert load_loss_table("builtin:driving") == driving_loss_table()
    with pytest.raises(ValidationError):
        load_loss_table("builtin:nope")


def test_dataset_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("\n".join([
        json.dumps({"id": "a", "probs": [0.5, 0.5], "label": "x"}),
        json.dumps({"id": "b", "probs": [0.9, 0.5]}),
        json.dumps({"probs": [0.5, 0.5]}),
        json.dumps({"id": "a", "probs": [1, 0], "label": "zzz"}),
    ]) + "\n")
    with pytest.raises(ValidationError) as exc:
        load_dataset(path, LabelSpace(("x", "y")))
    errs = exc.value.errors
    assert any(e.startswith(f"{path}:2:") for e in errs)
    assert any(e.startswith(f"{path}:3:") and "'id'" in e for e in errs)
    assert any(f"{path}:4:" in e and "duplicate" in e for e in errs)
    assert any(f"{path}:4:" in e and "unknown label" in e for e in errs)


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(DataIOError):
        load_dataset(tmp_path / "nope.jsonl", LabelSpace(("x",)))
    with pytest.raises(DataIOError):
        load_loss_table(tmp_path / "nope.json")


def test_invalid_table_json(tmp_path):
    p = tmp_path / "t.json"
    p.write_text('{"actions": ["a"], "labels": ["x"], "loss": [[-2]]}')
    with pytest.raises(ValidationError, match="negative loss at"):
        load_loss_table(p)
    p.write_text("{not json")
    with pytest.raises(ValidationError, match=":1:"):
        load_loss_table(p)
