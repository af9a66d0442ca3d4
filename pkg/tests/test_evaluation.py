import numpy as np
import pytest
from hypothesis import given, strategies as st

from riskcp.core import PredictionSet, UsageError
from riskcp.evaluation import (
    Decision, aggregate, avg_realized_loss, avg_worst_case_risk, critical_mistake_rates, evaluate,
    miscoverage,
)
from riskcp.robust import worst_case_risk

N, P, C, LO = range(4)
FULL = PredictionSet.full(4)


def D(members, a, y):
    return Decision(PredictionSet.of(4, members) if members is not None else None, a, y)


def test_avg_worst_case_risk(lam0):
    assert avg_worst_case_risk([D([N], 0, 2)], lam0, 0.1) == pytest.approx(1.0)
    assert avg_worst_case_risk([Decision(FULL, 3, y) for y in range(4)], lam0, 0.3) == 6.0


def test_zero_alpha_maxmin_gives_in_set_sups(lam0):
    ds = [D([P, C], 1, 1), D([N], 0, 0)]
    assert avg_worst_case_risk(ds, lam0, 0.0) == pytest.approx((7 + 0) / 2)


def test_realized_loss(lam0, lam1):
    assert avg_realized_loss([D([N], 0, 0)], lam0) == 0
    assert avg_realized_loss([D([N], 0, 2)], lam1) == 100
    assert avg_realized_loss([D([N], 3, 1), D([N], 1, 3)], lam0) == pytest.approx((6 + 3) / 2)


def test_miscoverage_counts(lam0):
    assert miscoverage([D([y], 0, y) for y in range(4)]) == 0
    assert miscoverage([D([0], 0, 1), D([2], 0, 3)]) == 1
    assert miscoverage([D([0], 0, 0), D([1], 0, 1), D([2], 0, 2), D([0], 0, 3)]) == 0.25


def test_critical_mistakes(lam0, lam1):
    rates = critical_mistake_rates([D(None, 0, C), D(None, 2, C), D(None, 3, N)], lam0)
    assert rates == {C: (0.5, 2), N: (0.0, 1)}
    assert critical_mistake_rates([D(None, 0, P)], lam1) == {P: (1.0, 1)}


def test_critical_mistake_full_tie_set():
    from riskcp.core import validate_loss_table
    t = validate_loss_table([[5, 0], [5, 1], [1, 1]], ["a", "b", "c"], ["x", "y"])
    rates = critical_mistake_rates([Decision(None, 0, 0), Decision(None, 1, 0), Decision(None, 2, 0)], t)
    assert rates[0] == (pytest.approx(2 / 3), 3)


def test_missing_labels_rejected(lam0):
    with pytest.raises(UsageError):
        avg_realized_loss([Decision(FULL, 0, None)], lam0)
    with pytest.raises(UsageError):
        miscoverage([])


def test_report_without_sets(lam0):
    rep = evaluate([Decision(None, 0, 1, "x")], lam0, 0.1, "best-response", "none")
    assert rep.avg_worst_case_risk is None and rep.miscoverage is None
    assert rep.critical_mistakes == {"Pneumonia": (1.0, 1)}


def test_aggregate_stderr(lam0):
    from dataclasses import replace
    base = evaluate([Decision(FULL, 3, 0)], lam0, 0.1, "m")
    agg = aggregate([replace(base, avg_realized_loss=1.0), replace(base, avg_realized_loss=3.0)])
    assert agg.avg_realized_loss.mean == 2 and agg.avg_realized_loss.stderr == pytest.approx(1.0)
    same = aggregate([base, base, base])
    assert same.avg_worst_case_risk.stderr == 0
    with pytest.raises(UsageError):
        aggregate([base, replace(base, method_name="other")])
    with pytest.raises(UsageError):
        aggregate([base, replace(base, alpha=0.2)])


@st.composite
def decisions(draw):
    n = draw(st.integers(1, 12))
    out = []
    for i in range(n):
        bits = draw(st.integers(1, 15))
        out.append(Decision(PredictionSet(4, bits), draw(st.integers(0, 3)), draw(st.integers(0, 3)), str(i)))
    return out


@given(decisions(), st.floats(0, 1), st.randoms())
def test_metrics_permutation_invariant_and_bounded(ds, alpha, rnd):
    from riskcp.core import medical_lambda0
    t = medical_lambda0()
    shuffled = list(ds)
    rnd.shuffle(shuffled)
    for f in (lambda x: avg_worst_case_risk(x, t, alpha), lambda x: avg_realized_loss(x, t), miscoverage):
        assert f(ds) == pytest.approx(f(shuffled), abs=1e-12)
    assert 0 <= miscoverage(ds) <= 1
    for rate, support in critical_mistake_rates(ds, t).values():
        assert 0 <= rate <= 1 and support >= 1
    pointwise = [worst_case_risk(t, d.action, d.set, alpha).value for d in ds]
    assert min(pointwise) - 1e-12 <= avg_worst_case_risk(ds, t, alpha) <= max(pointwise) + 1e-12
    for d, v in zip(ds, pointwise):
        if d.label in d.set:
            assert t.loss(d.action, d.label) <= v + 1e-12
