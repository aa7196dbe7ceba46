from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pltanh import metrics as MT

import oracles


def test_confusion_examples():
    assert np.array_equal(MT.confusion([0, 1, 2], [0, 1, 2], 3), np.eye(3))
    cm = MT.confusion([0], [1], 2)
    assert cm.tolist() == [[0, 1], [0, 0]]
    rng = np.random.default_rng(0)
    t, p = rng.integers(0, 5, 200), rng.integers(0, 5, 200)
    assert MT.confusion(t, p, 5).tolist() == oracles.confusion_count(t.tolist(), p.tolist(), 5)
    with pytest.raises(ValueError):
        MT.confusion([0, 3], [0, 1], 3)


def test_predict_ties_to_lowest_index():
    assert MT.predict(np.array([[0.3, 0.3, 0.4], [0.5, 0.5, 0.0]])).tolist() == [2, 0]


def test_macro_prf_hand_case():
    p, r, f1 = MT.macro_prf(np.array([[2, 1, 0], [0, 2, 0], [1, 0, 1]]))
    # column sums 3,3,1; row sums 3,2,2; diagonal 2,2,1
    assert p == pytest.approx(float((Fraction(2, 3) + Fraction(2, 3) + 1) / 3), abs=1e-15)
    assert r == pytest.approx(float((Fraction(2, 3) + 1 + Fraction(1, 2)) / 3), abs=1e-15)
    assert f1 == pytest.approx(float((Fraction(2, 3) + Fraction(4, 5) + Fraction(2, 3)) / 3), abs=1e-15)


def test_macro_prf_perfect_and_absent_class():
    assert MT.macro_prf(np.diag([3, 4, 5])) == (1.0, 1.0, 1.0)
    # class 2 never appears: contributes 0 everywhere
    p, r, f1 = MT.macro_prf(np.array([[3, 0, 0], [0, 4, 0], [0, 0, 0]]))
    assert (p, r, f1) == pytest.approx((2 / 3, 2 / 3, 2 / 3), abs=1e-15)


def test_auc_examples():
    probs = np.array([[0.9, 0.1], [0.8, 0.2], [0.3, 0.7], [0.1, 0.9]])
    assert MT.macro_auc_ovr(probs, [0, 0, 1, 1]) == 1.0
    assert MT.macro_auc_ovr(np.full((6, 3), 1 / 3), [0, 1, 2, 0, 1, 2]) == 0.5
    rng = np.random.default_rng(1)
    probs = rng.dirichlet(np.ones(4), size=50)
    labels = rng.integers(0, 4, 50)
    assert abs(MT.macro_auc_ovr(probs, labels) - oracles.macro_auc_pairs(probs, labels)) <= 1e-12


def test_auc_skips_undefined_classes_and_errors():
    probs = np.array([[0.7, 0.2, 0.1], [0.2, 0.7, 0.1], [0.6, 0.3, 0.1]])
    # class 2 has no positives; mean over classes 0 and 1
    expected = (oracles.auc_pairs(probs[:, 0], [1, 0, 1]) + oracles.auc_pairs(probs[:, 1], [0, 1, 0])) / 2
    assert MT.macro_auc_ovr(probs, [0, 1, 0]) == expected
    with pytest.raises(ValueError):
        MT.macro_auc_ovr(np.array([[1.0], [1.0]]), [0, 0])
    with pytest.raises(ValueError):
        MT.macro_auc_ovr(np.array([[0.5, 0.5]]), [0])


def test_accuracy_examples():
    assert MT.accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert MT.accuracy([1, 2], [0, 0]) == 0.0
    assert MT.accuracy([0, 1, 1, 0], [0, 1, 1, 1]) == 0.75
    with pytest.raises(ValueError):
        MT.accuracy([], [])


cases = st.tuples(st.integers(2, 100), st.integers(2, 6), st.integers(0, 2**31 - 1), st.booleans())


def _case(n, k, seed, coarse):
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(k), size=n)
    if coarse:
        probs = np.round(probs, 1)  # plenty of ties
    labels = rng.integers(0, k, n)
    labels[:2] = [0, 1]  # at least one class with both positives and negatives
    return probs, labels


@settings(max_examples=60, deadline=None)
@given(case=cases)
def test_metrics_match_oracles(case):
    probs, labels = _case(*case)
    k = probs.shape[1]
    pred = MT.predict(probs)
    got = MT.macro_prf(MT.confusion(labels, pred, k))
    ref = oracles.prf_from_counts(labels.tolist(), pred.tolist(), k)
    assert max(abs(a - b) for a, b in zip(got, ref)) <= 1e-12
    assert abs(MT.macro_auc_ovr(probs, labels) - oracles.macro_auc_pairs(probs, labels)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(case=cases)
def test_auc_rank_invariance(case):
    probs, labels = _case(*case)
    base = MT.macro_auc_ovr(probs, labels)
    assert abs(MT.macro_auc_ovr(np.exp(3 * probs) - 7, labels) - base) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(case=cases)
def test_permutation_invariance(case):
    probs, labels = _case(*case)
    perm = np.random.default_rng(0).permutation(len(labels))
    k = probs.shape[1]
    a = MT.evaluate(probs, labels, k)
    b = MT.evaluate(probs[perm], labels[perm], k)
    for name in a.as_dict():
        assert abs(getattr(a, name) - getattr(b, name)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 60), seed=st.integers(0, 2**31 - 1))
def test_binary_complementary_columns(n, seed):
    rng = np.random.default_rng(seed)
    s = rng.uniform(size=n)
    labels = rng.integers(0, 2, n)
    labels[:2] = [0, 1]
    pos1 = labels == 1
    assert abs(MT.binary_auc(1 - s, ~pos1) - MT.binary_auc(s, pos1)) <= 1e-12


def test_report_mean_and_roundtrip():
    folds = [MT.Metrics(0.9, 0.8, 0.7, 0.6, 0.5), MT.Metrics(0.7, 0.6, 0.5, 0.4, 0.3)]
    rep = MT.MetricsReport.from_folds(folds)
    assert rep.mean.accuracy == (0.9 + 0.7) / 2
    assert rep.fold_values("macro_f1") == [0.6, 0.4]
    assert MT.MetricsReport.from_dict(rep.as_dict()) == rep
    with pytest.raises(ValueError):
        MT.MetricsReport.from_folds([])
