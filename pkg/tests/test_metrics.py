"""Clustering metric oracles: contingency NMI, permutation ACC, pair F1."""

import itertools
import math

import numpy as np
import pytest

from umclust.metrics import accuracy_hungarian, nmi, pairwise_f1_precision
from umclust.util import rng_for


def oracle_nmi(truth, pred):
    """Contingency-table mutual information, normalized by the geometric mean
    of the entropies, written with explicit loops."""
    truth, pred = np.asarray(truth), np.asarray(pred)
    n = len(truth)
    classes, clusters = sorted(set(truth.tolist())), sorted(set(pred.tolist()))
    mi = 0.0
    for c in classes:
        for g in clusters:
            nij = ((truth == c) & (pred == g)).sum()
            if nij:
                pi = (truth == c).sum() / n
                pj = (pred == g).sum() / n
                mi += (nij / n) * math.log((nij / n) / (pi * pj))
    ht = -sum(((truth == c).sum() / n) * math.log((truth == c).sum() / n)
              for c in classes)
    hp = -sum(((pred == g).sum() / n) * math.log((pred == g).sum() / n)
              for g in clusters)
    if ht == 0.0 and hp == 0.0:
        return 1.0
    if ht == 0.0 or hp == 0.0:
        return 0.0
    return mi / math.sqrt(ht * hp)


def oracle_acc(truth, pred):
    """Best accuracy over all injective cluster -> class maps (brute force)."""
    truth, pred = np.asarray(truth), np.asarray(pred)
    classes, clusters = sorted(set(truth.tolist())), sorted(set(pred.tolist()))
    size = max(len(classes), len(clusters))
    best = 0
    for perm in itertools.permutations(range(size), len(clusters)):
        correct = 0
        for g, target in zip(clusters, perm):
            if target < len(classes):
                correct += ((pred == g) & (truth == classes[target])).sum()
        best = max(best, correct)
    return best / len(truth)


def oracle_pair_f1(truth, pred):
    """Exhaustive pair enumeration."""
    n = len(truth)
    tp = pred_same = truth_same = 0
    for i in range(n):
        for j in range(i + 1, n):
            t = truth[i] == truth[j]
            p = pred[i] == pred[j]
            tp += t and p
            pred_same += p
            truth_same += t
    precision = tp / pred_same if pred_same else 0.0
    recall = tp / truth_same if truth_same else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return f1, precision


def test_nmi_relabeling_gives_one():
    assert nmi([0, 0, 1, 1], [1, 1, 0, 0]) == pytest.approx(1.0, abs=1e-12)


def test_nmi_independent_partitions_zero():
    assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-12)


def test_nmi_against_oracle_hand_case():
    truth = [0, 0, 1, 1, 2, 2]
    pred = [0, 0, 1, 1, 1, 1]
    assert nmi(truth, pred) == pytest.approx(oracle_nmi(truth, pred), abs=1e-12)


def test_nmi_degenerate_cases():
    assert nmi([0, 0, 0], [1, 1, 1]) == 1.0           # both single-cluster
    assert nmi([0, 0, 0], [0, 1, 2]) == 0.0           # one side zero entropy
    assert nmi([0, 1, 2], [0, 0, 0]) == 0.0


def test_nmi_symmetric_and_bounded():
    rng = rng_for(5, 1)
    for _ in range(50):
        n = int(rng.integers(2, 40))
        t = rng.integers(0, 4, size=n)
        p = rng.integers(0, 5, size=n)
        a, b = nmi(t, p), nmi(p, t)
        assert a == pytest.approx(b, abs=1e-12)
        assert 0.0 <= a <= 1.0


def test_nmi_arithmetic_variant():
    truth = [0, 0, 1, 1, 2, 2]
    pred = [0, 0, 1, 1, 1, 1]
    geo = nmi(truth, pred, average="geometric")
    ari = nmi(truth, pred, average="arithmetic")
    assert ari <= geo  # arithmetic mean >= geometric mean of entropies


def test_nmi_length_mismatch():
    with pytest.raises(ValueError):
        nmi([0, 1], [0, 1, 1])


def test_accuracy_hand_cases():
    assert accuracy_hungarian([0, 1, 2, 0], [2, 0, 1, 2]) == 1.0
    assert accuracy_hungarian([0, 0, 1, 1, 2], [1, 1, 0, 0, 0]) == pytest.approx(0.8)
    assert accuracy_hungarian([0, 0, 1, 1], [0, 0, 0, 0]) == pytest.approx(0.5)


def test_accuracy_matches_brute_force():
    rng = rng_for(5, 2)
    for _ in range(100):
        n = int(rng.integers(3, 30))
        t = rng.integers(0, int(rng.integers(2, 7)), size=n)
        p = rng.integers(0, int(rng.integers(2, 7)), size=n)
        assert accuracy_hungarian(t, p) == pytest.approx(oracle_acc(t, p), abs=1e-12)


def test_pairwise_hand_case():
    f1, precision = pairwise_f1_precision([0, 0, 1, 1], [0, 0, 0, 1])
    assert precision == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert f1 == pytest.approx(0.4, abs=1e-12)


def test_pairwise_identical_partitions():
    f1, precision = pairwise_f1_precision([0, 1, 0, 1], [1, 0, 1, 0])
    assert f1 == 1.0 and precision == 1.0


def test_pairwise_all_singletons():
    f1, precision = pairwise_f1_precision([0, 0, 1, 1], [0, 1, 2, 3])
    assert f1 == 0.0 and precision == 0.0


def test_pairwise_matches_exhaustive_enumeration():
    rng = rng_for(5, 3)
    for _ in range(60):
        n = int(rng.integers(2, 25))
        t = rng.integers(0, 4, size=n)
        p = rng.integers(0, 4, size=n)
        f1, precision = pairwise_f1_precision(t, p)
        ref_f1, ref_p = oracle_pair_f1(t, p)
        assert f1 == pytest.approx(ref_f1, abs=1e-12)
        assert precision == pytest.approx(ref_p, abs=1e-12)


def test_metrics_invariant_under_relabeling():
    rng = rng_for(5, 4)
    t = rng.integers(0, 3, size=30)
    p = rng.integers(0, 3, size=30)
    relabel = np.array([2, 0, 1])
    assert nmi(t, relabel[p]) == pytest.approx(nmi(t, p), abs=1e-12)
    assert accuracy_hungarian(t, relabel[p]) == pytest.approx(
        accuracy_hungarian(t, p), abs=1e-12)
    assert pairwise_f1_precision(t, relabel[p]) == pytest.approx(
        pairwise_f1_precision(t, p), abs=1e-12)
