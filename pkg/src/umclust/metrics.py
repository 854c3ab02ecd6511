"""External clustering metrics: NMI, Hungarian-matched accuracy, pairwise F1."""

import numpy as np
from scipy.optimize import linear_sum_assignment


def _check_pair(truth, pred):
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.shape != pred.shape or truth.ndim != 1:
        raise ValueError("truth and pred must be 1-D arrays of equal length")
    return truth, pred


def contingency(truth, pred) -> np.ndarray:
    """Class-by-cluster count matrix over dense relabeled ids."""
    truth, pred = _check_pair(truth, pred)
    _, ti = np.unique(truth, return_inverse=True)
    _, pi = np.unique(pred, return_inverse=True)
    table = np.zeros((ti.max() + 1, pi.max() + 1), dtype=np.int64)
    np.add.at(table, (ti, pi), 1)
    return table


def nmi(truth, pred, average: str = "geometric") -> float:
    """Mutual information normalized by the mean of the two entropies.

    ``average`` selects the geometric (default) or arithmetic mean. When both
    partitions are single-cluster they are identical and score 1; if only one
    has zero entropy the score is 0.
    """
    if average not in ("geometric", "arithmetic"):
        raise ValueError(f"unknown average {average!r}")
    table = contingency(truth, pred)
    n = table.sum()
    if n < 1:
        raise ValueError("empty partition")
    pt = table.sum(axis=1) / n
    pp = table.sum(axis=0) / n
    h_t = float(-(pt[pt > 0] * np.log(pt[pt > 0])).sum())
    h_p = float(-(pp[pp > 0] * np.log(pp[pp > 0])).sum())
    if h_t == 0.0 and h_p == 0.0:
        return 1.0
    if h_t == 0.0 or h_p == 0.0:
        return 0.0
    pij = table / n
    outer = pt[:, None] * pp[None, :]
    nz = pij > 0
    mi = float((pij[nz] * np.log(pij[nz] / outer[nz])).sum())
    denom = np.sqrt(h_t * h_p) if average == "geometric" else 0.5 * (h_t + h_p)
    return float(min(max(mi / denom, 0.0), 1.0))


def accuracy_hungarian(truth, pred) -> float:
    """Accuracy under the best one-to-one map of clusters onto classes."""
    truth, pred = _check_pair(truth, pred)
    table = contingency(truth, pred)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / truth.size)


def pairwise_f1_precision(truth, pred) -> tuple[float, float]:
    """(F1, precision) over all unordered sample pairs.

    A pair counts as a true positive when both partitions place it in one
    cluster. Degenerate denominators (no same-cluster pairs on one side)
    yield 0 for the affected score.
    """
    truth, pred = _check_pair(truth, pred)
    if truth.size < 2:
        raise ValueError("pairwise scores need at least 2 samples")
    table = contingency(truth, pred)

    def pairs(counts):
        counts = counts.astype(np.float64)
        return float((counts * (counts - 1) / 2).sum())

    tp = pairs(table.reshape(-1))
    pred_same = pairs(table.sum(axis=0))
    truth_same = pairs(table.sum(axis=1))
    precision = tp / pred_same if pred_same > 0 else 0.0
    recall = tp / truth_same if truth_same > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return float(f1), float(precision)


def evaluate_partition(truth, pred) -> dict:
    """All four reported metrics as fractions."""
    f1, precision = pairwise_f1_precision(truth, pred)
    return {
        "nmi": nmi(truth, pred),
        "acc": accuracy_hungarian(truth, pred),
        "f1": f1,
        "precision": precision,
    }
