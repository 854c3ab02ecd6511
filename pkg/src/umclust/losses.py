"""Alignment and compactness losses plus the combined training objectives.

Alignment works on batch-level latent distributions: each view's softmax
latent rows are averaged into one categorical distribution over the latent
pseudo-cluster classes, and views are pulled toward the reliable view(s) by
KL divergence. Unless a stop-gradient is requested, gradients flow through
both sides of each divergence, so guides and followers move toward each
other.
"""

import numpy as np

from . import autodiff as ad
from .cluster import ClusterState, ReliableWeights
from .model import LatentBatch


def view_distribution(latent: LatentBatch | ad.Node) -> ad.Node:
    """Batch-level categorical distribution: column means of softmax rows."""
    z = latent.z if isinstance(latent, LatentBatch) else latent
    n = z.shape[0]
    if n == 0:
        raise ValueError("view_distribution of an empty batch")
    return ad.scale(ad.sum_rows(z), 1.0 / n)


def kl_categorical(p: ad.Node, q: ad.Node) -> ad.Node:
    """sum_i p_i ln(p_i / q_i), natural log, arguments clamped at 1e-12."""
    if p.shape != q.shape:
        raise ValueError(f"KL dimension mismatch: {p.shape} vs {q.shape}")
    return ad.sum_all(ad.multiply(p, ad.subtract(ad.log(p), ad.log(q))))


def _maybe_stop(node: ad.Node, stop_grad: bool) -> ad.Node:
    return ad.constant(node.value) if stop_grad else node


def align_loss_weighted(latents, weights: np.ndarray, normalizer: float,
                        stop_grad: bool = False) -> ad.Node:
    """sum_{v,r} (w_vr / normalizer) * KL(P^v || Q^r), skipping zero weights."""
    dists = [view_distribution(lb) for lb in latents]
    v_count = len(dists)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (v_count, v_count):
        raise ValueError(f"weight matrix must be {v_count} x {v_count}")
    total = None
    for v in range(v_count):
        for r in range(v_count):
            w = weights[v, r]
            if w == 0.0:
                continue
            term = ad.scale(kl_categorical(dists[v], _maybe_stop(dists[r], stop_grad)),
                            w / normalizer)
            total = term if total is None else ad.add(total, term)
    return total if total is not None else ad.constant([[0.0]])


def align_loss_one(latents, r: int, stop_grad: bool = False) -> ad.Node:
    """(1/V) sum_v KL(P^v || Q^r) with view r as the single guide."""
    v_count = len(latents)
    if not 0 <= r < v_count:
        raise ValueError(f"reliable view index {r} out of range")
    one_hot = np.zeros((v_count, v_count))
    one_hot[:, r] = 1.0
    return align_loss_weighted(latents, one_hot, float(v_count), stop_grad)


def align_loss_multi(latents, weights: ReliableWeights | np.ndarray,
                     stop_grad: bool = False) -> ad.Node:
    """sum_{v,r} (w_vr / V^2) * KL(P^v || Q^r) over the reliable-view weights."""
    w = weights.W if isinstance(weights, ReliableWeights) else weights
    v_count = len(latents)
    return align_loss_weighted(latents, w, float(v_count) ** 2, stop_grad)


def compactness_loss(latents, states: list[ClusterState], eps: float = 1e-6,
                     direct: bool = False) -> ad.Node:
    """Average over views and clusters of 1 / (mean distance + eps).

    ``mean distance`` is each cluster's mean Euclidean distance to its
    centroid. Centroids and assignments are constants: gradients only flow
    through the latent rows. Empty and singleton clusters are skipped: a
    singleton has no within-cluster relationships and its zero distance
    would contribute a gradient-free 1/eps spike that only pollutes the
    logged value. ``direct=True`` instead averages the mean distances
    themselves (the alternative reading that shrinks clusters).
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    if len(latents) != len(states):
        raise ValueError("one ClusterState per view required")
    v_count = len(latents)
    total = None
    k = None
    for lb, st in zip(latents, states):
        z = lb.z if isinstance(lb, LatentBatch) else lb
        k = st.centroids.shape[0]
        nonempty = (st.sizes > 1).astype(np.float64)[None, :]
        onehot = np.zeros((z.shape[0], k))
        onehot[np.arange(z.shape[0]), st.assignments] = 1.0
        dist = ad.sqrt(ad.sq_euclidean_to_rows(z, st.centroids))
        sums = ad.sum_rows(ad.multiply(ad.constant(onehot), dist))
        inv_sizes = np.where(st.sizes > 0, 1.0 / np.maximum(st.sizes, 1), 0.0)[None, :]
        cbar = ad.multiply(sums, ad.constant(inv_sizes))
        if direct:
            term = ad.sum_all(ad.multiply(ad.constant(nonempty), cbar))
        else:
            inv = ad.reciprocal(ad.add(cbar, ad.constant(np.full((1, k), eps))))
            term = ad.sum_all(ad.multiply(ad.constant(nonempty), inv))
        total = term if total is None else ad.add(total, term)
    if total is None:
        raise ValueError("compactness_loss needs at least one view")
    return ad.scale(total, 1.0 / (v_count * k))


def _combine(l_ae: ad.Node, l_align: ad.Node | None, l_compact: ad.Node | None,
             lam2: float, lam3: float) -> ad.Node:
    if lam2 < 0 or lam3 < 0:
        raise ValueError("loss weights must be >= 0")
    total = l_ae
    if l_align is not None and lam2 > 0:
        total = ad.add(total, ad.scale(l_align, lam2))
    if l_compact is not None and lam3 > 0:
        total = ad.add(total, ad.scale(l_compact, lam3))
    return total


def total_loss_rg(l_ae: ad.Node, l_kl: ad.Node | None, l_compact: ad.Node | None,
                  lam2: float, lam3: float) -> ad.Node:
    """Objective with a single reliable guide: l_AE + lam2*l_KL + lam3*l_C."""
    return _combine(l_ae, l_kl, l_compact, lam2, lam3)


def total_loss_rgs(l_ae: ad.Node, l_kls: ad.Node | None, l_compact: ad.Node | None,
                   lam2: float, lam3: float) -> ad.Node:
    """Objective with multiple reliable guides: l_AE + lam2*l_KLs + lam3*l_C."""
    return _combine(l_ae, l_kls, l_compact, lam2, lam3)
