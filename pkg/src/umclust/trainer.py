"""Mini-batch training loop with per-batch reliable-view selection.

Every batch: encode each view, run K-means on each view's latent rows,
score each view by its mean silhouette, derive the guidance (a single
reliable view in RG mode, a weight matrix over reliable views in the RGs
family), assemble the total loss and take one optimizer step. K-means
outputs and silhouettes are constants within a step; gradients flow only
through the network.
"""

import json
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from . import autodiff as ad
from . import losses as ls
from .cluster import (ClusterState, kmeans, reliable_weights,
                      select_reliable_view, silhouette_samples, view_silhouette)
from .data import ViewBundle
from .model import ViewAutoencoder, ae_orth_loss
from .util import ConfigError, DataError, NumericError, rng_for

MODES = ("RG", "RGs", "URGs", "NRGs")
OPTIMIZERS = ("adaptive-moments", "sgd-momentum")
_WEIGHT_MODE = {"RGs": "sigmoid", "URGs": "uniform", "NRGs": "normalized"}


@dataclass
class TrainConfig:
    """All hyperparameters of one training run.

    ``use_orth`` / ``use_align`` / ``use_compact`` switch whole loss terms
    off for ablations; the lambdas weight the terms that stay on.
    """

    k: int
    mode: str = "RGs"
    lambda1: float = 0.1
    lambda2: float = 1.0
    lambda3: float = 0.01
    use_orth: bool = True
    use_align: bool = True
    use_compact: bool = True
    epochs: int = 50
    batch_size: int = 256
    latent_dim: int = 128
    hidden_widths: tuple = (1024, 1024, 1024)
    seed: int = 0
    optimizer: str = "adaptive-moments"
    lr: float = 1e-3
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    compact_eps: float = 1e-6
    compact_direct: bool = False
    orth_gram: str = "feature"
    orth_scale_by_batch: bool = True
    align_stop_grad: bool = False
    silhouette_squared: bool = True
    kmeans_max_iters: int = 50
    kmeans_restarts: int = 1
    final_kmeans_restarts: int = 10
    standardize: bool = True

    def validate(self) -> "TrainConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ConfigError("lambdas must be >= 0")
        if self.latent_dim < 1 or self.batch_size < 1:
            raise ConfigError("latent_dim and batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.compact_eps <= 0:
            raise ConfigError("compact_eps must be > 0")
        if self.orth_gram not in ("feature", "sample"):
            raise ConfigError("orth_gram must be 'feature' or 'sample'")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        return self

    def to_mapping(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_mapping(cls, mapping: dict) -> "TrainConfig":
        """Build from a flat mapping; dotted keys map to underscore fields."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for raw_key, value in mapping.items():
            key = raw_key.replace(".", "_").replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown config key {raw_key!r}")
            if key == "hidden_widths":
                value = tuple(int(x) for x in value)
            kwargs[key] = value
        if "k" not in kwargs:
            raise ConfigError("config must set 'k' (cluster count)")
        try:
            cfg = cls(**kwargs)
        except TypeError as e:
            raise ConfigError(str(e)) from e
        return cfg.validate()


@dataclass
class EpochLog:
    epoch: int
    loss_total: float
    loss_ae: float
    loss_align: float
    loss_compact: float
    view_silhouettes: list[float]
    reliable_counts: list[int]
    guide_counts: list[int]
    n_batches: int
    reliable_last: int
    weights_last: list | None = None

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "loss_total": self.loss_total,
            "loss_ae": self.loss_ae,
            "loss_align": self.loss_align,
            "loss_compact": self.loss_compact,
            "view_silhouettes": self.view_silhouettes,
            "reliable_counts": self.reliable_counts,
            "guide_counts": self.guide_counts,
            "n_batches": self.n_batches,
            "reliable_last": self.reliable_last,
            "weights_last": self.weights_last,
        }


# ---------------------------------------------------------------------------
# optimizers (state lives in the Parameter moment buffers)


class AdaptiveMoments:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p in self.params:
            g = p.grad
            if g is None:
                continue
            p.m *= self.b1
            p.m += (1.0 - self.b1) * g
            p.v *= self.b2
            p.v += (1.0 - self.b2) * (g * g)
            p.value[...] -= self.lr * (p.m / c1) / (np.sqrt(p.v / c2) + self.eps)


class MomentumSGD:
    def __init__(self, params, lr, momentum=0.9):
        self.params = list(params)
        self.lr, self.mu = lr, momentum

    def step(self):
        for p in self.params:
            g = p.grad
            if g is None:
                continue
            p.m *= self.mu
            p.m += g
            p.value[...] -= self.lr * p.m


def make_optimizer(cfg: TrainConfig, params):
    if cfg.optimizer == "adaptive-moments":
        return AdaptiveMoments(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    return MomentumSGD(params, cfg.lr, cfg.momentum)


# ---------------------------------------------------------------------------
# batching


def _balanced_sizes(n: int, parts: int) -> list[int]:
    base, rem = divmod(n, parts)
    return [base + (1 if i < rem else 0) for i in range(parts)]


def make_batches(bundle: ViewBundle, batch_size: int, k: int, seed: int,
                 epoch: int) -> list[list[np.ndarray]]:
    """Per-epoch batch index groups, one index array per view per batch.

    There are ceil(N / batch_size) batches; each draws from every view in
    proportion to the view's size (never fewer than ``k`` samples, so the
    per-batch K-means stays well-posed) and every sample appears exactly once
    per epoch. Shuffling is seeded by (seed, epoch, view).
    """
    counts = bundle.counts()
    total = sum(counts)
    n_batches = math.ceil(total / batch_size)
    for v, n in enumerate(counts):
        if n < k:
            raise DataError(f"view {v + 1} has {n} samples, fewer than k={k}")
    per_view_chunks = []
    for v, n in enumerate(counts):
        idx = rng_for(seed, 41, epoch, v).permutation(n)
        quota = max(k, round(batch_size * n / total))
        chunks = [idx[b * quota: (b + 1) * quota] for b in range(n_batches - 1)]
        chunks.append(idx[(n_batches - 1) * quota:])
        if any(len(c) < k for c in chunks):
            # tail chunk too small for K-means: fall back to an even split
            sizes = _balanced_sizes(n, n_batches)
            if min(sizes) < k:
                raise DataError(
                    f"view {v + 1}: cannot give every batch {k} samples "
                    f"({n} samples across {n_batches} batches)")
            bounds = np.cumsum([0] + sizes)
            chunks = [idx[bounds[b]:bounds[b + 1]] for b in range(n_batches)]
        per_view_chunks.append(chunks)
    return [[per_view_chunks[v][b] for v in range(bundle.V)] for b in range(n_batches)]


# ---------------------------------------------------------------------------
# training


def _weight_fn_for(cfg: TrainConfig):
    """Guidance for one batch: (weight matrix, KL normalizer) from silhouettes.

    RG uses a one-hot row on the single reliable view with normalizer V;
    the RGs family uses its weight matrix with normalizer V^2. Both modes
    share the weighted-alignment code path.
    """
    if cfg.mode == "RG":
        def fn(sils):
            v_count = len(sils)
            r = select_reliable_view(sils)
            w = np.zeros((v_count, v_count))
            w[:, r] = 1.0
            return w, float(v_count)
    else:
        wmode = _WEIGHT_MODE[cfg.mode]

        def fn(sils):
            rw = reliable_weights(sils, wmode)
            return rw.W, float(len(sils)) ** 2
    return fn


def train_epoch(models, bundle: ViewBundle, cfg: TrainConfig, epoch: int,
                optimizer, weight_fn=None) -> EpochLog:
    """One pass over the data; returns the epoch's aggregate log."""
    if weight_fn is None:
        weight_fn = _weight_fn_for(cfg)
    v_count = bundle.V
    params = [p for m in models for p in m.parameters()]
    batches = make_batches(bundle, cfg.batch_size, cfg.k, cfg.seed, epoch)
    sums = np.zeros(4)
    sil_sums = np.zeros(v_count)
    reliable_counts = [0] * v_count
    guide_counts = [0] * v_count
    reliable_last = -1
    weights_last = None
    for b, groups in enumerate(batches):
        latents = []
        items = []
        for v, m in enumerate(models):
            x = bundle.views[v].x[groups[v]]
            lb = m.encode(x)
            items.append((x, lb, m.decode(lb)))
            latents.append(lb)
        l_ae = ae_orth_loss(items, cfg.lambda1 if cfg.use_orth else 0.0,
                            gram=cfg.orth_gram, scale_by_batch=cfg.orth_scale_by_batch)

        states: list[ClusterState] = []
        sils = []
        for v, lb in enumerate(latents):
            z = lb.z.value
            st = kmeans(z, cfg.k, seed=(cfg.seed, 42, epoch, b, v),
                        max_iters=cfg.kmeans_max_iters,
                        restarts=cfg.kmeans_restarts, view=v)
            st.view_silhouette = view_silhouette(
                silhouette_samples(z, st.assignments, squared=cfg.silhouette_squared))
            states.append(st)
            sils.append(st.view_silhouette)
        r = select_reliable_view(sils)
        reliable_counts[r] += 1
        reliable_last = r
        sil_sums += np.asarray(sils)

        l_align = None
        if cfg.use_align and cfg.lambda2 > 0 and v_count > 0:
            w, normalizer = weight_fn(np.asarray(sils))
            weights_last = w
            for guide in range(v_count):
                if np.any(w[np.arange(v_count) != guide, guide] != 0.0):
                    guide_counts[guide] += 1
            l_align = ls.align_loss_weighted(latents, w, normalizer,
                                             stop_grad=cfg.align_stop_grad)
        l_compact = None
        if cfg.use_compact and cfg.lambda3 > 0:
            l_compact = ls.compactness_loss(latents, states, eps=cfg.compact_eps,
                                            direct=cfg.compact_direct)
        total = ls.total_loss_rg(l_ae, l_align, l_compact, cfg.lambda2, cfg.lambda3)
        if not np.isfinite(total.item()):
            raise NumericError(
                f"non-finite loss at epoch {epoch}, batch {b} "
                f"(ae={l_ae.item():.4g})")
        ad.zero_grad(params)
        ad.backward(total)
        optimizer.step()
        sums += (total.item(), l_ae.item(),
                 l_align.item() if l_align is not None else 0.0,
                 l_compact.item() if l_compact is not None else 0.0)
    nb = len(batches)
    return EpochLog(
        epoch=epoch,
        loss_total=sums[0] / nb,
        loss_ae=sums[1] / nb,
        loss_align=sums[2] / nb,
        loss_compact=sums[3] / nb,
        view_silhouettes=(sil_sums / nb).tolist(),
        reliable_counts=reliable_counts,
        guide_counts=guide_counts,
        n_batches=nb,
        reliable_last=reliable_last,
        weights_last=None if weights_last is None else weights_last.tolist(),
    )


def build_models(bundle: ViewBundle, cfg: TrainConfig) -> list[ViewAutoencoder]:
    return [ViewAutoencoder(v, view.x.shape[1], cfg.latent_dim,
                            hidden=cfg.hidden_widths, seed=cfg.seed)
            for v, view in enumerate(bundle.views)]


def fit(bundle: ViewBundle, cfg: TrainConfig, log_path=None, weight_fn=None,
        on_epoch_end=None) -> tuple[list[ViewAutoencoder], list[EpochLog]]:
    """Train for ``cfg.epochs`` epochs; fully reproducible for a fixed seed.

    When ``log_path`` is given, each epoch's log is appended as one JSON
    object per line. ``on_epoch_end(models, log)`` runs after each epoch
    (convergence monitoring hooks); it must not mutate the models.
    """
    cfg.validate()
    if cfg.batch_size < bundle.V * cfg.k:
        raise ConfigError(
            f"batch_size {cfg.batch_size} < V*k = {bundle.V * cfg.k}; every view "
            "needs at least k samples per batch")
    models = build_models(bundle, cfg)
    params = [p for m in models for p in m.parameters()]
    optimizer = make_optimizer(cfg, params)
    logs = []
    sink = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            log = train_epoch(models, bundle, cfg, epoch, optimizer, weight_fn)
            logs.append(log)
            if sink:
                sink.write(json.dumps(log.to_dict(), sort_keys=True) + "\n")
                sink.flush()
            if on_epoch_end is not None:
                on_epoch_end(models, log)
    finally:
        if sink:
            sink.close()
    return models, logs


def full_data_loss(models, bundle: ViewBundle, cfg: TrainConfig) -> float:
    """Total objective evaluated once over the whole dataset.

    Treats the full data as a single batch per view; used for convergence
    monitoring, where the within-epoch descent of the running batch means
    would otherwise blur the curve.
    """
    latents, items = [], []
    for v, m in enumerate(models):
        x = bundle.views[v].x
        lb = m.encode(x)
        items.append((x, lb, m.decode(lb)))
        latents.append(lb)
    l_ae = ae_orth_loss(items, cfg.lambda1 if cfg.use_orth else 0.0,
                        gram=cfg.orth_gram, scale_by_batch=cfg.orth_scale_by_batch)
    states, sils = [], []
    for v, lb in enumerate(latents):
        st = kmeans(lb.z.value, cfg.k, seed=(cfg.seed, 45, v),
                    max_iters=cfg.kmeans_max_iters,
                    restarts=cfg.kmeans_restarts, view=v)
        st.view_silhouette = view_silhouette(
            silhouette_samples(lb.z.value, st.assignments,
                               squared=cfg.silhouette_squared))
        states.append(st)
        sils.append(st.view_silhouette)
    l_align = None
    if cfg.use_align and cfg.lambda2 > 0:
        w, normalizer = _weight_fn_for(cfg)(np.asarray(sils))
        l_align = ls.align_loss_weighted(latents, w, normalizer,
                                         stop_grad=cfg.align_stop_grad)
    l_compact = None
    if cfg.use_compact and cfg.lambda3 > 0:
        l_compact = ls.compactness_loss(latents, states, eps=cfg.compact_eps,
                                        direct=cfg.compact_direct)
    return ls.total_loss_rg(l_ae, l_align, l_compact, cfg.lambda2, cfg.lambda3).item()


def extract_latents(models, bundle: ViewBundle) -> list[np.ndarray]:
    """Full-dataset latent matrices, no gradient tracking."""
    return [m.encode_np(view.x) for m, view in zip(models, bundle.views)]


def final_cluster(latents, k: int, seed: int, restarts: int = 10) -> np.ndarray:
    """K-means over the row-stacked latents of all views.

    The returned assignment vector follows the bundle's view-major sample
    order.
    """
    z = np.vstack(latents)
    if k > z.shape[0]:
        raise DataError(f"k={k} exceeds the {z.shape[0]} pooled samples")
    state = kmeans(z, k, seed=(seed, 43), max_iters=300, restarts=restarts)
    return state.assignments


def ablation_config(cfg: TrainConfig, use_orth: bool, use_compact: bool,
                    align: str) -> TrainConfig:
    """Derive one ablation-grid cell: align is 'none', 'KL' or 'KLs'."""
    if align == "none":
        return replace(cfg, use_orth=use_orth, use_compact=use_compact,
                       use_align=False, mode="RG")
    mode = "RG" if align == "KL" else "RGs"
    return replace(cfg, use_orth=use_orth, use_compact=use_compact,
                   use_align=True, mode=mode)
