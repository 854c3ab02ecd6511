"""Dataset ingestion, the unpairing protocol, and a synthetic generator.

On-disk layout of a dataset directory:

* ``manifest.json``: ``{name, V, K, views: [{file, labels_file, n, d}, ...],
  unpair_seed?}``
* one headerless CSV per view with one sample per row (values written with
  17 significant digits so a round trip is exact), plus one label file with
  one integer per line.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .util import DataError, rng_for


@dataclass
class ViewData:
    x: np.ndarray
    labels: np.ndarray


@dataclass
class ViewBundle:
    """A multi-view dataset; unpaired when ``unpair_seed`` is set."""

    name: str
    k: int
    views: list[ViewData]
    unpair_seed: int | None = None

    @property
    def V(self) -> int:
        return len(self.views)

    @property
    def N(self) -> int:
        return sum(v.x.shape[0] for v in self.views)

    def counts(self) -> list[int]:
        return [v.x.shape[0] for v in self.views]

    def pooled_labels(self) -> np.ndarray:
        """Ground-truth labels in view-major sample order."""
        return np.concatenate([v.labels for v in self.views])

    def validate(self) -> "ViewBundle":
        if self.k < 1 or not self.views:
            raise DataError("bundle needs at least one view and one cluster")
        seen = set()
        for i, v in enumerate(self.views):
            if v.x.ndim != 2 or v.x.shape[0] == 0:
                raise DataError(f"view {i + 1}: empty or non-matrix features")
            if v.labels.shape != (v.x.shape[0],):
                raise DataError(f"view {i + 1}: labels do not match the sample count")
            if not np.isfinite(v.x).all():
                raise DataError(f"view {i + 1}: non-finite feature values")
            if v.labels.min() < 0 or v.labels.max() >= self.k:
                raise DataError(f"view {i + 1}: labels outside 0..{self.k - 1}")
            seen.update(np.unique(v.labels).tolist())
        if seen != set(range(self.k)):
            raise DataError(f"labels do not span 0..{self.k - 1}")
        return self


@dataclass
class SynthSpec:
    """Recipe for a paired synthetic bundle with known cluster structure."""

    k: int
    views: int
    per_cluster: int
    view_dims: list[int] = field(default_factory=list)
    noise: list[float] = field(default_factory=list)
    separation: float = 6.0
    gen_dim: int | None = None
    nonlinear: bool = False
    seed: int = 0

    def resolved(self) -> "SynthSpec":
        dims = list(self.view_dims) or [20] * self.views
        noise = list(self.noise) or [0.0] * self.views
        if len(dims) == 1:
            dims = dims * self.views
        if len(noise) == 1:
            noise = noise * self.views
        if len(dims) != self.views or len(noise) != self.views:
            raise DataError("view_dims/noise must have one entry per view")
        if self.k < 1 or self.views < 1 or self.per_cluster < 1:
            raise DataError("k, views and per_cluster must be >= 1")
        if any(s < 0 for s in noise):
            raise DataError("noise sigmas must be >= 0")
        gen = self.gen_dim or self.k
        if gen < self.k:
            raise DataError("generative dimension must be >= k (simplex means)")
        return SynthSpec(self.k, self.views, self.per_cluster, dims, noise,
                         self.separation, gen, self.nonlinear, self.seed)


def synth_generate(spec: SynthSpec) -> ViewBundle:
    """Paired bundle: shared latent Gaussian clusters mapped per view.

    Cluster means are drawn on a scaled simplex in the generative space:
    each mean blends a distinct simplex corner with a seeded random simplex
    point, so clusters stay at least ~0.9 * separation apart while every
    cluster pair gets its own distance. That shared asymmetric geometry is
    what lets alignment recover cross-view cluster correspondence from
    unpaired views. Each view then applies its own seeded random linear map
    (optionally a tanh) and adds isotropic noise.
    """
    spec = spec.resolved()
    rng = rng_for(spec.seed, 31)
    corner_mix = 0.35   # share of each mean drawn from the random simplex point
    simplex_pts = rng.dirichlet(np.ones(spec.gen_dim), size=spec.k)
    means = spec.separation * ((1.0 - corner_mix) * np.eye(spec.gen_dim)[:spec.k]
                               + corner_mix * simplex_pts)
    n = spec.k * spec.per_cluster
    latent = rng.normal(size=(n, spec.gen_dim))
    labels = np.repeat(np.arange(spec.k), spec.per_cluster)
    latent += means[labels]
    views = []
    for v in range(spec.views):
        vrng = rng_for(spec.seed, 32, v)
        a = vrng.normal(size=(spec.gen_dim, spec.view_dims[v])) / math.sqrt(spec.gen_dim)
        x = latent @ a
        if spec.nonlinear:
            x = np.tanh(x)
        if spec.noise[v] > 0:
            x = x + spec.noise[v] * vrng.normal(size=x.shape)
        views.append(ViewData(x, labels.copy()))
    name = f"synth_k{spec.k}_v{spec.views}_s{spec.seed}"
    return ViewBundle(name, spec.k, views).validate()


def unpair(bundle: ViewBundle, seed: int) -> ViewBundle:
    """Assign every sample to exactly one view by a seeded uniform partition.

    Views must be row-aligned (paired). Group sizes differ by at most one;
    each view keeps its surviving rows in their original order and the seed
    is recorded in the result's manifest.
    """
    if bundle.V < 2:
        raise DataError("unpairing needs at least two views")
    counts = bundle.counts()
    if len(set(counts)) != 1:
        raise DataError("paired bundle must have equal view sizes")
    ref = bundle.views[0].labels
    for v in bundle.views[1:]:
        if not np.array_equal(v.labels, ref):
            raise DataError("paired bundle must have row-aligned labels")
    n = counts[0]
    perm = rng_for(seed, 33).permutation(n)
    base, rem = divmod(n, bundle.V)
    views = []
    start = 0
    for v in range(bundle.V):
        size = base + (1 if v < rem else 0)
        keep = np.sort(perm[start:start + size])
        start += size
        views.append(ViewData(bundle.views[v].x[keep].copy(),
                              bundle.views[v].labels[keep].copy()))
    return ViewBundle(bundle.name, bundle.k, views, unpair_seed=int(seed)).validate()


def standardize_bundle(bundle: ViewBundle) -> ViewBundle:
    """Zero mean / unit variance per column per view (constant columns stay
    centered)."""
    views = []
    for v in bundle.views:
        mu = v.x.mean(axis=0)
        sd = v.x.std(axis=0)
        sd = np.where(sd > 1e-12, sd, 1.0)
        views.append(ViewData((v.x - mu) / sd, v.labels.copy()))
    return ViewBundle(bundle.name, bundle.k, views, bundle.unpair_seed)


def save_dataset(bundle: ViewBundle, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "name": bundle.name,
        "V": bundle.V,
        "K": bundle.k,
        "views": [],
    }
    if bundle.unpair_seed is not None:
        manifest["unpair_seed"] = bundle.unpair_seed
    for i, v in enumerate(bundle.views, start=1):
        vf, lf = f"view{i}.csv", f"labels{i}.csv"
        manifest["views"].append(
            {"file": vf, "labels_file": lf, "n": int(v.x.shape[0]), "d": int(v.x.shape[1])})
        with open(directory / vf, "w") as f:
            for row in v.x:
                f.write(",".join(f"{x:.17g}" for x in row) + "\n")
        with open(directory / lf, "w") as f:
            f.writelines(f"{int(y)}\n" for y in v.labels)
    with open(directory / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return directory


def load_dataset(directory, standardize: bool = True) -> ViewBundle:
    """Load and validate a dataset directory; standardizes by default."""
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.is_file():
        raise DataError(f"{directory}: missing manifest.json")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{mpath}: invalid JSON ({e})") from e
    for key in ("name", "V", "K", "views"):
        if key not in manifest:
            raise DataError(f"{mpath}: missing key {key!r}")
    if len(manifest["views"]) != manifest["V"]:
        raise DataError(f"{mpath}: V={manifest['V']} but {len(manifest['views'])} view entries")
    extra = len(list(directory.glob("view*.csv")))
    if extra != manifest["V"]:
        raise DataError(
            f"{directory}: manifest declares {manifest['V']} views but found {extra} view files")
    views = []
    for i, entry in enumerate(manifest["views"], start=1):
        vpath, lpath = directory / entry["file"], directory / entry["labels_file"]
        if not vpath.is_file() or not lpath.is_file():
            raise DataError(f"view {i}: missing {entry['file']} or {entry['labels_file']}")
        try:
            x = np.loadtxt(vpath, delimiter=",", dtype=np.float64, ndmin=2)
        except ValueError as e:
            raise DataError(f"{vpath}: non-numeric cell ({e})") from e
        if lpath.stat().st_size == 0:
            raise DataError(f"{lpath}: empty label file")
        try:
            labels = np.loadtxt(lpath, dtype=np.int64, ndmin=1)
        except ValueError as e:
            raise DataError(f"{lpath}: non-numeric label ({e})") from e
        if x.shape != (entry["n"], entry["d"]):
            raise DataError(
                f"{vpath}: shape {x.shape} does not match manifest ({entry['n']}, {entry['d']})")
        views.append(ViewData(x, labels))
    bundle = ViewBundle(manifest["name"], int(manifest["K"]), views,
                        manifest.get("unpair_seed")).validate()
    return standardize_bundle(bundle) if standardize else bundle


def manifest_hash(directory) -> str:
    return hashlib.sha256((Path(directory) / "manifest.json").read_bytes()).hexdigest()


def digits_two_view() -> ViewBundle:
    """Paired two-view handwritten-digit bundle built from bundled data.

    View 1 holds 2-D Fourier magnitude coefficients of each 8x8 digit image,
    view 2 the raw pixel intensities: two genuinely different feature spaces
    over the same samples, ready for ``unpair``.
    """
    from sklearn.datasets import load_digits

    digits = load_digits()
    pixels = digits.data.astype(np.float64)
    images = digits.images.astype(np.float64)
    fourier = np.abs(np.fft.fft2(images)).reshape(len(images), -1)
    labels = digits.target.astype(np.int64)
    views = [ViewData(fourier, labels.copy()), ViewData(pixels, labels.copy())]
    return ViewBundle("digits-2view", 10, views).validate()
