"""Per-view autoencoders producing softmax latent codes.

Each view owns an encoder (relu hidden layers, row-softmax output) and a
mirrored decoder (relu hidden layers, linear output). The softmax latent
makes every row a distribution over ``latent_dim`` fine-grained pseudo-cluster
classes, which is what the alignment and compactness terms operate on.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .util import DataError, rng_for

DEFAULT_HIDDEN = (1024, 1024, 1024)

_CKPT_MAGIC = b"UMAE"
_CKPT_VERSION = 1


@dataclass
class LatentBatch:
    """Softmax latent rows for one view's batch (rows sum to 1)."""

    view: int
    z: ad.Node


class ViewAutoencoder:
    """Encoder/decoder pair for a single view.

    Layer widths run ``input_dim -> hidden... -> latent_dim`` for the encoder
    and mirrored for the decoder. Weights are initialized uniformly in
    +/- sqrt(6 / (fan_in + fan_out)) from a stream derived from
    (seed, view, layer); biases start at zero.
    """

    def __init__(self, view: int, input_dim: int, latent_dim: int = 128,
                 hidden=DEFAULT_HIDDEN, seed: int = 0):
        if input_dim < 1 or latent_dim < 1:
            raise ValueError("input_dim and latent_dim must be positive")
        self.view = view
        self.input_dim = int(input_dim)
        self.latent_dim = int(latent_dim)
        self.hidden = tuple(int(h) for h in hidden)
        enc_widths = [self.input_dim, *self.hidden, self.latent_dim]
        dec_widths = [self.latent_dim, *reversed(self.hidden), self.input_dim]
        self.enc_layers = self._init_layers(enc_widths, seed, tag=11)
        self.dec_layers = self._init_layers(dec_widths, seed, tag=12)

    def _init_layers(self, widths, seed, tag):
        layers = []
        for li, (fi, fo) in enumerate(zip(widths[:-1], widths[1:])):
            rng = rng_for(seed, tag, self.view, li)
            lim = np.sqrt(6.0 / (fi + fo))
            w = ad.Parameter(rng.uniform(-lim, lim, size=(fi, fo)))
            b = ad.Parameter(np.zeros((1, fo)))
            layers.append((w, b))
        return layers

    @property
    def encoder_widths(self) -> list[int]:
        return [self.input_dim, *self.hidden, self.latent_dim]

    def parameters(self) -> list[ad.Parameter]:
        out = []
        for w, b in [*self.enc_layers, *self.dec_layers]:
            out.extend((w, b))
        return out

    # -- graph-building forward passes (training) --

    def encode(self, x) -> LatentBatch:
        x = ad.as_value(x) if not isinstance(x, ad.Node) else x
        h = x if isinstance(x, ad.Node) else ad.constant(x)
        if h.shape[1] != self.input_dim:
            raise ValueError(
                f"view {self.view}: expected {self.input_dim} features, got {h.shape[1]}")
        for w, b in self.enc_layers[:-1]:
            h = ad.relu(ad.broadcast_add_row(ad.matmul(h, w.node), b.node))
        w, b = self.enc_layers[-1]
        z = ad.row_softmax(ad.broadcast_add_row(ad.matmul(h, w.node), b.node))
        return LatentBatch(self.view, z)

    def decode(self, z) -> ad.Node:
        h = z.z if isinstance(z, LatentBatch) else z
        if not isinstance(h, ad.Node):
            h = ad.constant(h)
        if h.shape[1] != self.latent_dim:
            raise ValueError(
                f"view {self.view}: expected latent width {self.latent_dim}, got {h.shape[1]}")
        for w, b in self.dec_layers[:-1]:
            h = ad.relu(ad.broadcast_add_row(ad.matmul(h, w.node), b.node))
        w, b = self.dec_layers[-1]
        return ad.broadcast_add_row(ad.matmul(h, w.node), b.node)

    # -- plain array forward passes (no graph, used for extraction/eval) --

    def encode_np(self, x: np.ndarray) -> np.ndarray:
        h = ad.as_value(x)
        if h.shape[1] != self.input_dim:
            raise ValueError(
                f"view {self.view}: expected {self.input_dim} features, got {h.shape[1]}")
        for w, b in self.enc_layers[:-1]:
            h = np.maximum(h @ w.value + b.value, 0.0)
        w, b = self.enc_layers[-1]
        return ad.softmax_rows_value(h @ w.value + b.value)

    def decode_np(self, z: np.ndarray) -> np.ndarray:
        h = ad.as_value(z)
        for w, b in self.dec_layers[:-1]:
            h = np.maximum(h @ w.value + b.value, 0.0)
        w, b = self.dec_layers[-1]
        return h @ w.value + b.value


def ae_orth_loss(items, lam1: float, *, gram: str = "feature",
                 scale_by_batch: bool = True) -> ad.Node:
    """Reconstruction plus latent-decorrelation penalty, summed over views.

    ``items`` is a list of (x, latent, recon) triples. The penalty compares a
    Gram matrix of the latent against the identity:

    * ``gram="feature"`` uses the latent_dim x latent_dim matrix Z^T Z
      (feature decorrelation, the default reading);
    * ``gram="sample"`` uses the batch_size x batch_size matrix Z Z^T.

    With ``scale_by_batch`` the penalty of each view is divided by its batch
    size, which keeps the weight ``lam1`` comparable across batch sizes.
    """
    if lam1 < 0:
        raise ValueError("lam1 must be >= 0")
    if gram not in ("feature", "sample"):
        raise ValueError(f"unknown gram mode {gram!r}")
    total = None
    for x, latent, recon in items:
        x_node = x if isinstance(x, ad.Node) else ad.constant(x)
        term = ad.frobenius_sq(ad.subtract(x_node, recon))
        if lam1 > 0:
            z = latent.z if isinstance(latent, LatentBatch) else latent
            n = z.shape[0]
            if gram == "feature":
                g = ad.matmul(ad.transpose(z), z)
                eye = np.eye(z.shape[1])
            else:
                g = ad.matmul(z, ad.transpose(z))
                eye = np.eye(n)
            pen = ad.frobenius_sq(ad.subtract(g, ad.constant(eye)))
            factor = lam1 / n if scale_by_batch else lam1
            term = ad.add(term, ad.scale(pen, factor))
        total = term if total is None else ad.add(total, term)
    if total is None:
        raise ValueError("ae_orth_loss needs at least one view")
    return total


# ---------------------------------------------------------------------------
# checkpoints: flat binary, header + parameter matrices in declaration order


def save_models(models, path) -> None:
    """Write all views' parameters as little-endian doubles after a header."""
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<II", _CKPT_VERSION, len(models)))
        for m in models:
            widths = m.encoder_widths
            f.write(struct.pack("<I", len(widths)))
            f.write(struct.pack(f"<{len(widths)}I", *widths))
        for m in models:
            for p in m.parameters():
                f.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())


def load_models(path) -> list[ViewAutoencoder]:
    """Rebuild autoencoders from a checkpoint written by ``save_models``."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _CKPT_MAGIC:
            raise DataError(f"{path}: not a model checkpoint")
        version, n_views = struct.unpack("<II", f.read(8))
        if version != _CKPT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        all_widths = []
        for _ in range(n_views):
            (count,) = struct.unpack("<I", f.read(4))
            widths = struct.unpack(f"<{count}I", f.read(4 * count))
            all_widths.append(list(widths))
        models = []
        for v, widths in enumerate(all_widths):
            m = ViewAutoencoder(v, widths[0], widths[-1], hidden=widths[1:-1], seed=0)
            for p in m.parameters():
                raw = f.read(8 * p.value.size)
                if len(raw) != 8 * p.value.size:
                    raise DataError(f"{path}: truncated checkpoint")
                p.value[...] = np.frombuffer(raw, dtype="<f8").reshape(p.value.shape)
            models.append(m)
        if f.read(1):
            raise DataError(f"{path}: trailing bytes in checkpoint")
    return models
