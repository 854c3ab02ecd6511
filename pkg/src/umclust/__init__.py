"""Unpaired multi-view clustering with reliable-view-guided latent alignment."""

__version__ = "0.1.0"

from .autodiff import (GradCheckReport, Node, Parameter, backward, constant,
                       grad_check, zero_grad)
from .cluster import (ClusterState, ReliableWeights, cluster_mean_distances,
                      kmeans, reliable_weights, select_reliable_view,
                      silhouette_samples, view_silhouette)
from .data import (SynthSpec, ViewBundle, ViewData, load_dataset,
                   save_dataset, synth_generate, unpair)
from .losses import (align_loss_multi, align_loss_one, compactness_loss,
                     kl_categorical, total_loss_rg, total_loss_rgs,
                     view_distribution)
from .metrics import accuracy_hungarian, nmi, pairwise_f1_precision
from .model import LatentBatch, ViewAutoencoder, ae_orth_loss, load_models, save_models
from .trainer import (EpochLog, TrainConfig, extract_latents, final_cluster,
                      fit, make_batches)
from .util import ConfigError, DataError, NumericError

__all__ = [
    "GradCheckReport", "Node", "Parameter", "backward", "constant",
    "grad_check", "zero_grad",
    "ClusterState", "ReliableWeights", "cluster_mean_distances", "kmeans",
    "reliable_weights", "select_reliable_view", "silhouette_samples",
    "view_silhouette",
    "SynthSpec", "ViewBundle", "ViewData", "load_dataset", "save_dataset",
    "synth_generate", "unpair",
    "align_loss_multi", "align_loss_one", "compactness_loss", "kl_categorical",
    "total_loss_rg", "total_loss_rgs", "view_distribution",
    "accuracy_hungarian", "nmi", "pairwise_f1_precision",
    "LatentBatch", "ViewAutoencoder", "ae_orth_loss", "load_models", "save_models",
    "EpochLog", "TrainConfig", "extract_latents", "final_cluster", "fit",
    "make_batches",
    "ConfigError", "DataError", "NumericError",
]
