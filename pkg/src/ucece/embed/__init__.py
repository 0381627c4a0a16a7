"""Neural approximations of GED retrieval."""

from .features import HashFeatureProvider, NodeFeatureProvider, WordVectorProvider
from .index import EmbeddingIndex, build_index, retrieve_embedding
from .losses import feature_mse, gfa_loss, kl_divergence, siamese_loss, vgae_losses
from .model import Architecture, EmbeddingModel, EncoderConfig, Regime, encode, graph_tensors
from .train import train_inductive, train_transductive

__all__ = [
    "Architecture", "EmbeddingIndex", "EmbeddingModel", "EncoderConfig", "HashFeatureProvider",
    "NodeFeatureProvider", "Regime", "WordVectorProvider", "build_index", "encode", "feature_mse",
    "gfa_loss", "graph_tensors", "kl_divergence", "retrieve_embedding", "siamese_loss",
    "train_inductive", "train_transductive", "vgae_losses",
]
