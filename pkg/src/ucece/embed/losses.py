"""Training objectives: GED regression and variational reconstruction."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .model import EmbeddingModel, GraphTensors


def siamese_loss(h1: torch.Tensor, h2: torch.Tensor, ged) -> torch.Tensor:
    """Squared gap between embedding distance and the target GED."""
    if h1.shape != h2.shape:
        raise ValueError(f"shape mismatch {tuple(h1.shape)} vs {tuple(h2.shape)}")
    return (torch.linalg.vector_norm(h1 - h2) - ged) ** 2


def kl_divergence(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """KL(q || N(0, I)) summed over latent dims, averaged over nodes."""
    if mu.shape[0] == 0:
        return mu.sum() * 0.0
    per_node = -0.5 * (1.0 + logvar - mu.pow(2) - logvar.exp()).sum(dim=1)
    return per_node.mean()


def sample_negative_edges(n: int, pos: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One uniformly drawn non-edge per positive edge (fewer if the graph is dense)."""
    linked = {(int(s), int(d)) for s, d in pos} | {(int(d), int(s)) for s, d in pos}
    candidates = [(s, d) for s in range(n) for d in range(n) if s != d and (s, d) not in linked]
    k = min(len(pos), len(candidates))
    if k == 0:
        return np.zeros((0, 2), dtype=np.int64)
    pick = rng.choice(len(candidates), size=k, replace=False)
    return np.array([candidates[i] for i in sorted(pick)], dtype=np.int64)


def edge_reconstruction(z: torch.Tensor, pos: np.ndarray, neg: np.ndarray) -> torch.Tensor:
    """Binary cross-entropy of inner-product edge logits over positives and negatives."""
    if len(pos) == 0 and len(neg) == 0:
        return z.sum() * 0.0
    pairs = np.concatenate([pos, neg]).reshape(-1, 2)
    idx = torch.from_numpy(pairs)
    logits = (z[idx[:, 0]] * z[idx[:, 1]]).sum(dim=1)
    target = torch.cat([torch.ones(len(pos), dtype=z.dtype), torch.zeros(len(neg), dtype=z.dtype)])
    return F.binary_cross_entropy_with_logits(logits, target)


def feature_mse(x_hat: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    if x.numel() == 0:
        return x_hat.sum() * 0.0
    return ((x_hat - x) ** 2).mean()


def _variational_pass(gt: GraphTensors, m: EmbeddingModel, rng: np.random.Generator):
    if m.heads is None:
        raise ValueError("model has no variational heads; train it with an inductive regime")
    h = m.node_embeddings(gt)
    mu, logvar = m.heads(h)
    noise = torch.from_numpy(rng.standard_normal(tuple(mu.shape)))
    z = mu + noise * torch.exp(0.5 * logvar)
    return mu, logvar, z


def vgae_losses(gt: GraphTensors, m: EmbeddingModel, rng: np.random.Generator) -> tuple[torch.Tensor, torch.Tensor]:
    """``(edge_recon, kl)`` for one graph; ``rng`` drives the noise and negatives."""
    mu, logvar, z = _variational_pass(gt, m, rng)
    neg = sample_negative_edges(gt.x.shape[0], gt.pos_edges, rng)
    return edge_reconstruction(z, gt.pos_edges, neg), kl_divergence(mu, logvar)


def gfa_loss(gt: GraphTensors, m: EmbeddingModel, rng: np.random.Generator) -> torch.Tensor:
    """VGAE loss plus the mean squared error of the decoded node features."""
    mu, logvar, z = _variational_pass(gt, m, rng)
    if not hasattr(m.heads, "w_feat"):
        raise ValueError("model has no feature decoder; use the inductive_gfa regime")
    neg = sample_negative_edges(gt.x.shape[0], gt.pos_edges, rng)
    recon = edge_reconstruction(z, gt.pos_edges, neg)
    return recon + kl_divergence(mu, logvar) + feature_mse(m.heads.decode_features(z), gt.x)
