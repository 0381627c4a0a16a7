"""Transductive (pairwise GED regression) and inductive (autoencoder) training."""

from __future__ import annotations

import itertools
import logging
from typing import Sequence

import numpy as np
import torch

from ..ged import GedCosts, GedMode, compute_ged
from ..graphs import SceneGraph
from ..taxonomy import Taxonomies
from .features import NodeFeatureProvider
from .losses import gfa_loss, siamese_loss, vgae_losses
from .model import DEFAULT_LR, EmbeddingModel, EncoderConfig, Regime, graph_tensors

log = logging.getLogger(__name__)

EPOCHS = 50
BATCH_SIZE = 32
PRETRAIN_EPOCHS = 30
FINETUNE_EPOCHS = 20
PRETRAIN_LR = 1e-3
FINETUNE_LR = 1e-4


def sample_pairs(n: int, p: int, seed: int) -> list[tuple[int, int]]:
    """``p`` distinct unordered index pairs drawn uniformly without replacement."""
    total = n * (n - 1) // 2
    if p > total:
        log.warning("pair budget %d exceeds the %d available pairs; clamping", p, total)
        p = total
    rng = np.random.default_rng(seed)
    picks = sorted(rng.choice(total, size=p, replace=False).tolist())
    all_pairs = itertools.combinations(range(n), 2)
    out, want = [], iter(picks)
    nxt = next(want, None)
    for k, pair in enumerate(all_pairs):
        if nxt is None:
            break
        if k == nxt:
            out.append(pair)
            nxt = next(want, None)
    return out


def ged_targets(graphs: Sequence[SceneGraph], pairs: Sequence[tuple[int, int]],
                taxonomies: Taxonomies, mode: GedMode | str = GedMode.APPROXIMATE,
                normalize: bool = False) -> np.ndarray:
    costs = GedCosts(taxonomies)
    out = np.empty(len(pairs))
    for k, (i, j) in enumerate(pairs):
        d = compute_ged(graphs[i], graphs[j], costs, mode).cost
        if normalize:
            d /= max(1, len(graphs[i].nodes) + len(graphs[j].nodes))
        out[k] = d
    return out


def _batches(n: int, size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, size):
        yield order[start:start + size]


def train_transductive(
    graphs: Sequence[SceneGraph],
    config: EncoderConfig,
    fp: NodeFeatureProvider,
    taxonomies: Taxonomies,
    pair_budget: int | None = None,
    epochs: int = EPOCHS,
    batch_size: int = BATCH_SIZE,
    lr: float | None = None,
    normalize_targets: bool = False,
    targets: np.ndarray | None = None,
    pairs: Sequence[tuple[int, int]] | None = None,
) -> EmbeddingModel:
    """Siamese GED regression on ``p`` sampled pairs (default ``p = N // 2``).

    The per-epoch mean loss is stored on ``model.loss_trace``; the first entry
    is the loss of the first epoch as seen while training through it.
    """
    n = len(graphs)
    if n < 2:
        raise ValueError("need at least two graphs")
    if pairs is None:
        pairs = sample_pairs(n, pair_budget if pair_budget is not None else max(1, n // 2), config.seed)
    if targets is None:
        targets = ged_targets(graphs, pairs, taxonomies, normalize=normalize_targets)
    model = EmbeddingModel(config, Regime.TRANSDUCTIVE_SIAMESE)
    tensors = [graph_tensors(g, fp) for g in graphs]
    opt = torch.optim.Adam(model.parameters(), lr=lr if lr is not None else DEFAULT_LR[config.architecture])
    rng = np.random.default_rng(config.seed + 1)
    target_t = torch.from_numpy(np.asarray(targets, dtype=np.float64))

    for _ in range(epochs):
        seen = 0.0
        for batch in _batches(len(pairs), batch_size, rng):
            needed = sorted({i for b in batch for i in pairs[b]})
            emb = {i: model.graph_embedding(tensors[i]) for i in needed}
            losses = torch.stack([siamese_loss(emb[pairs[b][0]], emb[pairs[b][1]], target_t[b]) for b in batch])
            loss = losses.mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            seen += float(losses.detach().sum())
        model.loss_trace.append(seen / len(pairs))
    return model


def _inductive_loss(model: EmbeddingModel, gt, rng: np.random.Generator) -> torch.Tensor:
    if model.regime is Regime.INDUCTIVE_GFA:
        return gfa_loss(gt, model, rng)
    recon, kl = vgae_losses(gt, model, rng)
    return recon + kl


def run_inductive_epochs(model: EmbeddingModel, graphs: Sequence[SceneGraph], fp: NodeFeatureProvider,
                         epochs: int, lr: float, batch_size: int = BATCH_SIZE, seed: int = 0) -> list[float]:
    """Per-instance training; cost grows linearly with ``len(graphs)``."""
    tensors = [graph_tensors(g, fp) for g in graphs]
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    trace = []
    for _ in range(epochs):
        total = 0.0
        for batch in _batches(len(tensors), batch_size, rng):
            losses = torch.stack([_inductive_loss(model, tensors[i], rng) for i in batch])
            opt.zero_grad()
            losses.mean().backward()
            opt.step()
            total += float(losses.detach().sum())
        trace.append(total / max(1, len(tensors)))
    return trace


def train_inductive(
    pretrain_corpus: Sequence[SceneGraph],
    finetune_corpus: Sequence[SceneGraph] | None,
    regime: Regime | str,
    config: EncoderConfig,
    fp: NodeFeatureProvider,
    eval_ids: set[str] | None = None,
    pretrain_epochs: int = PRETRAIN_EPOCHS,
    finetune_epochs: int = FINETUNE_EPOCHS,
    pretrain_lr: float = PRETRAIN_LR,
    finetune_lr: float = FINETUNE_LR,
    batch_size: int = BATCH_SIZE,
) -> EmbeddingModel:
    """Autoencoder pretraining, then optional finetuning.

    Raises ``ValueError`` when the pretraining corpus shares instance ids
    with the declared evaluation set.
    """
    regime = Regime(regime)
    if regime is Regime.TRANSDUCTIVE_SIAMESE:
        raise ValueError("train_inductive needs an inductive regime")
    if eval_ids:
        overlap = sorted({g.instance_id for g in pretrain_corpus} & set(eval_ids))
        if overlap:
            raise ValueError(f"pretraining corpus overlaps the evaluation set: {overlap[:5]}")
    model = EmbeddingModel(config, regime)
    model.loss_trace = run_inductive_epochs(model, pretrain_corpus, fp, pretrain_epochs, pretrain_lr,
                                            batch_size, seed=config.seed + 1)
    if finetune_corpus:
        model.loss_trace += run_inductive_epochs(model, finetune_corpus, fp, finetune_epochs, finetune_lr,
                                                 batch_size, seed=config.seed + 2)
    return model
