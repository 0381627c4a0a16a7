"""Message-passing graph encoders (GCN, GAT, GIN) and model checkpoints.

Everything runs in float64 on dense per-graph matrices; scene graphs are a
few dozen nodes at most. Nodes are put in a canonical order before encoding
so every summation happens in the same order regardless of how the input
graph lists its nodes and edges.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..graphs import SceneGraph
from .features import NodeFeatureProvider

FORMAT_VERSION = 1
DTYPE = torch.float64


class Architecture(str, Enum):
    GCN = "GCN"
    GAT = "GAT"
    GIN = "GIN"


class Regime(str, Enum):
    TRANSDUCTIVE_SIAMESE = "transductive_siamese"
    INDUCTIVE_VGAE = "inductive_vgae"
    INDUCTIVE_GFA = "inductive_gfa"


DEFAULT_LR = {Architecture.GCN: 0.04, Architecture.GAT: 0.02, Architecture.GIN: 0.02}


@dataclass
class EncoderConfig:
    architecture: Architecture = Architecture.GCN
    layers: int = 1
    hidden_dim: int = 2048
    heads: int = 8
    gin_eps: float = 0.0
    pooling: str = "sum"
    seed: int = 0
    input_dim: int = 64
    # width of the variational heads used by the inductive regimes
    latent_dim: int = 64

    def __post_init__(self):
        self.architecture = Architecture(self.architecture)
        if self.layers < 1 or self.hidden_dim < 1 or self.input_dim < 1 or self.latent_dim < 1:
            raise ValueError("layers and dimensions must be positive")
        if self.heads < 1:
            raise ValueError("heads must be >= 1")
        if self.architecture is Architecture.GAT and self.hidden_dim % self.heads:
            raise ValueError("GAT hidden_dim must be divisible by heads")
        if self.pooling not in ("sum", "mean", "max"):
            raise ValueError(f"unknown pooling {self.pooling!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["architecture"] = self.architecture.value
        return d


@dataclass
class GraphTensors:
    ids: list[str]
    x: torch.Tensor
    adj: torch.Tensor
    pos_edges: np.ndarray  # (m, 2) directed, deduplicated, canonical indices


def canonical_order(g: SceneGraph, rounds: int = 3) -> list[str]:
    """Node ids sorted by label, then Weisfeiler-Lehman colour, then id."""
    labels = g.labels
    nbrs: dict[str, list[str]] = {n: [] for n in labels}
    for s, r, d in g.edges:
        nbrs[s].append(f">{r}")
        nbrs[d].append(f"<{r}")
    adj: dict[str, set[str]] = {n: set() for n in labels}
    for s, r, d in g.edges:
        adj[s].add(d)
        adj[d].add(s)
    color = {n: labels[n] + "|" + ",".join(sorted(nbrs[n])) for n in labels}
    for _ in range(rounds):
        color = {
            n: hashlib.sha1((color[n] + "|" + ",".join(sorted(color[m] for m in adj[n]))).encode()).hexdigest()
            for n in labels
        }
    return sorted(labels, key=lambda n: (labels[n], color[n], n))


def graph_tensors(g: SceneGraph, fp: NodeFeatureProvider) -> GraphTensors:
    ids = canonical_order(g)
    index = {n: i for i, n in enumerate(ids)}
    labels = g.labels
    x = torch.from_numpy(np.array(fp.matrix([labels[n] for n in ids]), dtype=np.float64))
    n = len(ids)
    adj = torch.zeros((n, n), dtype=DTYPE)
    pos = sorted({(index[s], index[d]) for s, _, d in g.edges})
    for s, d in pos:
        adj[s, d] = 1.0
        adj[d, s] = 1.0
    return GraphTensors(ids, x, adj, np.array(pos, dtype=np.int64).reshape(-1, 2))


def _linear(gen: torch.Generator, n_in: int, n_out: int) -> tuple[nn.Parameter, nn.Parameter]:
    bound = 1.0 / np.sqrt(n_in)
    w = (torch.rand((n_in, n_out), generator=gen, dtype=DTYPE) * 2 - 1) * bound
    return nn.Parameter(w), nn.Parameter(torch.zeros(n_out, dtype=DTYPE))


class GCNLayer(nn.Module):
    def __init__(self, gen, n_in, n_out):
        super().__init__()
        self.weight, self.bias = _linear(gen, n_in, n_out)

    def forward(self, h, adj):
        a = adj + torch.eye(adj.shape[0], dtype=adj.dtype)
        # mean over the closed neighbourhood
        agg = (a @ h) / a.sum(dim=1, keepdim=True)
        return torch.relu(agg @ self.weight + self.bias)


class GATLayer(nn.Module):
    def __init__(self, gen, n_in, n_out, heads):
        super().__init__()
        self.heads = heads
        self.head_dim = n_out // heads
        self.weight, self.bias = _linear(gen, n_in, n_out)
        bound = 1.0 / np.sqrt(self.head_dim)
        self.att_recv = nn.Parameter((torch.rand((heads, self.head_dim), generator=gen, dtype=DTYPE) * 2 - 1) * bound)
        self.att_send = nn.Parameter((torch.rand((heads, self.head_dim), generator=gen, dtype=DTYPE) * 2 - 1) * bound)

    def forward(self, h, adj):
        n = adj.shape[0]
        z = (h @ self.weight).reshape(n, self.heads, self.head_dim)
        recv = (z * self.att_recv).sum(-1)  # (n, heads)
        send = (z * self.att_send).sum(-1)
        e = torch.nn.functional.leaky_relu(recv.T[:, :, None] + send.T[:, None, :], 0.2)
        mask = (adj + torch.eye(n, dtype=adj.dtype)) > 0
        e = e.masked_fill(~mask[None], float("-inf"))
        alpha = torch.softmax(e, dim=-1)  # (heads, n, n)
        out = torch.einsum("kij,jkd->ikd", alpha, z).reshape(n, self.heads * self.head_dim)
        return torch.relu(out + self.bias)


class GINLayer(nn.Module):
    def __init__(self, gen, n_in, n_out, eps):
        super().__init__()
        self.eps = float(eps)  # fixed, not trained
        self.w1, self.b1 = _linear(gen, n_in, n_out)
        self.w2, self.b2 = _linear(gen, n_out, n_out)

    def forward(self, h, adj):
        agg = (1.0 + self.eps) * h + adj @ h
        return torch.relu(torch.relu(agg @ self.w1 + self.b1) @ self.w2 + self.b2)


class GraphEncoder(nn.Module):
    """Stack of message-passing layers; returns per-node embeddings."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        gen = torch.Generator().manual_seed(config.seed)
        dims = [config.input_dim] + [config.hidden_dim] * config.layers
        layers = []
        for n_in, n_out in zip(dims[:-1], dims[1:]):
            if config.architecture is Architecture.GCN:
                layers.append(GCNLayer(gen, n_in, n_out))
            elif config.architecture is Architecture.GAT:
                layers.append(GATLayer(gen, n_in, n_out, config.heads))
            else:
                layers.append(GINLayer(gen, n_in, n_out, config.gin_eps))
        self.layers = nn.ModuleList(layers)
        self._gen = gen

    def forward(self, x, adj):
        h = x
        for layer in self.layers:
            h = layer(h, adj)
        return h


class VariationalHeads(nn.Module):
    def __init__(self, gen, hidden, latent, feature_dim: int | None):
        super().__init__()
        self.w_mu, self.b_mu = _linear(gen, hidden, latent)
        self.w_logvar, self.b_logvar = _linear(gen, hidden, latent)
        if feature_dim is not None:
            self.w_feat, self.b_feat = _linear(gen, latent, feature_dim)

    def forward(self, h):
        return h @ self.w_mu + self.b_mu, h @ self.w_logvar + self.b_logvar

    def decode_features(self, z):
        return z @ self.w_feat + self.b_feat


def pool(h: torch.Tensor, how: str) -> torch.Tensor:
    if h.shape[0] == 0:
        return torch.zeros(h.shape[1], dtype=h.dtype)
    if how == "sum":
        return h.sum(dim=0)
    if how == "mean":
        return h.mean(dim=0)
    return h.max(dim=0).values


class EmbeddingModel(nn.Module):
    """Encoder plus (for inductive regimes) variational and decoder heads."""

    def __init__(self, config: EncoderConfig, regime: Regime | str = Regime.TRANSDUCTIVE_SIAMESE):
        super().__init__()
        self.config = config
        self.regime = Regime(regime)
        self.encoder = GraphEncoder(config)
        self.heads: VariationalHeads | None = None
        if self.regime is not Regime.TRANSDUCTIVE_SIAMESE:
            feat = config.input_dim if self.regime is Regime.INDUCTIVE_GFA else None
            self.heads = VariationalHeads(self.encoder._gen, config.hidden_dim, config.latent_dim, feat)
        self.loss_trace: list[float] = []

    @property
    def output_dim(self) -> int:
        return self.config.hidden_dim if self.heads is None else self.config.latent_dim

    def node_embeddings(self, gt: GraphTensors) -> torch.Tensor:
        if gt.x.shape[1] != self.config.input_dim:
            raise ValueError(f"feature dimension {gt.x.shape[1]} != config input_dim {self.config.input_dim}")
        return self.encoder(gt.x, gt.adj)

    def graph_embedding(self, gt: GraphTensors) -> torch.Tensor:
        h = self.node_embeddings(gt)
        if self.heads is not None:
            h = self.heads(h)[0]
        return pool(h, self.config.pooling)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.detach().cpu().numpy().copy() for k, v in self.state_dict().items()}

    def save(self, path: str | Path) -> None:
        meta = {
            "format_version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "regime": self.regime.value,
            "loss_trace": self.loss_trace,
        }
        arrays = {f"param/{k}": v for k, v in self.state_arrays().items()}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingModel":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            if meta.get("format_version") != FORMAT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
            model = cls(EncoderConfig(**meta["config"]), meta["regime"])
            state = {k[len("param/"):]: torch.from_numpy(data[k].copy()) for k in data.files if k.startswith("param/")}
        model.load_state_dict(state, strict=True)
        model.loss_trace = list(meta.get("loss_trace", []))
        return model


def encode(g: SceneGraph, m: EmbeddingModel, fp: NodeFeatureProvider) -> np.ndarray:
    """Graph embedding as a float64 numpy vector."""
    if fp.dimension != m.config.input_dim:
        raise ValueError(f"provider dimension {fp.dimension} != config input_dim {m.config.input_dim}")
    with torch.no_grad():
        return m.graph_embedding(graph_tensors(g, fp)).numpy().copy()
