"""Cosine-similarity retrieval over graph embeddings."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..atomic import EmptyPoolError
from ..graphs import SceneGraph
from .features import NodeFeatureProvider
from .model import EmbeddingModel, encode

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmbeddingIndex:
    ids: tuple[str, ...]
    classes: tuple[str, ...]
    vectors: np.ndarray  # rows L2-normalised

    @classmethod
    def from_vectors(cls, ids: Sequence[str], classes: Sequence[str], vectors: np.ndarray) -> "EmbeddingIndex":
        vectors = np.asarray(vectors, dtype=np.float64)
        norms = np.linalg.norm(vectors, axis=1)
        keep = np.isfinite(norms) & (norms > 0)
        if not keep.all():
            dropped = [ids[i] for i in np.flatnonzero(~keep)]
            log.warning("excluding %d zero-norm or non-finite embeddings: %s", len(dropped), dropped[:5])
        return cls(tuple(i for i, k in zip(ids, keep) if k),
                   tuple(c for c, k in zip(classes, keep) if k),
                   vectors[keep] / norms[keep, None])

    def vector(self, instance_id: str) -> np.ndarray:
        return self.vectors[self.ids.index(instance_id)]


def build_index(graphs: Sequence[SceneGraph], m: EmbeddingModel, fp: NodeFeatureProvider) -> EmbeddingIndex:
    vectors = np.stack([encode(g, m, fp) for g in graphs]) if graphs else np.zeros((0, m.output_dim))
    return EmbeddingIndex.from_vectors([g.instance_id for g in graphs], [g.class_label for g in graphs], vectors)


def retrieve_embedding(query: np.ndarray, index: EmbeddingIndex, query_class: str,
                       exclude_id: str | None = None) -> list[tuple[str, float]]:
    """Candidates of other classes, by descending cosine similarity (ties: ascending id)."""
    q = np.asarray(query, dtype=np.float64)
    norm = np.linalg.norm(q)
    if not norm > 0:
        raise ValueError("query embedding has zero norm")
    eligible = [k for k, c in enumerate(index.classes) if c != query_class and index.ids[k] != exclude_id]
    if not eligible:
        raise EmptyPoolError(f"no indexed candidate outside class {query_class!r}")
    sims = index.vectors[eligible] @ (q / norm)
    ranked = sorted(((index.ids[k], float(s)) for k, s in zip(eligible, sims)), key=lambda x: (-x[1], x[0]))
    return ranked
