"""Initial node features from concept labels."""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np


class NodeFeatureProvider:
    """Maps a concept id to a fixed-dimension float64 vector."""

    dimension: int

    def lookup(self, concept: str) -> np.ndarray:
        raise NotImplementedError

    def matrix(self, concepts) -> np.ndarray:
        if not concepts:
            return np.zeros((0, self.dimension))
        return np.stack([self.lookup(c) for c in concepts])


class HashFeatureProvider(NodeFeatureProvider):
    """Seeded pseudo-random unit vectors keyed on the concept string."""

    def __init__(self, dimension: int = 64, seed: int = 0):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def lookup(self, concept: str) -> np.ndarray:
        hit = self._cache.get(concept)
        if hit is None:
            digest = hashlib.sha256(f"{self.seed}\x00{concept}".encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            v = rng.standard_normal(self.dimension)
            hit = v / np.linalg.norm(v)
            hit.setflags(write=False)
            self._cache[concept] = hit
        return hit


class WordVectorProvider(NodeFeatureProvider):
    """Vectors read from a ``token v1 ... vd`` text file.

    Multi-word concepts (``traffic_light``) average their parts when the whole
    token is missing; anything else falls back to ``fallback``.
    """

    def __init__(self, vectors: dict[str, np.ndarray], fallback: NodeFeatureProvider | None = None):
        if not vectors:
            raise ValueError("empty word-vector table")
        dims = {v.shape[0] for v in vectors.values()}
        if len(dims) != 1:
            raise ValueError(f"inconsistent vector dimensions {sorted(dims)}")
        self.dimension = dims.pop()
        self.vectors = vectors
        self.fallback = fallback or HashFeatureProvider(self.dimension)
        if self.fallback.dimension != self.dimension:
            raise ValueError("fallback provider dimension mismatch")

    @classmethod
    def from_file(cls, path: str | Path, fallback: NodeFeatureProvider | None = None) -> "WordVectorProvider":
        vectors = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.rstrip().split()
                if len(parts) < 2:
                    continue
                try:
                    vectors[parts[0]] = np.asarray([float(x) for x in parts[1:]])
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: non-numeric vector entry") from None
        return cls(vectors, fallback)

    def lookup(self, concept: str) -> np.ndarray:
        v = self.vectors.get(concept)
        if v is not None:
            return v
        parts = [p for p in concept.replace("-", "_").split("_") if p in self.vectors]
        if parts:
            return np.mean([self.vectors[p] for p in parts], axis=0)
        return self.fallback.lookup(concept)
