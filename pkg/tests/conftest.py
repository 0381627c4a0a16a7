import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from ucece.graphs import SceneGraph, default_role_taxonomy, default_scene_taxonomy  # noqa: E402
from ucece.taxonomy import Taxonomies, build_taxonomy  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def animals():
    """⊤ -> animal -> {cat, dog}."""
    return build_taxonomy([("animal", "cat"), ("animal", "dog")])


@pytest.fixture(scope="session")
def scene_tx():
    return Taxonomies(default_scene_taxonomy().precompute(), default_role_taxonomy().precompute())


def random_graph(rng: np.random.Generator, tx: Taxonomies, n_min: int, n_max: int, density: float = 0.35,
                 gid: str = "g", cls: str = "A", leaves_only: bool = False) -> SceneGraph:
    pool = tx.concepts.leaves() if leaves_only else tx.concepts.atomic_ids()
    roles = tx.roles.atomic_ids()
    n = int(rng.integers(n_min, n_max + 1))
    nodes = tuple((f"v{i}", pool[int(rng.integers(len(pool)))]) for i in range(n))
    edges = []
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < density:
                edges.append((f"v{i}", roles[int(rng.integers(len(roles)))], f"v{j}"))
    return SceneGraph(gid, cls, nodes, tuple(edges))
