"""Scene graphs: data model, JSON (de)serialization and synthetic corpora."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .taxonomy import Taxonomy, build_taxonomy, flat_taxonomy


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class SceneGraph:
    """Directed, labeled graph.

    ``nodes`` holds ``(node_id, concept)`` pairs and ``edges`` holds
    ``(src_node_id, role, dst_node_id)`` triples.
    """

    instance_id: str
    class_label: str
    nodes: tuple[tuple[str, str], ...] = ()
    edges: tuple[tuple[str, str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(tuple(n) for n in self.nodes))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        self.validate()

    def validate(self) -> None:
        ids = [n for n, _ in self.nodes]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise GraphError(f"{self.instance_id}: duplicate node ids {dup}")
        known = set(ids)
        seen = set()
        for s, r, d in self.edges:
            if s not in known or d not in known:
                missing = s if s not in known else d
                raise GraphError(f"{self.instance_id}: edge {s}-{r}->{d} references missing node {missing!r}")
            if s == d:
                raise GraphError(f"{self.instance_id}: self-loop on {s!r}")
            if (s, r, d) in seen:
                raise GraphError(f"{self.instance_id}: duplicate edge {s}-{r}->{d}")
            seen.add((s, r, d))

    @property
    def labels(self) -> dict[str, str]:
        return dict(self.nodes)

    @property
    def node_ids(self) -> list[str]:
        return [n for n, _ in self.nodes]

    def concepts(self) -> list[str]:
        return [c for _, c in self.nodes]

    def roles(self) -> list[str]:
        return [r for _, r, _ in self.edges]

    def check_labels(self, t_concepts: Taxonomy, t_roles: Taxonomy | None = None) -> None:
        bad = sorted({c for c in self.concepts() if c not in t_concepts})
        if bad:
            raise GraphError(f"{self.instance_id}: concepts not in taxonomy: {bad}")
        if t_roles is not None:
            bad = sorted({r for r in self.roles() if r not in t_roles})
            if bad:
                raise GraphError(f"{self.instance_id}: roles not in role taxonomy: {bad}")

    def without_edges(self) -> "SceneGraph":
        return SceneGraph(self.instance_id, self.class_label, self.nodes, ())

    def with_node(self, node_id: str, concept: str) -> "SceneGraph":
        return SceneGraph(self.instance_id, self.class_label, self.nodes + ((node_id, concept),), self.edges)

    def permuted(self, rng: np.random.Generator) -> "SceneGraph":
        """Same graph with node and edge listings shuffled."""
        nodes = [self.nodes[i] for i in rng.permutation(len(self.nodes))]
        edges = [self.edges[i] for i in rng.permutation(len(self.edges))]
        return SceneGraph(self.instance_id, self.class_label, tuple(nodes), tuple(edges))

    def to_dict(self) -> dict:
        return {
            "id": self.instance_id,
            "class": self.class_label,
            "nodes": [{"id": n, "concept": c} for n, c in self.nodes],
            "edges": [{"src": s, "role": r, "dst": d} for s, r, d in self.edges],
        }

    @classmethod
    def from_dict(cls, d: dict, where: str = "<dict>") -> "SceneGraph":
        try:
            if not isinstance(d, dict):
                raise TypeError("graph record must be an object")
            gid = d["id"]
            label = d["class"]
            nodes = tuple((n["id"], n["concept"]) for n in d.get("nodes", ()))
            edges = tuple((e["src"], e["role"], e["dst"]) for e in d.get("edges", ()))
            for value in (gid, label, *(x for n in nodes for x in n), *(x for e in edges for x in e)):
                if not isinstance(value, str):
                    raise TypeError(f"expected string, got {value!r}")
        except (KeyError, TypeError) as exc:
            raise GraphError(f"{where}: schema violation: {exc}") from None
        try:
            return cls(gid, label, nodes, edges)
        except GraphError as exc:
            raise GraphError(f"{where}: {exc}") from None

    def to_networkx(self):
        """DiGraph with ``concept`` node attributes and a ``roles`` frozenset per edge."""
        import networkx as nx

        g = nx.DiGraph()
        for n, c in self.nodes:
            g.add_node(n, concept=c)
        for s, r, d in self.edges:
            if g.has_edge(s, d):
                g[s][d]["roles"] = g[s][d]["roles"] | {r}
            else:
                g.add_edge(s, d, roles=frozenset([r]))
        return g


def is_isomorphic(g1: SceneGraph, g2: SceneGraph) -> bool:
    import networkx as nx

    return nx.is_isomorphic(
        g1.to_networkx(), g2.to_networkx(),
        node_match=lambda a, b: a["concept"] == b["concept"],
        edge_match=lambda a, b: a["roles"] == b["roles"],
    )


def read_graphs(path: str | Path) -> list[SceneGraph]:
    """Read a ``.json`` file (one graph or a list) or a ``.jsonl`` file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    out = []
    if path.suffix == ".jsonl":
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise GraphError(f"{where}: invalid JSON: {exc.msg}") from None
            out.append(SceneGraph.from_dict(rec, where))
        return out
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    recs = rec if isinstance(rec, list) else [rec]
    return [SceneGraph.from_dict(r, f"{path}[{i}]") for i, r in enumerate(recs)]


def write_graphs(graphs: Iterable[SceneGraph], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(json.dumps(g.to_dict(), ensure_ascii=False) + "\n")


# A small built-in scene vocabulary so synthetic corpora need no input files.
# The four families hang directly off top, so cross-family distances route through it.
DEFAULT_SCENE_EDGES = [
    ("animal", "cat"), ("animal", "dog"), ("animal", "bird"), ("animal", "horse"),
    ("person", "man"), ("person", "woman"), ("person", "child"),
    ("artifact", "furniture"), ("artifact", "device"), ("artifact", "vehicle"), ("artifact", "clothing"),
    ("furniture", "table"), ("furniture", "chair"), ("furniture", "desk"), ("furniture", "sofa"),
    ("device", "keyboard"), ("device", "laptop"), ("device", "monitor"), ("device", "phone"),
    ("vehicle", "bike"), ("vehicle", "car"), ("vehicle", "bus"),
    ("clothing", "helmet"), ("clothing", "shirt"), ("clothing", "hat"),
    ("plant", "tree"), ("plant", "flower"), ("plant", "grass"),
]
DEFAULT_ROLES = ["on", "near", "under", "holding", "wearing", "riding", "behind"]


def default_scene_taxonomy() -> Taxonomy:
    return build_taxonomy(DEFAULT_SCENE_EDGES)


def default_role_taxonomy() -> Taxonomy:
    return flat_taxonomy(DEFAULT_ROLES)


def generate_synthetic_graphs(
    seed: int,
    count: int,
    size_range: tuple[int, int] = (3, 6),
    taxonomy: Taxonomy | None = None,
    roles: Sequence[str] | None = None,
    family: str | None = None,
    edge_density: float = 0.3,
    id_prefix: str = "g",
) -> list[SceneGraph]:
    """Deterministic random scene graphs.

    Labels are taxonomy leaves, roles come from ``roles``. A graph is labelled
    ``"with_<family>"`` when any node falls under ``family``, otherwise
    ``"without_<family>"``. The default family is the inner concept whose
    leaf share splits graphs of average size closest to 50/50.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    t = taxonomy if taxonomy is not None else default_scene_taxonomy()
    leaves = t.leaves()
    if not leaves:
        raise GraphError("taxonomy has no atomic concepts")
    roles = list(roles) if roles is not None else list(DEFAULT_ROLES)
    if not roles:
        raise GraphError("empty role vocabulary")
    lo, hi = size_range
    if lo < 1 or hi < lo:
        raise ValueError(f"bad size range {size_range}")
    if family is None:
        family = _balanced_family(t, leaves, (lo + hi) / 2)
    members = t.descendants(family)

    rng = np.random.default_rng(seed)
    width = len(str(count - 1))
    graphs = []
    for i in range(count):
        n = int(rng.integers(lo, hi + 1))
        labels = [leaves[j] for j in rng.integers(0, len(leaves), size=n)]
        nodes = tuple((f"n{k}", lab) for k, lab in enumerate(labels))
        edges = []
        seen = set()
        for s in range(n):
            for d in range(n):
                if s != d and rng.random() < edge_density:
                    r = roles[int(rng.integers(0, len(roles)))]
                    if (s, r, d) not in seen:
                        seen.add((s, r, d))
                        edges.append((f"n{s}", r, f"n{d}"))
        has = any(lab in members for lab in labels)
        label = f"with_{family}" if has else f"without_{family}"
        graphs.append(SceneGraph(f"{id_prefix}{i:0{width}d}", label, nodes, tuple(edges)))
    return graphs


def _balanced_family(t: Taxonomy, leaves: list[str], mean_size: float) -> str:
    inner = [c for c in t.atomic_ids() if t.children(c)]
    if not inner:
        return leaves[0]
    leafset = set(leaves)

    def imbalance(c):
        share = len(t.descendants(c) & leafset) / len(leafset)
        return abs(1.0 - (1.0 - share) ** mean_size - 0.5)

    return min(inner, key=lambda c: (imbalance(c), c))
