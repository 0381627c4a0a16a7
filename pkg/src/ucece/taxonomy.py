"""Concept hierarchies (TBoxes) and the semantic edit costs derived from them.

A taxonomy file is UTF-8 text with one subsumption edge per line::

    # comment
    animal<TAB>cat
    animal<TAB>dog<TAB>1.5

Distances are shortest paths over the *undirected* subsumption graph, so that
siblings (``cat`` and ``dog``) are reachable from each other through their
common parent.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

TOP = "⊤"
BOTTOM = "⊥"

#: Sentinel for infeasible edits. It is a real ``inf`` so it can never win a min.
INFEASIBLE = math.inf


class TaxonomyError(ValueError):
    """Raised for malformed taxonomy files or invalid hierarchies."""


class UnknownConceptError(KeyError):
    pass


class ConceptKind(str, Enum):
    ATOMIC = "atomic"
    TOP = "top"
    BOTTOM = "bottom"


class EditKind(str, Enum):
    REPLACE = "replace"
    DELETE = "delete"
    INSERT = "insert"


@dataclass(frozen=True)
class Concept:
    id: str
    kind: ConceptKind = ConceptKind.ATOMIC


@dataclass(frozen=True)
class EditCost:
    kind: EditKind
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("edit cost must be non-negative")


@dataclass(frozen=True, eq=False)
class Taxonomy:
    """An immutable concept hierarchy with cached shortest-path distances.

    Use :func:`build_taxonomy` or :func:`load_taxonomy` rather than the
    constructor; they validate the invariants.
    """

    concepts: dict[str, Concept]
    edges: tuple[tuple[str, str, float], ...]
    top: str = TOP
    bottom: str = BOTTOM
    _adj: dict[str, list[tuple[str, float]]] = field(default_factory=dict, repr=False)
    _cache: dict[str, dict[str, float]] = field(default_factory=dict, repr=False)

    def __contains__(self, concept_id: str) -> bool:
        return concept_id in self.concepts

    def __len__(self) -> int:
        return len(self.concepts)

    @property
    def unit_weights(self) -> bool:
        return all(w == 1.0 for _, _, w in self.edges)

    def atomic_ids(self) -> list[str]:
        return sorted(c.id for c in self.concepts.values() if c.kind is ConceptKind.ATOMIC)

    def children(self, concept_id: str) -> list[str]:
        return sorted(c for p, c, _ in self.edges if p == concept_id)

    def leaves(self) -> list[str]:
        parents = {p for p, _, _ in self.edges}
        return [c for c in self.atomic_ids() if c not in parents]

    def descendants(self, concept_id: str) -> set[str]:
        """All concepts subsumed by ``concept_id`` (inclusive)."""
        self._check(concept_id)
        out = {concept_id}
        stack = [concept_id]
        while stack:
            node = stack.pop()
            for child in self.children(node):
                if child not in out:
                    out.add(child)
                    stack.append(child)
        return out

    def _check(self, concept_id: str) -> None:
        if concept_id not in self.concepts:
            raise UnknownConceptError(concept_id)

    def distances_from(self, source: str) -> dict[str, float]:
        """Single-source distances; unreachable concepts are absent."""
        self._check(source)
        cached = self._cache.get(source)
        if cached is not None:
            return cached
        if self.unit_weights:
            dist = bfs_distances(self._adj, source)
        else:
            dist = dijkstra_distances(self._adj, source)
        # setdefault is atomic, and concurrent fills compute equal dicts anyway
        return self._cache.setdefault(source, dist)

    def precompute(self) -> "Taxonomy":
        for cid in self.concepts:
            self.distances_from(cid)
        return self


@dataclass(frozen=True)
class Taxonomies:
    """The concept hierarchy paired with the role hierarchy."""

    concepts: Taxonomy
    roles: Taxonomy


def bfs_distances(adj: dict[str, list[tuple[str, float]]], source: str) -> dict[str, float]:
    dist = {source: 0.0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v, _ in adj.get(u, ()):
            if v not in dist:
                dist[v] = dist[u] + 1.0
                queue.append(v)
    return dist


def dijkstra_distances(adj: dict[str, list[tuple[str, float]]], source: str) -> dict[str, float]:
    dist = {source: 0.0}
    heap = [(0.0, source)]
    done: set[str] = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, w in adj.get(u, ()):
            nd = d + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def build_taxonomy(
    edges: Iterable[tuple[str, str] | tuple[str, str, float]],
    concepts: Iterable[str] = (),
    *,
    source: str = "<edges>",
    lines: list[int] | None = None,
) -> Taxonomy:
    """Validate ``(parent, child[, weight])`` edges and build a :class:`Taxonomy`.

    A virtual top concept is attached above every parentless concept unless
    the edges already name it; the bottom concept is always added as a
    detached virtual node.
    """
    norm: list[tuple[str, str, float]] = []
    seen: set[tuple[str, str]] = set()
    for i, e in enumerate(edges):
        where = f"{source}:{lines[i]}" if lines else f"{source}[{i}]"
        parent, child = e[0], e[1]
        weight = float(e[2]) if len(e) > 2 else 1.0
        if not parent or not child:
            raise TaxonomyError(f"{where}: empty concept id")
        if weight < 0 or math.isnan(weight):
            raise TaxonomyError(f"{where}: negative weight {weight} on {parent}>{child}")
        if child == TOP:
            raise TaxonomyError(f"{where}: top concept cannot have a parent")
        if parent == BOTTOM or child == BOTTOM:
            raise TaxonomyError(f"{where}: bottom concept cannot appear in edges")
        if (parent, child) in seen:
            raise TaxonomyError(f"{where}: duplicate edge {parent}>{child}")
        seen.add((parent, child))
        norm.append((parent, child, weight))

    ids: list[str] = []
    for c in concepts:
        if c not in ids:
            ids.append(c)
    for p, c, _ in norm:
        for x in (p, c):
            if x not in ids:
                ids.append(x)
    ids = [c for c in ids if c not in (TOP, BOTTOM)]

    cycle = _find_cycle(norm)
    if cycle:
        raise TaxonomyError(f"{source}: cycle detected: {' > '.join(cycle)}")

    has_parent = {c for _, c, _ in norm}
    for c in ids:
        if c not in has_parent:
            norm.append((TOP, c, 1.0))

    concepts_map = {c: Concept(c) for c in sorted(ids)}
    concepts_map[TOP] = Concept(TOP, ConceptKind.TOP)
    concepts_map[BOTTOM] = Concept(BOTTOM, ConceptKind.BOTTOM)

    adj: dict[str, list[tuple[str, float]]] = {c: [] for c in concepts_map}
    for p, c, w in norm:
        adj[p].append((c, w))
        adj[c].append((p, w))
    for nbrs in adj.values():
        nbrs.sort()
    return Taxonomy(concepts=concepts_map, edges=tuple(sorted(norm)), _adj=adj)


def _find_cycle(edges: list[tuple[str, str, float]]) -> list[str] | None:
    children: dict[str, list[str]] = {}
    for p, c, _ in edges:
        children.setdefault(p, []).append(c)
    state: dict[str, int] = {}
    path: list[str] = []

    def visit(u: str) -> list[str] | None:
        state[u] = 1
        path.append(u)
        for v in children.get(u, ()):
            if state.get(v) == 1:
                return path[path.index(v):] + [v]
            if v not in state:
                found = visit(v)
                if found:
                    return found
        path.pop()
        state[u] = 2
        return None

    for node in sorted(children):
        if node not in state:
            found = visit(node)
            if found:
                return found
    return None


def parse_taxonomy(text: str, source: str = "<string>") -> Taxonomy:
    edges = []
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in raw.rstrip("\r\n").split("\t")]
        if len(parts) not in (2, 3):
            raise TaxonomyError(f"{source}:{lineno}: expected parent<TAB>child[<TAB>weight]")
        if len(parts) == 3:
            try:
                weight = float(parts[2])
            except ValueError:
                raise TaxonomyError(f"{source}:{lineno}: bad weight {parts[2]!r}") from None
            edges.append((parts[0], parts[1], weight))
        else:
            edges.append((parts[0], parts[1]))
        lines.append(lineno)
    return build_taxonomy(edges, source=source, lines=lines)


def load_taxonomy(path: str | Path) -> Taxonomy:
    path = Path(path)
    return parse_taxonomy(path.read_text(encoding="utf-8"), source=str(path))


def dump_taxonomy(t: Taxonomy) -> str:
    """Tab-separated edge list that :func:`parse_taxonomy` reads back to an equal taxonomy."""
    lines = [f"{p}\t{c}" if w == 1.0 else f"{p}\t{c}\t{w!r}" for p, c, w in t.edges]
    return "\n".join(lines) + "\n"


def flat_taxonomy(ids: Iterable[str]) -> Taxonomy:
    """Two-level hierarchy: every id directly under top (distinct ids are 2 apart)."""
    return build_taxonomy([], concepts=sorted(set(ids)))


def concept_distance(t: Taxonomy, a: str, b: str) -> float:
    t._check(b)
    return t.distances_from(a).get(b, INFEASIBLE)


def deletion_cost(t: Taxonomy, a: str) -> float:
    return concept_distance(t, a, t.top)


def insertion_cost(t: Taxonomy, b: str) -> float:
    # symmetric with deletion: bottom is kept detached so it cannot shortcut paths
    return concept_distance(t, b, t.top)


def replacement_cost(t: Taxonomy, a: str, b: str) -> float:
    return concept_distance(t, a, b)
