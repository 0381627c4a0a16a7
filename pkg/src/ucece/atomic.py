"""Level 1: instances as multisets of atomic concepts.

The set-edit distance pads the cost matrix with dummy rows/columns and solves
a square linear assignment problem exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence, TypeVar

import numpy as np
from scipy.optimize import linear_sum_assignment

from .taxonomy import (
    INFEASIBLE,
    EditKind,
    Taxonomy,
    concept_distance,
    deletion_cost,
    insertion_cost,
)

T = TypeVar("T", bound=Hashable)


class DummyType:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "DUMMY"

    def __reduce__(self):
        return (DummyType, ())


DUMMY = DummyType()


class InfeasibleError(ValueError):
    """No finite-cost matching exists."""


class EmptyPoolError(ValueError):
    """No eligible candidate (different class) is left to retrieve."""


@dataclass(frozen=True)
class ConceptSet:
    elements: tuple[str, ...]
    instance_id: str = ""
    class_label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))

    def validate(self, t: Taxonomy) -> None:
        missing = [e for e in self.elements if e not in t]
        if missing:
            raise ValueError(f"{self.instance_id}: unknown concepts {missing}")


@dataclass(frozen=True)
class SetMatching:
    pairs: tuple = ()
    total_cost: float = 0.0

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.total_cost)


@dataclass(frozen=True)
class SetEditOp:
    kind: EditKind
    before: object | None
    after: object | None
    cost: float


@dataclass(frozen=True)
class SetEditScript:
    ops: tuple[SetEditOp, ...] = field(default_factory=tuple)

    @property
    def total_cost(self) -> float:
        return float(sum(op.cost for op in self.ops))


def solve_assignment(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Exact square assignment; ``inf`` cells are forbidden.

    Raises :class:`InfeasibleError` when every full assignment uses an
    ``inf`` cell.
    """
    if cost.size == 0:
        return np.zeros(0, int), np.zeros(0, int), 0.0
    try:
        rows, cols = linear_sum_assignment(cost)
    except ValueError as exc:
        raise InfeasibleError(str(exc)) from None
    total = float(cost[rows, cols].sum())
    if not math.isfinite(total):
        raise InfeasibleError("cost matrix is infeasible")
    return rows, cols, total


def padded_cost_matrix(
    left: Sequence[T],
    right: Sequence[T],
    pair_cost: Callable[[T, T], float],
    delete_cost: Callable[[T], float],
    insert_cost: Callable[[T], float],
) -> np.ndarray:
    """(m+n) x (m+n) matrix: substitutions, a deletion diagonal, an insertion diagonal."""
    m, n = len(left), len(right)
    c = np.zeros((m + n, m + n))
    c[:m, n:] = INFEASIBLE
    c[m:, :n] = INFEASIBLE
    for i, a in enumerate(left):
        for j, b in enumerate(right):
            c[i, j] = pair_cost(a, b)
        c[i, n + i] = delete_cost(a)
    for j, b in enumerate(right):
        c[m + j, j] = insert_cost(b)
    return c


def match_sets(
    left: Sequence[T],
    right: Sequence[T],
    pair_cost: Callable[[T, T], float],
    delete_cost: Callable[[T], float],
    insert_cost: Callable[[T], float],
) -> SetMatching:
    """Minimum-cost full matching between two multisets with dummy padding.

    Returns a matching with ``total_cost == inf`` (and no pairs) when no
    finite matching exists.
    """
    m, n = len(left), len(right)
    c = padded_cost_matrix(left, right, pair_cost, delete_cost, insert_cost)
    try:
        rows, cols, total = solve_assignment(c)
    except InfeasibleError:
        return SetMatching((), INFEASIBLE)
    pairs = []
    for i, j in zip(rows, cols):
        if i < m and j < n:
            pairs.append((left[i], right[j], float(c[i, j])))
        elif i < m:
            pairs.append((left[i], DUMMY, float(c[i, j])))
        elif j < n:
            pairs.append((DUMMY, right[j], float(c[i, j])))
    return SetMatching(tuple(pairs), total)


def set_edit_distance(
    s1: ConceptSet | Sequence[str],
    s2: ConceptSet | Sequence[str],
    t: Taxonomy,
    delta: float | None = None,
) -> SetMatching:
    """Set-edit distance between concept multisets.

    By default a dummy pairing costs the element's own deletion/insertion
    price; pass ``delta`` to use a constant penalty instead.
    """
    a = s1.elements if isinstance(s1, ConceptSet) else tuple(s1)
    b = s2.elements if isinstance(s2, ConceptSet) else tuple(s2)
    if delta is None:
        dele = lambda x: deletion_cost(t, x)  # noqa: E731
        ins = lambda x: insertion_cost(t, x)  # noqa: E731
    else:
        dele = ins = lambda x: delta  # noqa: E731
    return match_sets(a, b, lambda x, y: concept_distance(t, x, y), dele, ins)


def atomic_edit_script(m: SetMatching) -> SetEditScript:
    if not m.feasible:
        raise InfeasibleError("cannot build a script from an infeasible matching")
    ops = []
    for left, right, cost in m.pairs:
        if left is DUMMY:
            ops.append(SetEditOp(EditKind.INSERT, None, right, cost))
        elif right is DUMMY:
            ops.append(SetEditOp(EditKind.DELETE, left, None, cost))
        elif cost > 0:
            ops.append(SetEditOp(EditKind.REPLACE, left, right, cost))
    return SetEditScript(tuple(ops))


def rank_candidates(query, pool, distance: Callable) -> list[tuple[str, float]]:
    """Rank different-class candidates ascending by ``distance(query, c)``.

    Ties break by ascending ``instance_id``.
    """
    eligible = [c for c in pool if c.class_label != query.class_label]
    if not eligible:
        raise EmptyPoolError(f"no candidate outside class {query.class_label!r}")
    scored = [(c.instance_id, float(distance(query, c))) for c in eligible]
    scored.sort(key=lambda x: (x[1], x[0]))
    return scored


def retrieve_atomic(query: ConceptSet, pool: Sequence[ConceptSet], t: Taxonomy,
                    delta: float | None = None) -> list[tuple[str, float]]:
    return rank_candidates(query, pool, lambda q, c: set_edit_distance(q, c, t, delta).total_cost)
