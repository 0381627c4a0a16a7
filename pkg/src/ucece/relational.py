"""Level 2: exemplars of roled-up concepts (source, ∃role.filler).

Each directed edge ``s -r-> o`` of a scene graph becomes one element
``<label(s), ∃r.label(o)>``. Nodes without edges contribute nothing, which is
exactly why this tier cannot see isolated objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .atomic import SetMatching, match_sets, rank_candidates
from .graphs import SceneGraph
from .taxonomy import INFEASIBLE, Taxonomies, Taxonomy, concept_distance, deletion_cost, insertion_cost


@dataclass(frozen=True, order=True)
class RoledConcept:
    role: str
    filler: str

    def __str__(self):
        return f"∃{self.role}.{self.filler}"


@dataclass(frozen=True, order=True)
class ExemplarElement:
    source: str
    relation: RoledConcept

    def __str__(self):
        return f"<{self.source}, {self.relation}>"


@dataclass(frozen=True)
class Exemplar:
    elements: tuple[ExemplarElement, ...]
    instance_id: str = ""
    class_label: str = ""


def roll_up(g: SceneGraph) -> Exemplar:
    labels = g.labels
    elements = tuple(
        sorted(ExemplarElement(labels[s], RoledConcept(r, labels[o])) for s, r, o in g.edges)
    )
    return Exemplar(elements, g.instance_id, g.class_label)


# Role and filler items are tagged so the assignment can never pair a role with a concept.
def _two_element(x: RoledConcept) -> tuple[tuple[str, str], tuple[str, str]]:
    return (("role", x.role), ("concept", x.filler))


def _item_cost(tx: Taxonomies):
    def pair(a, b):
        if a[0] != b[0]:
            return INFEASIBLE
        t = tx.roles if a[0] == "role" else tx.concepts
        return concept_distance(t, a[1], b[1])

    def dele(a):
        return deletion_cost(tx.roles if a[0] == "role" else tx.concepts, a[1])

    def ins(b):
        return insertion_cost(tx.roles if b[0] == "role" else tx.concepts, b[1])

    return pair, dele, ins


def role_distance(x: RoledConcept, y: RoledConcept, t_concepts: Taxonomy, t_roles: Taxonomy) -> float:
    tx = Taxonomies(t_concepts, t_roles)
    for t, ids in ((t_roles, (x.role, y.role)), (t_concepts, (x.filler, y.filler))):
        for i in ids:
            t._check(i)
    return match_sets(_two_element(x), _two_element(y), *_item_cost(tx)).total_cost


def element_delete_cost(e: ExemplarElement, tx: Taxonomies) -> float:
    return (deletion_cost(tx.concepts, e.source)
            + deletion_cost(tx.roles, e.relation.role)
            + deletion_cost(tx.concepts, e.relation.filler))


def element_insert_cost(e: ExemplarElement, tx: Taxonomies) -> float:
    return (insertion_cost(tx.concepts, e.source)
            + insertion_cost(tx.roles, e.relation.role)
            + insertion_cost(tx.concepts, e.relation.filler))


def element_distance(a: ExemplarElement, b: ExemplarElement, tx: Taxonomies) -> float:
    return (concept_distance(tx.concepts, a.source, b.source)
            + role_distance(a.relation, b.relation, tx.concepts, tx.roles))


def exemplar_distance(e1: Exemplar, e2: Exemplar, taxonomies: Taxonomies,
                      delta: float | None = None) -> SetMatching:
    if delta is None:
        dele = lambda e: element_delete_cost(e, taxonomies)  # noqa: E731
        ins = lambda e: element_insert_cost(e, taxonomies)  # noqa: E731
    else:
        dele = ins = lambda e: delta  # noqa: E731
    return match_sets(e1.elements, e2.elements,
                      lambda a, b: element_distance(a, b, taxonomies), dele, ins)


def retrieve_relational(query: Exemplar, pool: Sequence[Exemplar], taxonomies: Taxonomies,
                        delta: float | None = None) -> list[tuple[str, float]]:
    return rank_candidates(query, pool,
                           lambda q, c: exemplar_distance(q, c, taxonomies, delta).total_cost)
