import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_graph
from oracles import brute_element_distance, brute_exemplar_distance
from ucece.atomic import EmptyPoolError
from ucece.graphs import SceneGraph, default_role_taxonomy, default_scene_taxonomy
from ucece.relational import (
    Exemplar,
    ExemplarElement,
    RoledConcept,
    element_distance,
    element_insert_cost,
    exemplar_distance,
    retrieve_relational,
    role_distance,
    roll_up,
)
from ucece.taxonomy import Taxonomies, concept_distance, deletion_cost

TX = Taxonomies(default_scene_taxonomy().precompute(), default_role_taxonomy().precompute())
CONCEPTS = TX.concepts.atomic_ids()
ROLES = TX.roles.atomic_ids()

roled = st.builds(RoledConcept, st.sampled_from(ROLES), st.sampled_from(CONCEPTS))
elements = st.builds(ExemplarElement, st.sampled_from(CONCEPTS), roled)
exemplars = st.lists(elements, max_size=3).map(lambda es: Exemplar(tuple(es)))


def el(src, role, filler):
    return ExemplarElement(src, RoledConcept(role, filler))


def test_roll_up_single_edge():
    g = SceneGraph("g", "A", (("a", "cat"), ("b", "keyboard")), (("a", "on", "b"),))
    assert roll_up(g).elements == (el("cat", "on", "keyboard"),)


def test_roll_up_drops_isolated_nodes():
    g = SceneGraph("g", "A", (("a", "cat"), ("b", "keyboard"), ("c", "doctor")), (("a", "on", "b"),))
    assert roll_up(g).elements == (el("cat", "on", "keyboard"),)


def test_roll_up_edgeless_is_empty():
    g = SceneGraph("g", "A", (("a", "cat"), ("b", "dog"), ("c", "tree")))
    assert roll_up(g).elements == ()


def test_role_distance_examples():
    tc, tr = TX.concepts, TX.roles
    same = RoledConcept("on", "table")
    assert role_distance(same, same, tc, tr) == 0
    assert role_distance(same, RoledConcept("on", "desk"), tc, tr) == concept_distance(tc, "table", "desk")
    assert role_distance(same, RoledConcept("under", "table"), tc, tr) == concept_distance(tr, "on", "under")


def test_exemplar_against_empty():
    e = Exemplar((el("cat", "on", "keyboard"),))
    expected = (deletion_cost(TX.concepts, "cat") + deletion_cost(TX.roles, "on")
                + deletion_cost(TX.concepts, "keyboard"))
    assert exemplar_distance(e, Exemplar(()), TX).total_cost == expected


def test_empty_query_ranks_by_insertion_cost():
    q = Exemplar((), "q", "A")
    pool = [Exemplar((el("cat", "on", "table"), el("dog", "near", "tree")), "c1", "B"),
            Exemplar((el("animal", "on", "artifact"),), "c2", "B"),
            Exemplar((el("cat", "on", "keyboard"),), "c3", "B")]
    ranked = retrieve_relational(q, pool, TX)
    by_hand = {c.instance_id: sum(element_insert_cost(e, TX) for e in c.elements) for c in pool}
    assert ranked == sorted(by_hand.items(), key=lambda x: (x[1], x[0]))
    assert ranked[0] == ("c2", 3.0)


def test_identical_candidate_is_top1():
    e = (el("cat", "on", "table"),)
    ranked = retrieve_relational(Exemplar(e, "q", "A"), [Exemplar(e, "x", "B"), Exemplar((), "y", "B")], TX)
    assert ranked[0] == ("x", 0.0)


def test_same_class_pool_errors():
    with pytest.raises(EmptyPoolError):
        retrieve_relational(Exemplar((), "q", "A"), [Exemplar((), "x", "A")], TX)


def test_toy_pool_matches_brute_force():
    rng = np.random.default_rng(3)
    graphs = [random_graph(rng, TX, 2, 3, 0.5, gid=f"c{i}", cls="B") for i in range(5)]
    q = roll_up(random_graph(rng, TX, 2, 3, 0.5, gid="q"))
    pool = [roll_up(g) for g in graphs]
    pool = [p for p in pool if len(p.elements) <= 3]
    expected = sorted(((p.instance_id, brute_exemplar_distance(q, p, TX)) for p in pool), key=lambda x: (x[1], x[0]))
    assert retrieve_relational(q, pool, TX) == expected


@given(roled, roled)
def test_role_distance_symmetric(x, y):
    assert role_distance(x, y, TX.concepts, TX.roles) == role_distance(y, x, TX.concepts, TX.roles)


@given(elements, elements)
def test_element_distance_matches_enumeration(a, b):
    assert element_distance(a, b, TX) == brute_element_distance(a, b, TX)


@given(st.lists(elements, max_size=2), st.lists(elements, max_size=2))
def test_two_by_two_matches_enumeration(a, b):
    e1, e2 = Exemplar(tuple(a)), Exemplar(tuple(b))
    assert exemplar_distance(e1, e2, TX).total_cost == brute_exemplar_distance(e1, e2, TX)


@given(exemplars, exemplars)
def test_exemplar_symmetry_and_identity(e1, e2):
    assert exemplar_distance(e1, e1, TX).total_cost == 0
    assert exemplar_distance(e1, e2, TX).total_cost == exemplar_distance(e2, e1, TX).total_cost


@given(st.integers(0, 10_000))
def test_invariant_to_listing_order(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, TX, 2, 4, gid="a")
    h = random_graph(rng, TX, 2, 4, gid="b")
    base = exemplar_distance(roll_up(g), roll_up(h), TX).total_cost
    assert exemplar_distance(roll_up(g.permuted(rng)), roll_up(h.permuted(rng)), TX).total_cost == base


@given(st.integers(0, 10_000), st.sampled_from(CONCEPTS))
def test_isolated_node_is_invisible(seed, concept):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, TX, 1, 4, gid="a")
    h = random_graph(rng, TX, 1, 4, gid="b")
    base = exemplar_distance(roll_up(g), roll_up(h), TX).total_cost
    assert exemplar_distance(roll_up(g.with_node("extra", concept)), roll_up(h), TX).total_cost == base
    assert exemplar_distance(roll_up(g), roll_up(h.with_node("extra", concept)), TX).total_cost == base
