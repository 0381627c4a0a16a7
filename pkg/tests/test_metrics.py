import math

import pytest
from hypothesis import given, strategies as st

from ucece.metrics import (
    EditSummary,
    MetricsReport,
    RankingPair,
    binary_variants,
    compare_tiers,
    edit_metrics,
    graded_ndcg_at_k,
    metrics_csv,
    ndcg_at_k,
    precision_at_k,
    relevant_set,
    summarize,
)

IDS = [f"c{i}" for i in range(10)]


def rp(predicted, costs):
    return RankingPair.from_costs(predicted, costs)


def distinct():
    return {c: float(i) for i, c in enumerate(IDS)}


def test_perfect_ranking():
    r = rp(IDS, distinct())
    for k in (1, 2, 4):
        assert precision_at_k(r, k) == 1.0
        assert ndcg_at_k(r, k) == 1.0
        assert binary_variants(r, k) == (1.0, 1.0)


def test_reversed_ranking():
    r = rp(IDS[::-1], distinct())
    assert precision_at_k(r, 2) == 0.0
    assert ndcg_at_k(r, 2) == 0.0
    assert binary_variants(r, 2) == (0.0, 0.0)


def test_half_overlap_top4():
    r = rp(["c0", "c5", "c1", "c6"] + [c for c in IDS if c not in ("c0", "c5", "c1", "c6")], distinct())
    assert precision_at_k(r, 4) == 0.5


def test_single_relevant_at_rank_two():
    r = rp(["c1", "c0"] + IDS[2:], distinct())
    # the binary relevance set is the lone optimum
    assert binary_variants(r, 2) == (1.0, pytest.approx(1 / math.log2(3)))
    assert binary_variants(r, 1) == (0.0, 0.0)
    # the graded top-2 set holds two items, so the ideal places both first
    assert ndcg_at_k(r, 2) == pytest.approx(1.0)
    r = rp(["c5", "c0"] + [c for c in IDS if c not in ("c5", "c0")], distinct())
    assert ndcg_at_k(r, 2) == pytest.approx((1 / math.log2(3)) / (1 + 1 / math.log2(3)))


def test_ties_widen_relevance():
    costs = {"a": 1.0, "b": 1.0, "c": 1.0, "d": 5.0}
    r = rp(["c", "d", "a", "b"], costs)
    assert relevant_set(r, 1) == {"a", "b", "c"}
    assert precision_at_k(r, 1) == 1.0
    assert binary_variants(r, 1) == (1.0, 1.0)


def test_k_out_of_range():
    r = rp(IDS[:3], {c: 0.0 for c in IDS[:3]})
    for k in (0, 4):
        with pytest.raises(ValueError):
            precision_at_k(r, k)
        with pytest.raises(ValueError):
            ndcg_at_k(r, k)
        with pytest.raises(ValueError):
            binary_variants(r, k)


def test_mismatched_candidates():
    with pytest.raises(ValueError):
        RankingPair(("a", "b"), ("a", "c"), {"a": 0, "b": 1, "c": 2})


def test_graded_ndcg():
    assert graded_ndcg_at_k(rp(IDS, distinct()), 4) == 1.0
    assert 0 < graded_ndcg_at_k(rp(IDS[::-1], distinct()), 4) < 1


def test_edit_metrics_examples():
    assert edit_metrics([EditSummary(0, 0, 0.0)] * 3) == (0, 0, 0, 0)
    assert edit_metrics([EditSummary(2, 1, 5.0), EditSummary(4, 3, 7.0)]) == (3, 2, 5, 6)
    assert edit_metrics([EditSummary(1, 2, 3.5)]) == (1, 2, 3, 3.5)
    with pytest.raises(ValueError):
        edit_metrics([])


def test_summarize_and_csv():
    pairs = [rp(IDS, distinct()), rp(IDS[::-1], distinct())]
    rep = summarize(pairs, [EditSummary(1, 1, 2.0), EditSummary(3, 1, 4.0)])
    assert rep.precision[1] == 0.5 and rep.queries == 2 and rep.mean_ged == 3.0
    text = metrics_csv({"x": rep})
    assert text.splitlines()[0] == "tier,metric,k,value"
    assert "x,P,1,0.5" in text.splitlines()
    assert summarize(pairs[:1], [], ks=(1, 50)).precision[50] == 1.0


def test_compare_tiers():
    a, b = MetricsReport(precision={1: 0.5}, e_total=3.0), MetricsReport(precision={1: 1.0}, mean_ged=2.0)
    table_csv, table_txt = compare_tiers({"atomic": a, "structural": b})
    assert table_csv.splitlines()[0] == "level,P@1,e_node,e_edge,e_total,GED"
    assert table_csv.splitlines()[1].startswith("atomic,0.500")
    assert len(table_txt.splitlines()) == 3
    with pytest.raises(ValueError):
        compare_tiers({"atomic": a})


costs_st = st.lists(st.integers(0, 4), min_size=1, max_size=8)


@given(costs_st, st.randoms(use_true_random=False), st.data())
def test_metric_ranges(costs, rnd, data):
    ids = [f"c{i}" for i in range(len(costs))]
    pred = ids[:]
    rnd.shuffle(pred)
    r = RankingPair.from_costs(pred, dict(zip(ids, map(float, costs))))
    k = data.draw(st.integers(1, len(ids)))
    for v in (precision_at_k(r, k), ndcg_at_k(r, k), *binary_variants(r, k)):
        assert 0.0 <= v <= 1.0 + 1e-12
    best = RankingPair.from_costs(list(r.ground_truth), r.ged_lookup)
    assert precision_at_k(best, k) == 1.0 and ndcg_at_k(best, k) == pytest.approx(1.0)
