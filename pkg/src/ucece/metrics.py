"""Ranking fidelity and edit-economy metrics against a GED ground truth.

The ground-truth relevant set for cutoff ``k`` is closed under ties: every
candidate whose GED is no larger than the k-th best GED counts as relevant.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

DEFAULT_KS = (1, 2, 4)


@dataclass(frozen=True)
class RankingPair:
    predicted: tuple[str, ...]
    ground_truth: tuple[str, ...]
    ged_lookup: Mapping[str, float]

    def __post_init__(self):
        object.__setattr__(self, "predicted", tuple(self.predicted))
        object.__setattr__(self, "ground_truth", tuple(self.ground_truth))
        if set(self.predicted) != set(self.ground_truth):
            raise ValueError("predicted and ground-truth rankings cover different candidates")

    @classmethod
    def from_costs(cls, predicted: Sequence[str], ged_lookup: Mapping[str, float]) -> "RankingPair":
        gt = sorted(ged_lookup, key=lambda c: (ged_lookup[c], c))
        return cls(tuple(predicted), tuple(gt), dict(ged_lookup))


def _check_k(rp: RankingPair, k: int) -> None:
    if not 1 <= k <= len(rp.ground_truth):
        raise ValueError(f"k={k} outside [1, {len(rp.ground_truth)}]")


def relevant_set(rp: RankingPair, k: int) -> set[str]:
    """Ground-truth top-k, widened to every candidate tied with the k-th cost."""
    _check_k(rp, k)
    boundary = rp.ged_lookup[rp.ground_truth[k - 1]]
    return {c for c in rp.ground_truth if rp.ged_lookup[c] <= boundary}


def _dcg(hits: Sequence[bool]) -> float:
    return sum(1.0 / math.log2(rank + 2) for rank, hit in enumerate(hits) if hit)


def _ndcg(predicted: Sequence[str], relevant: set[str], k: int) -> float:
    idcg = _dcg([True] * min(k, len(relevant)))
    if idcg == 0:
        return 0.0
    return _dcg([c in relevant for c in predicted[:k]]) / idcg


def precision_at_k(rp: RankingPair, k: int) -> float:
    rel = relevant_set(rp, k)
    return sum(c in rel for c in rp.predicted[:k]) / k


def ndcg_at_k(rp: RankingPair, k: int) -> float:
    """Flat-gain nDCG; the ideal ordering places min(k, |relevant|) hits first."""
    return _ndcg(rp.predicted, relevant_set(rp, k), k)


def graded_ndcg_at_k(rp: RankingPair, k: int) -> float:
    """nDCG with gain ``1 / (1 + GED)`` instead of flat relevance."""
    _check_k(rp, k)

    def dcg(ids):
        return sum((1.0 / (1.0 + rp.ged_lookup[c])) / math.log2(r + 2) for r, c in enumerate(ids[:k]))

    ideal = dcg(rp.ground_truth)
    return dcg(rp.predicted) / ideal if ideal > 0 else 0.0


def binary_variants(rp: RankingPair, k: int) -> tuple[float, float]:
    """Hit rate and nDCG of recovering a GED-optimal candidate within the top k."""
    _check_k(rp, k)
    optimal = relevant_set(rp, 1)
    hit = float(any(c in optimal for c in rp.predicted[:k]))
    return hit, _ndcg(rp.predicted, optimal, k)


@dataclass(frozen=True)
class EditSummary:
    node_edits: int
    edge_edits: int
    cost: float


def edit_metrics(results: Sequence) -> tuple[float, float, float, float]:
    """Mean node edits, edge edits, total edits and GED over per-query top-1 results.

    Accepts :class:`~ucece.ged.GedResult` objects or :class:`EditSummary`.
    """
    if not results:
        raise ValueError("edit_metrics needs at least one result")
    rows = []
    for r in results:
        if isinstance(r, EditSummary):
            rows.append((r.node_edits, r.edge_edits, r.cost))
        else:
            rows.append((r.script.node_edit_count, r.script.edge_edit_count, r.cost))
    n = len(rows)
    node = sum(r[0] for r in rows) / n
    edge = sum(r[1] for r in rows) / n
    total = sum(r[0] + r[1] for r in rows) / n
    ged = math.fsum(r[2] for r in rows) / n
    return node, edge, total, ged


@dataclass
class MetricsReport:
    precision: dict[int, float] = field(default_factory=dict)
    ndcg: dict[int, float] = field(default_factory=dict)
    binary_precision: dict[int, float] = field(default_factory=dict)
    binary_ndcg: dict[int, float] = field(default_factory=dict)
    e_node: float = 0.0
    e_edge: float = 0.0
    e_total: float = 0.0
    mean_ged: float = 0.0
    queries: int = 0

    def rows(self, name: str) -> list[tuple[str, str, str, float]]:
        out = []
        for metric, table in (("P", self.precision), ("nDCG", self.ndcg),
                              ("binary_P", self.binary_precision), ("binary_nDCG", self.binary_ndcg)):
            for k in sorted(table):
                out.append((name, metric, str(k), table[k]))
        for metric, value in (("e_node", self.e_node), ("e_edge", self.e_edge),
                              ("e_total", self.e_total), ("GED", self.mean_ged)):
            out.append((name, metric, "", value))
        return out


def summarize(pairs: Sequence[RankingPair], top1: Sequence, ks: Sequence[int] = DEFAULT_KS) -> MetricsReport:
    """Average every ranking metric over queries; k values beyond a pool size are clipped."""
    rep = MetricsReport(queries=len(pairs))
    for k in ks:
        vals = {"p": [], "n": [], "bp": [], "bn": []}
        for rp in pairs:
            kk = min(k, len(rp.ground_truth))
            vals["p"].append(precision_at_k(rp, kk))
            vals["n"].append(ndcg_at_k(rp, kk))
            b = binary_variants(rp, kk)
            vals["bp"].append(b[0])
            vals["bn"].append(b[1])
        if pairs:
            rep.precision[k] = math.fsum(vals["p"]) / len(pairs)
            rep.ndcg[k] = math.fsum(vals["n"]) / len(pairs)
            rep.binary_precision[k] = math.fsum(vals["bp"]) / len(pairs)
            rep.binary_ndcg[k] = math.fsum(vals["bn"]) / len(pairs)
    if top1:
        rep.e_node, rep.e_edge, rep.e_total, rep.mean_ged = edit_metrics(top1)
    return rep


def metrics_csv(reports: Mapping[str, MetricsReport]) -> str:
    """Long-format CSV: ``tier,metric,k,value``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tier", "metric", "k", "value"])
    for name in reports:
        for row in reports[name].rows(name):
            w.writerow([row[0], row[1], row[2], repr(float(row[3]))])
    return buf.getvalue()


TABLE_COLUMNS = ("P@1", "e_node", "e_edge", "e_total", "GED")


def compare_tiers(reports: Mapping[str, MetricsReport]) -> tuple[str, str]:
    """Side-by-side ``(csv, aligned text)`` table of P@1 and edit metrics per tier."""
    if len(reports) < 2:
        raise ValueError("compare_tiers needs at least two tiers")
    rows = []
    for name, r in reports.items():
        rows.append((name, r.precision.get(1, float("nan")), r.e_node, r.e_edge, r.e_total, r.mean_ged))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("level",) + TABLE_COLUMNS)
    for row in rows:
        w.writerow([row[0]] + [f"{v:.3f}" for v in row[1:]])
    width = max(len("level"), *(len(r[0]) for r in rows))
    lines = ["level".ljust(width) + "".join(c.rjust(10) for c in TABLE_COLUMNS)]
    for row in rows:
        lines.append(row[0].ljust(width) + "".join(f"{v:10.3f}" for v in row[1:]))
    return buf.getvalue(), "\n".join(lines) + "\n"
