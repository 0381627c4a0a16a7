"""Level 3: graph edit distance between scene graphs.

Costs come from the taxonomies: node substitution is the concept distance,
node deletion/insertion is the concept's distance to top; edge costs use the
role hierarchy the same way. Edges are directed and identified by
``(source, role, target)``; between one ordered node pair the role multisets
are matched optimally, so a node mapping fully determines the edge cost.

Two solvers are provided. :func:`exact_ged` runs A* over partial node
assignments. :func:`approx_ged_bipartite` reduces the problem to one linear
assignment. Both report the re-priced cost of the edit script they emit.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .atomic import DUMMY, EmptyPoolError, match_sets, solve_assignment
from .graphs import SceneGraph
from .taxonomy import EditKind, Taxonomies, concept_distance, deletion_cost, insertion_cost

DEFAULT_EXACT_CAP = 8


class GedMode(str, Enum):
    EXACT = "exact"
    APPROXIMATE = "approximate"


class GedCapExceeded(ValueError):
    pass


class AssignmentError(ValueError):
    pass


@dataclass(frozen=True)
class EditOp:
    """One node or edge edit.

    Node ops carry ``left``/``right`` node ids (g1 side / g2 side, ``None``
    for the missing side). Edge ops carry ``(src, dst)`` endpoint pairs in the
    same way. ``before``/``after`` are concept or role labels.
    """

    kind: EditKind
    target: str
    before: str | None
    after: str | None
    left: object
    right: object
    cost: float

    def to_dict(self) -> dict:
        return {
            "op": self.kind.value,
            "target": self.target,
            "before": self.before,
            "after": self.after,
            "left": list(self.left) if isinstance(self.left, tuple) else self.left,
            "right": list(self.right) if isinstance(self.right, tuple) else self.right,
            "cost": self.cost,
        }

    def describe(self) -> str:
        if self.kind is EditKind.REPLACE:
            return f"R {self.target} {self.before} -> {self.after} ({self.cost:g})"
        if self.kind is EditKind.DELETE:
            return f"D {self.target} {self.before} ({self.cost:g})"
        return f"I {self.target} {self.after} ({self.cost:g})"


@dataclass(frozen=True)
class EditScript:
    ops: tuple[EditOp, ...] = ()
    node_map: tuple[tuple[str, str], ...] = field(default=(), compare=False)

    @property
    def node_edit_count(self) -> int:
        return sum(op.target == "node" for op in self.ops)

    @property
    def edge_edit_count(self) -> int:
        return sum(op.target == "edge" for op in self.ops)

    @property
    def total_cost(self) -> float:
        return float(math.fsum(op.cost for op in self.ops))

    def to_jsonl(self) -> str:
        return "".join(json.dumps(op.to_dict(), ensure_ascii=False) + "\n" for op in self.ops)


@dataclass(frozen=True)
class GedResult:
    cost: float
    script: EditScript
    mode: GedMode


class GedCosts:
    """Edit-cost oracle for nodes, edges and role multisets."""

    def __init__(self, taxonomies: Taxonomies):
        self.tx = taxonomies
        self._roleset: dict[tuple, float] = {}

    def node_sub(self, a: str, b: str) -> float:
        return concept_distance(self.tx.concepts, a, b)

    def node_del(self, a: str) -> float:
        return deletion_cost(self.tx.concepts, a)

    def node_ins(self, b: str) -> float:
        return insertion_cost(self.tx.concepts, b)

    def edge_sub(self, r: str, s: str) -> float:
        return concept_distance(self.tx.roles, r, s)

    def edge_del(self, r: str) -> float:
        return deletion_cost(self.tx.roles, r)

    def edge_ins(self, s: str) -> float:
        return insertion_cost(self.tx.roles, s)

    def role_matching(self, r1: Sequence[str], r2: Sequence[str]):
        return match_sets(tuple(r1), tuple(r2), self.edge_sub, self.edge_del, self.edge_ins)

    def roleset(self, r1: tuple[str, ...], r2: tuple[str, ...]) -> float:
        """Optimal cost of turning role multiset ``r1`` into ``r2``."""
        if not r1:
            return math.fsum(self.edge_ins(s) for s in r2)
        if not r2:
            return math.fsum(self.edge_del(r) for r in r1)
        key = (r1, r2)
        hit = self._roleset.get(key)
        if hit is None:
            if len(r1) == 1 and len(r2) == 1:
                a, b = r1[0], r2[0]
                hit = min(self.edge_sub(a, b), self.edge_del(a) + self.edge_ins(b))
            else:
                hit = self.role_matching(r1, r2).total_cost
            self._roleset[key] = hit
        return hit


def _costs(taxonomies: Taxonomies | GedCosts) -> GedCosts:
    return taxonomies if isinstance(taxonomies, GedCosts) else GedCosts(taxonomies)


class _Indexed:
    """Integer-indexed view of a scene graph."""

    def __init__(self, g: SceneGraph):
        self.g = g
        self.ids = g.node_ids
        self.index = {n: i for i, n in enumerate(self.ids)}
        self.labels = g.concepts()
        self.n = len(self.ids)
        pair: dict[tuple[int, int], list[str]] = defaultdict(list)
        for s, r, d in g.edges:
            pair[(self.index[s], self.index[d])].append(r)
        self.pair_roles = {k: tuple(sorted(v)) for k, v in pair.items()}
        self.out_roles = [[] for _ in range(self.n)]
        self.in_roles = [[] for _ in range(self.n)]
        for (s, d), roles in self.pair_roles.items():
            self.out_roles[s].extend(roles)
            self.in_roles[d].extend(roles)
        self.out_roles = [tuple(sorted(x)) for x in self.out_roles]
        self.in_roles = [tuple(sorted(x)) for x in self.in_roles]

    def roles(self, a: int, b: int) -> tuple[str, ...]:
        return self.pair_roles.get((a, b), ())


def _node_matrices(x1: _Indexed, x2: _Indexed, c: GedCosts):
    sub = np.array([[c.node_sub(a, b) for b in x2.labels] for a in x1.labels]).reshape(x1.n, x2.n)
    dele = np.array([c.node_del(a) for a in x1.labels])
    ins = np.array([c.node_ins(b) for b in x2.labels])
    return sub, dele, ins


def _padded(sub: np.ndarray, dele: np.ndarray, ins: np.ndarray) -> np.ndarray:
    m, n = sub.shape
    mat = np.zeros((m + n, m + n))
    mat[:m, :n] = sub
    mat[:m, n:] = np.inf
    mat[m:, :n] = np.inf
    mat[np.arange(m), n + np.arange(m)] = dele
    mat[m + np.arange(n), np.arange(n)] = ins
    return mat


def mapping_cost(g1: SceneGraph, g2: SceneGraph, mapping: Mapping[str, str | None],
                 taxonomies: Taxonomies | GedCosts) -> float:
    """Cost of the edit path induced by a node mapping g1 -> g2 (``None`` = delete)."""
    return edit_script_from_assignment(g1, g2, mapping, taxonomies).total_cost


def edit_script_from_assignment(g1: SceneGraph, g2: SceneGraph, assignment: Mapping[str, str | None],
                                costs: Taxonomies | GedCosts) -> EditScript:
    """Derive and price the full edit script induced by a node assignment.

    ``assignment`` maps every g1 node id to a g2 node id or ``None``. Unmapped
    g2 nodes are inserted. Edges between two mapped nodes are matched role by
    role; all other g1 edges are deleted and all other g2 edges inserted.
    """
    c = _costs(costs)
    x1, x2 = _Indexed(g1), _Indexed(g2)
    if set(assignment) != set(x1.ids):
        raise AssignmentError("assignment must cover exactly the nodes of g1")
    images = [v for v in assignment.values() if v is not None]
    if len(images) != len(set(images)):
        raise AssignmentError("assignment is not injective")
    unknown = [v for v in images if v not in x2.index]
    if unknown:
        raise AssignmentError(f"assignment targets unknown g2 nodes {unknown}")

    fwd = [None if assignment[n] is None else x2.index[assignment[n]] for n in x1.ids]
    inv = {j: i for i, j in enumerate(fwd) if j is not None}
    ops: list[EditOp] = []
    for i, j in enumerate(fwd):
        a = x1.labels[i]
        if j is None:
            ops.append(EditOp(EditKind.DELETE, "node", a, None, x1.ids[i], None, c.node_del(a)))
        elif x2.labels[j] != a:
            b = x2.labels[j]
            ops.append(EditOp(EditKind.REPLACE, "node", a, b, x1.ids[i], x2.ids[j], c.node_sub(a, b)))
    for j in range(x2.n):
        if j not in inv:
            b = x2.labels[j]
            ops.append(EditOp(EditKind.INSERT, "node", None, b, None, x2.ids[j], c.node_ins(b)))

    for (s, d) in sorted(x1.pair_roles):
        r1 = x1.pair_roles[(s, d)]
        e1 = (x1.ids[s], x1.ids[d])
        fs, fd = fwd[s], fwd[d]
        r2 = x2.roles(fs, fd) if fs is not None and fd is not None else ()
        if not r2:
            for r in r1:
                ops.append(EditOp(EditKind.DELETE, "edge", r, None, e1, None, c.edge_del(r)))
            continue
        e2 = (x2.ids[fs], x2.ids[fd])
        for left, right, cost in c.role_matching(r1, r2).pairs:
            if left is DUMMY:
                ops.append(EditOp(EditKind.INSERT, "edge", None, right, None, e2, c.edge_ins(right)))
            elif right is DUMMY:
                ops.append(EditOp(EditKind.DELETE, "edge", left, None, e1, None, c.edge_del(left)))
            elif left != right:
                ops.append(EditOp(EditKind.REPLACE, "edge", left, right, e1, e2, c.edge_sub(left, right)))
    for (s, d) in sorted(x2.pair_roles):
        ps, pd = inv.get(s), inv.get(d)
        if ps is not None and pd is not None and x1.roles(ps, pd):
            continue
        for r in x2.pair_roles[(s, d)]:
            ops.append(EditOp(EditKind.INSERT, "edge", None, r, None, (x2.ids[s], x2.ids[d]), c.edge_ins(r)))

    node_map = tuple((x1.ids[i], x2.ids[j]) for i, j in enumerate(fwd) if j is not None)
    return EditScript(tuple(ops), node_map)


def price_script(script: EditScript, taxonomies: Taxonomies | GedCosts) -> float:
    """Recompute the cost of every op from its labels alone."""
    c = _costs(taxonomies)
    total = []
    for op in script.ops:
        if op.target == "node":
            f = {EditKind.REPLACE: lambda: c.node_sub(op.before, op.after),
                 EditKind.DELETE: lambda: c.node_del(op.before),
                 EditKind.INSERT: lambda: c.node_ins(op.after)}
        else:
            f = {EditKind.REPLACE: lambda: c.edge_sub(op.before, op.after),
                 EditKind.DELETE: lambda: c.edge_del(op.before),
                 EditKind.INSERT: lambda: c.edge_ins(op.after)}
        total.append(f[op.kind]())
    return float(math.fsum(total))


def apply_script(g1: SceneGraph, script: EditScript) -> SceneGraph:
    """Apply an edit script to g1; inserted nodes get ids prefixed with ``+``."""
    labels = dict(g1.nodes)
    edges = set(g1.edges)
    to_work = {right: left for left, right in script.node_map}
    for op in script.ops:
        if op.target != "node":
            continue
        if op.kind is EditKind.DELETE:
            del labels[op.left]
        elif op.kind is EditKind.REPLACE:
            if labels[op.left] != op.before:
                raise AssignmentError(f"node {op.left} is not labelled {op.before}")
            labels[op.left] = op.after
        else:
            new = "+" + op.right
            labels[new] = op.after
            to_work[op.right] = new
    for op in script.ops:
        if op.target != "edge":
            continue
        if op.kind in (EditKind.DELETE, EditKind.REPLACE):
            s, d = op.left
            edges.remove((s, op.before, d))
        if op.kind in (EditKind.INSERT, EditKind.REPLACE):
            s, d = op.right
            edges.add((to_work[s], op.after, to_work[d]))
    dangling = [e for e in edges if e[0] not in labels or e[2] not in labels]
    if dangling:
        raise AssignmentError(f"script leaves dangling edges {sorted(dangling)}")
    order = [n for n, _ in g1.nodes if n in labels] + [n for n in labels if n.startswith("+") and n not in dict(g1.nodes)]
    return SceneGraph(g1.instance_id, g1.class_label,
                      tuple((n, labels[n]) for n in order), tuple(sorted(edges)))


def _check_cap(g1: SceneGraph, g2: SceneGraph, cap: int) -> None:
    n = max(len(g1.nodes), len(g2.nodes))
    if n > cap:
        raise GedCapExceeded(
            f"exact GED refused: {n} nodes exceeds cap {cap}; use approximate mode")


def exact_ged(g1: SceneGraph, g2: SceneGraph, taxonomies: Taxonomies | GedCosts,
              cap: int = DEFAULT_EXACT_CAP) -> GedResult:
    """Optimal GED by A* over partial node assignments.

    The heuristic is an assignment lower bound over the still-unprocessed
    nodes in which each edge is charged half to each endpoint.
    """
    _check_cap(g1, g2, cap)
    c = _costs(taxonomies)
    x1, x2 = _Indexed(g1), _Indexed(g2)
    sub, dele, ins = _node_matrices(x1, x2, c)
    n1, n2 = x1.n, x2.n
    # high-degree nodes first tightens the accumulated edge cost early
    degree = [len(x1.out_roles[i]) + len(x1.in_roles[i]) for i in range(n1)]
    order = sorted(range(n1), key=lambda i: (-degree[i], i))

    h_cache: dict[tuple[int, int], float] = {}

    def restricted(x: _Indexed, keep: set[int]) -> tuple[dict, dict]:
        out: dict[int, list[str]] = {i: [] for i in keep}
        inc: dict[int, list[str]] = {i: [] for i in keep}
        for (s, d), roles in x.pair_roles.items():
            if s in keep and d in keep:
                out[s].extend(roles)
                inc[d].extend(roles)
        return ({i: tuple(sorted(v)) for i, v in out.items()},
                {i: tuple(sorted(v)) for i, v in inc.items()})

    def heuristic(depth: int, used: int) -> float:
        # node-plus-half-incident-edge assignment over the unprocessed part; edges
        # leaving that part are ignored, which keeps the bound admissible
        key = (depth, used)
        hit = h_cache.get(key)
        if hit is not None:
            return hit
        rows = order[depth:]
        cols = [j for j in range(n2) if not used >> j & 1]
        out1, in1 = restricted(x1, set(rows))
        out2, in2 = restricted(x2, set(cols))
        block = np.array([[sub[i, j] + 0.5 * (c.roleset(out1[i], out2[j]) + c.roleset(in1[i], in2[j]))
                           for j in cols] for i in rows]).reshape(len(rows), len(cols))
        d_vec = np.array([dele[i] + 0.5 * c.roleset(out1[i] + in1[i], ()) for i in rows])
        i_vec = np.array([ins[j] + 0.5 * c.roleset((), out2[j] + in2[j]) for j in cols])
        val = solve_assignment(_padded(block, d_vec, i_vec))[2]
        h_cache[key] = val
        return val

    # pair_cost[a, b, x, y]: edge cost of ordered pair (a, b) landing on (x, y); index n2 = deleted
    eps = n2
    pair_cost = np.zeros((n1, n1, n2 + 1, n2 + 1))
    for a in range(n1):
        for b in range(n1):
            if a == b:
                continue
            r1 = x1.roles(a, b)
            for xa in range(n2 + 1):
                for xb in range(n2 + 1):
                    r2 = x2.roles(xa, xb) if xa != eps and xb != eps else ()
                    if r1 or r2:
                        pair_cost[a, b, xa, xb] = c.roleset(r1, r2)

    def step_cost(depth: int, assigned: tuple, j: int | None) -> float:
        i = order[depth]
        jj = eps if j is None else j
        total = dele[i] if j is None else sub[i, j]
        for k_depth, jk in enumerate(assigned):
            k = order[k_depth]
            kk = eps if jk is None else jk
            total += pair_cost[i, k, jj, kk] + pair_cost[k, i, kk, jj]
        return float(total)

    def completion_cost(assigned: tuple, used: int) -> float:
        free = [j for j in range(n2) if not used >> j & 1]
        if not free:
            return 0.0
        free_set = set(free)
        total = float(ins[free].sum())
        for (s, d), roles in x2.pair_roles.items():
            if s in free_set or d in free_set:
                total += c.roleset((), roles)
        return total

    # states that cannot beat the bipartite upper bound are never queued
    bound = approx_ged_bipartite(g1, g2, c).cost + 1e-9
    counter = itertools.count()
    start_h = heuristic(0, 0)
    heap = [(start_h, 0, next(counter), 0.0, (), 0, False)]
    while heap:
        f, _, _, g, assigned, used, done = heapq.heappop(heap)
        if done:
            break
        depth = len(assigned)
        if depth == n1:
            total = g + completion_cost(assigned, used)
            heapq.heappush(heap, (total, -depth - 1, next(counter), total, assigned, used, True))
            continue
        for j in [*(j for j in range(n2) if not used >> j & 1), None]:
            g_new = g + step_cost(depth, assigned, j)
            if not g_new <= bound:
                continue
            used_new = used if j is None else used | (1 << j)
            h = heuristic(depth + 1, used_new)
            if not g_new + h <= bound:
                continue
            heapq.heappush(heap, (g_new + h, -depth - 1, next(counter), g_new, assigned + (j,), used_new, False))
    else:
        raise AssignmentError("no finite edit path exists")

    mapping = {x1.ids[order[d]]: (None if j is None else x2.ids[j]) for d, j in enumerate(assigned)}
    script = edit_script_from_assignment(g1, g2, mapping, c)
    return GedResult(script.total_cost, script, GedMode.EXACT)


def bipartite_cost_matrix(g1: SceneGraph, g2: SceneGraph, taxonomies: Taxonomies | GedCosts) -> np.ndarray:
    """The (|V1|+|V2|)^2 LAP matrix with half of each incident-edge cost folded in."""
    c = _costs(taxonomies)
    x1, x2 = _Indexed(g1), _Indexed(g2)
    sub, dele, ins = _node_matrices(x1, x2, c)
    sub = sub.copy()
    for i in range(x1.n):
        for j in range(x2.n):
            sub[i, j] += 0.5 * (c.roleset(x1.out_roles[i], x2.out_roles[j])
                                + c.roleset(x1.in_roles[i], x2.in_roles[j]))
    dele = dele + 0.5 * np.array([c.roleset(x1.out_roles[i] + x1.in_roles[i], ()) for i in range(x1.n)])
    ins = ins + 0.5 * np.array([c.roleset((), x2.out_roles[j] + x2.in_roles[j]) for j in range(x2.n)])
    return _padded(sub, dele, ins)


def approx_ged_bipartite(g1: SceneGraph, g2: SceneGraph, taxonomies: Taxonomies | GedCosts) -> GedResult:
    """Upper bound on GED from a single cubic-time assignment of nodes.

    The LAP objective only guides the node mapping; the returned cost is the
    exact price of the edit script that mapping induces.
    """
    c = _costs(taxonomies)
    mat = bipartite_cost_matrix(g1, g2, c)
    n1, n2 = len(g1.nodes), len(g2.nodes)
    rows, cols, _ = solve_assignment(mat)
    ids1, ids2 = g1.node_ids, g2.node_ids
    mapping: dict[str, str | None] = {}
    for i, j in zip(rows, cols):
        if i < n1:
            mapping[ids1[i]] = ids2[j] if j < n2 else None
    script = edit_script_from_assignment(g1, g2, mapping, c)
    return GedResult(script.total_cost, script, GedMode.APPROXIMATE)


def compute_ged(g1: SceneGraph, g2: SceneGraph, taxonomies: Taxonomies | GedCosts,
                mode: GedMode | str = GedMode.APPROXIMATE, cap: int = DEFAULT_EXACT_CAP) -> GedResult:
    mode = GedMode(mode)
    if mode is GedMode.EXACT:
        return exact_ged(g1, g2, taxonomies, cap)
    return approx_ged_bipartite(g1, g2, taxonomies)


def retrieve_structural_exhaustive(query: SceneGraph, pool: Sequence[SceneGraph],
                                   taxonomies: Taxonomies | GedCosts,
                                   mode: GedMode | str = GedMode.EXACT,
                                   cap: int = DEFAULT_EXACT_CAP) -> list[tuple[str, GedResult]]:
    """Rank every different-class candidate by GED to the query."""
    c = _costs(taxonomies)
    eligible = [g for g in pool if g.class_label != query.class_label]
    if not eligible:
        raise EmptyPoolError(f"no candidate outside class {query.class_label!r}")
    scored = [(g.instance_id, compute_ged(query, g, c, mode, cap)) for g in eligible]
    scored.sort(key=lambda x: (x[1].cost, x[0]))
    return scored


def _ged_row(args):
    i, graphs, taxonomies, mode, cap = args
    c = GedCosts(taxonomies)
    return [compute_ged(graphs[i], graphs[j], c, mode, cap).cost for j in range(i + 1, len(graphs))]


def pairwise_ged_matrix(graphs: Sequence[SceneGraph], taxonomies: Taxonomies,
                        mode: GedMode | str = GedMode.APPROXIMATE, cap: int = DEFAULT_EXACT_CAP,
                        workers: int = 1) -> np.ndarray:
    """Symmetric matrix of GED costs over all unordered pairs.

    GED(g, h) is computed once per pair with ``g`` earlier in ``graphs``.
    Rows are assembled in index order regardless of ``workers``.
    """
    n = len(graphs)
    out = np.zeros((n, n))
    jobs = [(i, list(graphs), taxonomies, GedMode(mode), cap) for i in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_ged_row, jobs))
    else:
        rows = [_ged_row(job) for job in jobs]
    for i, row in enumerate(rows):
        out[i, i + 1:] = row
        out[i + 1:, i] = row
    return out


def script_to_dot(g1: SceneGraph, g2: SceneGraph, script: EditScript, name: str = "edits") -> str:
    """DOT rendering: green insert, red delete, blue replace, grey context."""
    colors = {EditKind.INSERT: "green", EditKind.DELETE: "red", EditKind.REPLACE: "blue"}
    node_color: dict[str, str] = {}
    node_label = dict(g1.nodes)
    right_to_left = {r: l for l, r in script.node_map}
    inserted: dict[str, str] = {}
    for op in script.ops:
        if op.target != "node":
            continue
        if op.kind is EditKind.INSERT:
            key = "+" + op.right
            inserted[op.right] = key
            node_label[key] = op.after
            node_color[key] = colors[op.kind]
        elif op.kind is EditKind.REPLACE:
            node_color[op.left] = colors[op.kind]
            node_label[op.left] = f"{op.before} -> {op.after}"
        else:
            node_color[op.left] = colors[op.kind]

    def work(right_id: str) -> str:
        return right_to_left.get(right_id) or inserted[right_id]

    lines = [f"digraph {json.dumps(name)} {{"]
    for n in list(dict(g1.nodes)) + sorted(k for k in node_label if k not in dict(g1.nodes)):
        color = node_color.get(n, "grey")
        lines.append(f"  {json.dumps(n)} [label={json.dumps(node_label[n])}, color={color}, style=filled, fillcolor={color}];")
    edge_ops = {}
    for op in script.ops:
        if op.target != "edge":
            continue
        if op.kind is EditKind.INSERT:
            s, d = work(op.right[0]), work(op.right[1])
            edge_ops[(s, op.after, d)] = (op.after, colors[op.kind])
        elif op.kind is EditKind.DELETE:
            edge_ops[(op.left[0], op.before, op.left[1])] = (op.before, colors[op.kind])
        else:
            edge_ops[(op.left[0], op.before, op.left[1])] = (f"{op.before} -> {op.after}", colors[op.kind])
    for s, r, d in g1.edges:
        if (s, r, d) not in edge_ops:
            lines.append(f"  {json.dumps(s)} -> {json.dumps(d)} [label={json.dumps(r)}, color=grey];")
    for (s, r, d), (label, color) in edge_ops.items():
        lines.append(f"  {json.dumps(s)} -> {json.dumps(d)} [label={json.dumps(label)}, color={color}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
