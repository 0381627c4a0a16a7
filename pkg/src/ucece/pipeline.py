"""End-to-end experiments: ingestion, target classes, tier evaluation, reports, scaling."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .atomic import ConceptSet, EmptyPoolError, retrieve_atomic
from .ged import (
    DEFAULT_EXACT_CAP,
    GedCosts,
    GedMode,
    GedResult,
    compute_ged,
    pairwise_ged_matrix,
    script_to_dot,
)
from .graphs import (
    GraphError,
    SceneGraph,
    default_role_taxonomy,
    default_scene_taxonomy,
    generate_synthetic_graphs,
    read_graphs,
    write_graphs,
)
from .metrics import DEFAULT_KS, MetricsReport, RankingPair, compare_tiers, metrics_csv, summarize
from .relational import retrieve_relational, roll_up
from .taxonomy import Taxonomies, Taxonomy, dump_taxonomy, flat_taxonomy, load_taxonomy

log = logging.getLogger(__name__)

TAXONOMY_FILE = "taxonomy.tsv"
ROLES_FILE = "roles.tsv"
CONFUSION_FILE = "confusion.csv"
GRAPHS_FILE = "graphs.jsonl"


class Tier(str, Enum):
    ATOMIC = "atomic"
    RELATIONAL = "relational"
    STRUCTURAL = "structural"


class Engine(str, Enum):
    EXHAUSTIVE_EXACT = "exhaustive_exact"
    EXHAUSTIVE_APPROX = "exhaustive_approx"
    TRANSDUCTIVE = "transductive"
    INDUCTIVE_VGAE = "inductive_vgae"
    INDUCTIVE_GFA = "inductive_gfa"


@dataclass
class Corpus:
    graphs: list[SceneGraph]
    taxonomies: Taxonomies
    taxonomy_path: str | None = None
    roles_path: str | None = None
    confusion: dict[tuple[str, str], int] = field(default_factory=dict)
    _gt: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.graphs = sorted(self.graphs, key=lambda g: g.instance_id)
        ids = [g.instance_id for g in self.graphs]
        if len(set(ids)) != len(ids):
            raise GraphError(f"duplicate instance ids: {sorted({i for i in ids if ids.count(i) > 1})[:5]}")
        for g in self.graphs:
            g.check_labels(self.taxonomies.concepts, self.taxonomies.roles)

    def __len__(self):
        return len(self.graphs)

    @property
    def ids(self) -> list[str]:
        return [g.instance_id for g in self.graphs]

    def graph(self, instance_id: str) -> SceneGraph:
        for g in self.graphs:
            if g.instance_id == instance_id:
                return g
        raise KeyError(f"unknown graph id {instance_id!r}")

    def atomic_views(self) -> list[ConceptSet]:
        return [ConceptSet(tuple(g.concepts()), g.instance_id, g.class_label) for g in self.graphs]

    def relational_views(self):
        return [roll_up(g) for g in self.graphs]

    def ged_matrix(self, mode: GedMode | str, cap: int = DEFAULT_EXACT_CAP, workers: int = 1) -> np.ndarray:
        """All-pairs GED, computed once per mode and cached."""
        mode = GedMode(mode)
        if mode not in self._gt:
            self._gt[mode] = pairwise_ged_matrix(self.graphs, self.taxonomies, mode, cap, workers)
        return self._gt[mode]


def read_confusion(path: str | Path) -> dict[tuple[str, str], int]:
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 1 and row[:3] == ["source_class", "other_class", "count"]:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected source_class,other_class,count")
            try:
                out[(row[0], row[1])] = int(row[2])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad count {row[2]!r}") from None
    return out


def ingest(directory: str | Path, taxonomy: str | Path | None = None, roles: str | Path | None = None,
           confusion: str | Path | None = None) -> Corpus:
    """Load every ``*.json``/``*.jsonl`` graph file under ``directory``.

    Taxonomy, role taxonomy and confusion table default to ``taxonomy.tsv``,
    ``roles.tsv`` and ``confusion.csv`` inside the directory. Without a role
    file roles form a flat hierarchy.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise GraphError(f"{directory}: not a directory")
    graphs = []
    files = sorted(p for p in directory.iterdir() if p.suffix in (".json", ".jsonl"))
    if not files:
        raise GraphError(f"{directory}: no .json or .jsonl graph files")
    for p in files:
        graphs.extend(read_graphs(p))

    tax_path = Path(taxonomy) if taxonomy else directory / TAXONOMY_FILE
    if tax_path.exists():
        t_concepts = load_taxonomy(tax_path)
    elif taxonomy is None:
        t_concepts = default_scene_taxonomy()
        tax_path = None
    else:
        raise GraphError(f"{tax_path}: taxonomy file not found")
    role_path = Path(roles) if roles else directory / ROLES_FILE
    if role_path.exists():
        t_roles = load_taxonomy(role_path)
    else:
        t_roles = flat_taxonomy(r for g in graphs for r in g.roles())
        role_path = None
    conf_path = Path(confusion) if confusion else directory / CONFUSION_FILE
    table = read_confusion(conf_path) if conf_path.exists() else {}
    return Corpus(graphs, Taxonomies(t_concepts, t_roles),
                  str(tax_path) if tax_path else None, str(role_path) if role_path else None, table)


def write_corpus(corpus: Corpus, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_graphs(corpus.graphs, directory / GRAPHS_FILE)
    (directory / TAXONOMY_FILE).write_text(dump_taxonomy(corpus.taxonomies.concepts), encoding="utf-8")
    (directory / ROLES_FILE).write_text(dump_taxonomy(corpus.taxonomies.roles), encoding="utf-8")
    if corpus.confusion:
        with open(directory / CONFUSION_FILE, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["source_class", "other_class", "count"])
            for (a, b), n in sorted(corpus.confusion.items()):
                w.writerow([a, b, n])


def synthetic_corpus(seed: int, count: int, size_range=(3, 6), taxonomy: Taxonomy | None = None,
                     edge_density: float = 0.3, id_prefix: str = "g") -> Corpus:
    t = taxonomy or default_scene_taxonomy()
    roles = default_role_taxonomy()
    graphs = generate_synthetic_graphs(seed, count, size_range, t, roles.atomic_ids(),
                                       edge_density=edge_density, id_prefix=id_prefix)
    return Corpus(graphs, Taxonomies(t, roles))


def select_target_class(query: SceneGraph, corpus: Corpus, mode: str,
                        ranking: Sequence[tuple[str, float]] | None = None) -> str:
    """Counterfactual target class for ``query``.

    ``labeled``: the class most often confused with the query's class in the
    confusion table (ties: lexicographic). ``unlabeled``: the class of the
    first entry of ``ranking`` (or of the nearest GED candidate) outside the
    query's class.
    """
    if mode == "labeled":
        row = {b: n for (a, b), n in corpus.confusion.items() if a == query.class_label and b != a}
        if not row:
            raise ValueError(f"no confusion entries for class {query.class_label!r}")
        return min(row, key=lambda b: (-row[b], b))
    if mode != "unlabeled":
        raise ValueError(f"unknown target mode {mode!r}")
    if ranking is None:
        others = [g for g in corpus.graphs if g.class_label != query.class_label]
        if not others:
            raise EmptyPoolError(f"no candidate outside class {query.class_label!r}")
        costs = GedCosts(corpus.taxonomies)
        ranking = sorted(((g.instance_id, compute_ged(query, g, costs).cost) for g in others),
                         key=lambda x: (x[1], x[0]))
    classes = {g.instance_id: g.class_label for g in corpus.graphs}
    for cid, _ in ranking:
        if classes[cid] != query.class_label:
            return classes[cid]
    raise EmptyPoolError(f"no candidate outside class {query.class_label!r}")


@dataclass
class ExperimentConfig:
    tier: Tier = Tier.STRUCTURAL
    engine: Engine | None = None
    encoder: dict = field(default_factory=dict)
    ks: tuple[int, ...] = DEFAULT_KS
    seed: int = 0
    out: str | None = None
    # ground truth and explanation GED: "exact", "approximate" or "auto" (exact when under the cap)
    gt_mode: str = "auto"
    exact_cap: int = DEFAULT_EXACT_CAP
    workers: int = 1
    target_mode: str = "none"
    feature_dim: int = 64
    word_vectors: str | None = None
    pair_budget: int | None = None
    epochs: int = 50
    lr: float | None = None
    normalize_targets: bool = False
    pretrain_count: int = 200
    pretrain_corpus: str | None = None
    pretrain_epochs: int = 30
    finetune_epochs: int = 20
    pretrain_lr: float = 1e-3
    finetune_lr: float = 1e-4

    def __post_init__(self):
        self.tier = Tier(self.tier)
        if self.engine is not None:
            self.engine = Engine(self.engine)
        if self.tier is Tier.STRUCTURAL and self.engine is None:
            self.engine = Engine.EXHAUSTIVE_EXACT
        if self.tier is not Tier.STRUCTURAL and self.engine is not None:
            raise ValueError("engine is only meaningful for the structural tier")
        self.ks = tuple(int(k) for k in self.ks)

    @property
    def name(self) -> str:
        return self.tier.value if self.engine is None else f"{self.tier.value}:{self.engine.value}"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys {unknown}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tier"] = self.tier.value
        d["engine"] = self.engine.value if self.engine else None
        d["ks"] = list(self.ks)
        return d


def resolve_gt_mode(cfg: ExperimentConfig, corpus: Corpus) -> GedMode:
    if cfg.gt_mode == "auto":
        biggest = max((len(g.nodes) for g in corpus.graphs), default=0)
        return GedMode.EXACT if biggest <= cfg.exact_cap else GedMode.APPROXIMATE
    return GedMode(cfg.gt_mode)


def feature_provider(cfg: ExperimentConfig):
    from .embed import HashFeatureProvider, WordVectorProvider

    if cfg.word_vectors:
        return WordVectorProvider.from_file(cfg.word_vectors, HashFeatureProvider(cfg.feature_dim, cfg.seed))
    return HashFeatureProvider(cfg.feature_dim, cfg.seed)


def encoder_config(cfg: ExperimentConfig, fp):
    from .embed import EncoderConfig

    params = {"seed": cfg.seed, **cfg.encoder, "input_dim": fp.dimension}
    return EncoderConfig(**params)


def train_engine(cfg: ExperimentConfig, corpus: Corpus, fp=None):
    """Train the embedding model a structural engine needs."""
    from .embed import train_inductive, train_transductive

    fp = fp or feature_provider(cfg)
    ecfg = encoder_config(cfg, fp)
    if cfg.engine is Engine.TRANSDUCTIVE:
        return train_transductive(corpus.graphs, ecfg, fp, corpus.taxonomies, pair_budget=cfg.pair_budget,
                                  epochs=cfg.epochs, lr=cfg.lr, normalize_targets=cfg.normalize_targets)
    if cfg.pretrain_corpus:
        pre = ingest(cfg.pretrain_corpus).graphs
    else:
        pre = synthetic_corpus(cfg.seed + 1000, cfg.pretrain_count, taxonomy=corpus.taxonomies.concepts,
                               id_prefix="pre").graphs
        pre = [g for g in pre if all(r in corpus.taxonomies.roles for r in g.roles())] or pre
    regime = "inductive_vgae" if cfg.engine is Engine.INDUCTIVE_VGAE else "inductive_gfa"
    return train_inductive(pre, corpus.graphs, regime, ecfg, fp, eval_ids=set(corpus.ids),
                           pretrain_epochs=cfg.pretrain_epochs, finetune_epochs=cfg.finetune_epochs,
                           pretrain_lr=cfg.pretrain_lr, finetune_lr=cfg.finetune_lr)


class Retriever:
    """Ranks the eligible candidates of a query under one tier/engine."""

    def __init__(self, cfg: ExperimentConfig, corpus: Corpus, model=None):
        self.cfg = cfg
        self.corpus = corpus
        self.model = model
        self._index = None
        if cfg.tier is Tier.ATOMIC:
            self._views = {v.instance_id: v for v in corpus.atomic_views()}
        elif cfg.tier is Tier.RELATIONAL:
            self._views = {v.instance_id: v for v in corpus.relational_views()}
        elif cfg.engine in (Engine.TRANSDUCTIVE, Engine.INDUCTIVE_VGAE, Engine.INDUCTIVE_GFA):
            from .embed import build_index

            self.fp = feature_provider(cfg)
            if self.model is None:
                self.model = train_engine(cfg, corpus, self.fp)
            self._index = build_index(corpus.graphs, self.model, self.fp)

    def rank(self, query: SceneGraph, candidates: Sequence[str]) -> list[tuple[str, float]]:
        """``(id, score)`` best first; the score is a distance except for embeddings (similarity)."""
        allowed = set(candidates)
        cls = self.cfg
        if cls.tier in (Tier.ATOMIC, Tier.RELATIONAL):
            q = self._views[query.instance_id]
            pool = [self._views[c] for c in candidates]
            fn = retrieve_atomic if cls.tier is Tier.ATOMIC else retrieve_relational
            arg = self.corpus.taxonomies.concepts if cls.tier is Tier.ATOMIC else self.corpus.taxonomies
            return fn(q, pool, arg)
        if self._index is None:
            mode = GedMode.EXACT if cls.engine is Engine.EXHAUSTIVE_EXACT else GedMode.APPROXIMATE
            mat = self.corpus.ged_matrix(mode, cls.exact_cap, cls.workers)
            qi = self.corpus.ids.index(query.instance_id)
            pos = {gid: i for i, gid in enumerate(self.corpus.ids)}
            return sorted(((c, float(mat[qi, pos[c]])) for c in candidates), key=lambda x: (x[1], x[0]))
        from .embed import retrieve_embedding

        qv = self._index.vector(query.instance_id)
        ranked = retrieve_embedding(qv, self._index, query.class_label, exclude_id=query.instance_id)
        return [(c, s) for c, s in ranked if c in allowed]


@dataclass
class Explanation:
    tier: str
    query: str
    query_class: str
    counterfactual: str
    target_class: str
    cost: float
    node_edits: int
    edge_edits: int
    ops: list[dict]
    result: GedResult = field(repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "tier": self.tier, "query": self.query, "query_class": self.query_class,
            "counterfactual": self.counterfactual, "target_class": self.target_class,
            "cost": self.cost, "node_edits": self.node_edits, "edge_edits": self.edge_edits,
            "ops": self.ops,
        }


@dataclass
class ExperimentResult:
    name: str
    report: MetricsReport
    explanations: list[Explanation]
    rankings: list[RankingPair]


def candidate_ids(query: SceneGraph, corpus: Corpus, cfg: ExperimentConfig) -> list[str]:
    if cfg.target_mode == "labeled":
        target = select_target_class(query, corpus, "labeled")
        return [g.instance_id for g in corpus.graphs if g.class_label == target]
    return [g.instance_id for g in corpus.graphs if g.class_label != query.class_label]


def explain(query: SceneGraph, counterfactual: SceneGraph, corpus: Corpus, mode: GedMode,
            tier: str, cap: int = DEFAULT_EXACT_CAP) -> Explanation:
    """Price the single final GED between a query and its retrieved counterfactual."""
    res = compute_ged(query, counterfactual, GedCosts(corpus.taxonomies), mode, cap)
    return Explanation(tier, query.instance_id, query.class_label, counterfactual.instance_id,
                       counterfactual.class_label, res.cost, res.script.node_edit_count,
                       res.script.edge_edit_count, [op.to_dict() for op in res.script.ops], res)


def run_experiment(cfg: ExperimentConfig, corpus: Corpus, model=None) -> ExperimentResult:
    """Retrieve for every query, explain its top-1 and score rankings against GED ground truth."""
    gt_mode = resolve_gt_mode(cfg, corpus)
    gt = corpus.ged_matrix(gt_mode, cfg.exact_cap, cfg.workers)
    pos = {gid: i for i, gid in enumerate(corpus.ids)}
    retriever = Retriever(cfg, corpus, model)
    pairs, explanations = [], []
    for query in corpus.graphs:
        cands = candidate_ids(query, corpus, cfg)
        if not cands:
            log.warning("query %s has no eligible candidates; skipped", query.instance_id)
            continue
        ranked = retriever.rank(query, cands)
        if cfg.target_mode == "unlabeled":
            target = select_target_class(query, corpus, "unlabeled", ranked)
            ranked = [(c, s) for c, s in ranked if corpus.graph(c).class_label == target]
            cands = [c for c in cands if corpus.graph(c).class_label == target]
        lookup = {c: float(gt[pos[query.instance_id], pos[c]]) for c in cands}
        pairs.append(RankingPair.from_costs([c for c, _ in ranked], lookup))
        top = corpus.graph(ranked[0][0])
        explanations.append(explain(query, top, corpus, gt_mode, cfg.name, cfg.exact_cap))
    report = summarize(pairs, [e.result for e in explanations], cfg.ks)
    return ExperimentResult(cfg.name, report, explanations, pairs)


def emit_reports(results: Sequence[ExperimentResult], out_dir: str | Path,
                 formats: Sequence[str] = ("csv", "json", "dot"), corpus: Corpus | None = None) -> list[Path]:
    """Write metrics CSV, comparison table, explanation JSON and DOT files."""
    if not results:
        raise ValueError("no results to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    reports = {r.name: r.report for r in results}
    if "csv" in formats:
        p = out / "metrics.csv"
        p.write_text(metrics_csv(reports), encoding="utf-8")
        written.append(p)
        if len(reports) >= 2:
            table_csv, table_txt = compare_tiers(reports)
            (out / "comparison.csv").write_text(table_csv, encoding="utf-8")
            (out / "comparison.txt").write_text(table_txt, encoding="utf-8")
            written += [out / "comparison.csv", out / "comparison.txt"]
    records = [e.to_dict() for r in results for e in r.explanations]
    if "json" in formats and records:
        p = out / "explanations.json"
        p.write_text(json.dumps(records, indent=1, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
        written.append(p)
    if "dot" in formats and corpus is not None:
        for r in results:
            for e in r.explanations:
                safe = r.name.replace(":", "_")
                p = out / "dot" / f"{safe}__{e.query}.dot"
                p.parent.mkdir(exist_ok=True)
                dot = script_to_dot(corpus.graph(e.query), corpus.graph(e.counterfactual), e.result.script,
                                    f"{e.query}->{e.counterfactual}")
                p.write_text(dot, encoding="utf-8")
                written.append(p)
    return written


def loglog_slope(sizes: Sequence[float], times: Sequence[float]) -> float:
    return float(np.polyfit(np.log(sizes), np.log(times), 1)[0])


@dataclass
class BenchRow:
    n: int
    transductive_targets_s: float
    inductive_epoch_s: float


def bench_scaling(sizes: Sequence[int], seed: int = 0, size_range=(3, 6), repeats: int = 2,
                  regimes: Sequence[str] = ("transductive", "inductive"),
                  hidden_dim: int = 32) -> tuple[list[BenchRow], dict[str, float]]:
    """Time all-pairs GED supervision vs one inductive epoch over growing corpora.

    Each timing is the best of ``repeats`` runs. Slopes are least-squares
    fits in log-log space and are only reported for two or more sizes.
    """
    from .embed import EmbeddingModel, EncoderConfig, HashFeatureProvider, Regime
    from .embed.train import run_inductive_epochs

    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    rows = []
    fp = HashFeatureProvider(16, seed)
    cfg = EncoderConfig(hidden_dim=hidden_dim, latent_dim=16, input_dim=fp.dimension, seed=seed)
    # warm-up so lazy library initialisation does not land in the first timing
    warm = synthetic_corpus(seed, 4, size_range)
    run_inductive_epochs(EmbeddingModel(cfg, Regime.INDUCTIVE_VGAE), warm.graphs, fp, epochs=1, lr=1e-3)
    pairwise_ged_matrix(warm.graphs, warm.taxonomies, GedMode.APPROXIMATE)
    for n in sizes:
        corpus = synthetic_corpus(seed, n, size_range)
        corpus.taxonomies.concepts.precompute()
        corpus.taxonomies.roles.precompute()
        t_trans = t_ind = float("nan")
        if "transductive" in regimes:
            t_trans = math.inf
            for _ in range(repeats):
                t0 = time.perf_counter()
                pairwise_ged_matrix(corpus.graphs, corpus.taxonomies, GedMode.APPROXIMATE)
                t_trans = min(t_trans, time.perf_counter() - t0)
        if "inductive" in regimes:
            t_ind = math.inf
            for _ in range(repeats):
                model = EmbeddingModel(cfg, Regime.INDUCTIVE_VGAE)
                t0 = time.perf_counter()
                run_inductive_epochs(model, corpus.graphs, fp, epochs=1, lr=1e-3, seed=seed)
                t_ind = min(t_ind, time.perf_counter() - t0)
        rows.append(BenchRow(n, t_trans, t_ind))
    slopes = {}
    if len(rows) >= 2:
        ns = [r.n for r in rows]
        if "transductive" in regimes:
            slopes["transductive"] = loglog_slope(ns, [r.transductive_targets_s for r in rows])
        if "inductive" in regimes:
            slopes["inductive"] = loglog_slope(ns, [r.inductive_epoch_s for r in rows])
    return rows, slopes


def bench_csv(rows: Sequence[BenchRow], slopes: dict[str, float]) -> str:
    lines = ["n,transductive_targets_s,inductive_epoch_s"]
    lines += [f"{r.n},{r.transductive_targets_s:.6f},{r.inductive_epoch_s:.6f}" for r in rows]
    for k in sorted(slopes):
        lines.append(f"# slope_{k},{slopes[k]:.4f}")
    return "\n".join(lines) + "\n"
