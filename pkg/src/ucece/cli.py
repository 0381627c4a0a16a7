"""Command-line entry point (``ucece``)."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import pipeline as pl
from .ged import GedCosts, GedMode, compute_ged, script_to_dot

DEFAULT_TIERS = ({"tier": "atomic"}, {"tier": "relational"}, {"tier": "structural", "engine": "exhaustive_exact"})


class State:
    def __init__(self, seed: int | None, config: dict, out: str | None):
        self.seed = seed
        self.config = config
        self.out = out

    def experiment(self, **overrides) -> pl.ExperimentConfig:
        base = {k: v for k, v in self.config.items() if k != "experiments"}
        base.update({k: v for k, v in overrides.items() if v is not None})
        if self.seed is not None:
            base["seed"] = self.seed
        if self.out is not None:
            base["out"] = self.out
        return pl.ExperimentConfig.from_dict(base)

    def experiments(self) -> list[pl.ExperimentConfig]:
        return [self.experiment(**e) for e in self.config.get("experiments", DEFAULT_TIERS)]

    def out_dir(self) -> Path:
        if not self.out:
            raise click.UsageError("--out is required for this command")
        p = Path(self.out)
        p.mkdir(parents=True, exist_ok=True)
        return p


def _message(exc: Exception) -> str:
    # KeyError.__str__ wraps its argument in quotes
    return str(exc.args[0]) if isinstance(exc, KeyError) and exc.args else str(exc)


def _load_corpus(path: str) -> pl.Corpus:
    try:
        return pl.ingest(path)
    except (ValueError, KeyError) as exc:
        raise click.ClickException(_message(exc)) from None


@click.group()
@click.option("--seed", type=int, default=None, help="Seed for every random choice.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file with ExperimentConfig keys (plus an optional 'experiments' list).")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, seed, config_path, out, verbose):
    """Conceptual counterfactual retrieval over scene graphs."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    config = {}
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            config = json.load(fh)
        if not isinstance(config, dict):
            raise click.ClickException(f"{config_path}: config must be a JSON object")
    ctx.obj = State(seed, config, out)


@main.command()
@click.argument("corpus", type=click.Path(exists=True, file_okay=False))
@click.pass_obj
def ingest(state: State, corpus):
    """Validate a corpus directory; with --out, write it back normalised."""
    c = _load_corpus(corpus)
    classes = sorted({g.class_label for g in c.graphs})
    click.echo(f"{len(c)} graphs, {len(classes)} classes, {len(c.taxonomies.concepts)} concepts, "
               f"{len(c.taxonomies.roles)} roles, {len(c.confusion)} confusion entries")
    if state.out:
        pl.write_corpus(c, state.out_dir())


@main.command()
@click.option("--count", type=int, default=40, show_default=True)
@click.option("--min-size", type=int, default=3, show_default=True)
@click.option("--max-size", type=int, default=6, show_default=True)
@click.option("--edge-density", type=float, default=0.3, show_default=True)
@click.pass_obj
def gen(state: State, count, min_size, max_size, edge_density):
    """Write a synthetic corpus (graphs, taxonomy, roles) to --out."""
    c = pl.synthetic_corpus(state.seed or 0, count, (min_size, max_size), edge_density=edge_density)
    pl.write_corpus(c, state.out_dir())
    click.echo(f"wrote {len(c)} graphs to {state.out}")


@main.command()
@click.argument("corpus", type=click.Path(exists=True, file_okay=False))
@click.argument("source")
@click.argument("target")
@click.option("--mode", type=click.Choice(["exact", "approximate"]), default="exact", show_default=True)
@click.pass_obj
def ged(state: State, corpus, source, target, mode):
    """Graph edit distance and edit script between two corpus graphs."""
    c = _load_corpus(corpus)
    try:
        g1, g2 = c.graph(source), c.graph(target)
        res = compute_ged(g1, g2, GedCosts(c.taxonomies), GedMode(mode))
    except (KeyError, ValueError) as exc:
        raise click.ClickException(_message(exc)) from None
    click.echo(f"GED({source}, {target}) = {res.cost!r} [{res.mode.value}]")
    for op in res.script.ops:
        click.echo("  " + op.describe())
    if state.out:
        out = state.out_dir()
        (out / f"{source}__{target}.jsonl").write_text(res.script.to_jsonl(), encoding="utf-8")
        (out / f"{source}__{target}.dot").write_text(script_to_dot(g1, g2, res.script, f"{source}->{target}"),
                                                     encoding="utf-8")


@main.command()
@click.argument("corpus", type=click.Path(exists=True, file_okay=False))
@click.option("--engine", type=click.Choice(["transductive", "inductive_vgae", "inductive_gfa"]), default=None)
@click.option("--arch", type=click.Choice(["GCN", "GAT", "GIN"]), default=None)
@click.pass_obj
def train(state: State, corpus, engine, arch):
    """Train an embedding engine and save ``model.npz`` under --out."""
    cfg = state.experiment(tier="structural", engine=engine or state.config.get("engine") or "transductive")
    if arch:
        cfg.encoder = {**cfg.encoder, "architecture": arch}
    if cfg.engine in (pl.Engine.EXHAUSTIVE_EXACT, pl.Engine.EXHAUSTIVE_APPROX):
        raise click.UsageError("exhaustive engines need no training")
    c = _load_corpus(corpus)
    model = pl.train_engine(cfg, c)
    path = state.out_dir() / "model.npz"
    model.save(path)
    trace = model.loss_trace
    click.echo(f"saved {path}; loss {trace[0]:.4g} -> {trace[-1]:.4g} over {len(trace)} epochs")


def _retrieval(state: State, corpus, query, tier, engine, model_path):
    cfg = state.experiment(tier=tier, engine=engine)
    c = _load_corpus(corpus)
    model = None
    if model_path:
        from .embed import EmbeddingModel

        model = EmbeddingModel.load(model_path)
    try:
        q = c.graph(query)
        cands = pl.candidate_ids(q, c, cfg)
        ranked = pl.Retriever(cfg, c, model).rank(q, cands)
    except (KeyError, ValueError) as exc:
        raise click.ClickException(_message(exc)) from None
    return cfg, c, q, ranked


_tier_opts = [
    click.argument("corpus", type=click.Path(exists=True, file_okay=False)),
    click.argument("query"),
    click.option("--tier", type=click.Choice([t.value for t in pl.Tier]), default=None),
    click.option("--engine", type=click.Choice([e.value for e in pl.Engine]), default=None),
    click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), default=None,
                 help="Checkpoint from `train` for embedding engines."),
]


def _with_tier_opts(fn):
    for deco in reversed(_tier_opts):
        fn = deco(fn)
    return fn


@main.command()
@_with_tier_opts
@click.option("--top", type=int, default=5, show_default=True)
@click.pass_obj
def retrieve(state: State, corpus, query, tier, engine, model_path, top):
    """Rank counterfactual candidates for one query."""
    _, _, _, ranked = _retrieval(state, corpus, query, tier, engine, model_path)
    for rank, (cid, score) in enumerate(ranked[:top], start=1):
        click.echo(f"{rank}\t{cid}\t{score!r}")


@main.command()
@_with_tier_opts
@click.pass_obj
def explain(state: State, corpus, query, tier, engine, model_path):
    """Retrieve the top-1 counterfactual and print its priced edit script."""
    cfg, c, q, ranked = _retrieval(state, corpus, query, tier, engine, model_path)
    e = pl.explain(q, c.graph(ranked[0][0]), c, pl.resolve_gt_mode(cfg, c), cfg.name, cfg.exact_cap)
    click.echo(f"{e.query} ({e.query_class}) -> {e.counterfactual} ({e.target_class}): cost {e.cost!r}")
    for op in e.result.script.ops:
        click.echo("  " + op.describe())
    if state.out:
        pl.emit_reports([pl.ExperimentResult(cfg.name, pl.MetricsReport(), [e], [])], state.out_dir(),
                        formats=("json", "dot"), corpus=c)


@main.command()
@click.argument("corpus", type=click.Path(exists=True, file_okay=False))
@click.pass_obj
def evaluate(state: State, corpus):
    """Run every configured experiment and write metrics, explanations and DOT files."""
    c = _load_corpus(corpus)
    results = [pl.run_experiment(cfg, c) for cfg in state.experiments()]
    pl.emit_reports(results, state.out_dir(), corpus=c)
    for r in results:
        p1 = r.report.precision.get(1, float("nan"))
        click.echo(f"{r.name}: P@1={p1:.3f} GED={r.report.mean_ged:.3f} queries={r.report.queries}")


@main.command()
@click.option("--sizes", default="50,100,200", show_default=True, help="Comma-separated corpus sizes.")
@click.option("--repeats", type=int, default=2, show_default=True)
@click.pass_obj
def bench(state: State, sizes, repeats):
    """Time transductive supervision vs inductive epochs over corpus sizes."""
    try:
        ns = [int(s) for s in sizes.split(",") if s.strip()]
        rows, slopes = pl.bench_scaling(ns, seed=state.seed or 0, repeats=repeats)
    except ValueError as exc:
        raise click.ClickException(_message(exc)) from None
    text = pl.bench_csv(rows, slopes)
    if state.out:
        (state.out_dir() / "bench.csv").write_text(text, encoding="utf-8")
    click.echo(text, nl=False)


if __name__ == "__main__":
    sys.exit(main())
