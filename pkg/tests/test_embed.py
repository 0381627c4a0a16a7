import logging

import numpy as np
import pytest
import torch

from conftest import random_graph
from oracles import central_difference_check, sphere_embedding
from ucece.atomic import EmptyPoolError
from ucece.embed import (
    EmbeddingIndex,
    EmbeddingModel,
    EncoderConfig,
    HashFeatureProvider,
    Regime,
    WordVectorProvider,
    build_index,
    encode,
    feature_mse,
    gfa_loss,
    graph_tensors,
    kl_divergence,
    retrieve_embedding,
    siamese_loss,
    train_inductive,
    train_transductive,
    vgae_losses,
)
from ucece.embed.losses import edge_reconstruction, sample_negative_edges
from ucece.embed.train import sample_pairs
from ucece.ged import GedMode, exact_ged, pairwise_ged_matrix
from ucece.graphs import SceneGraph, generate_synthetic_graphs, is_isomorphic
from ucece.metrics import RankingPair, precision_at_k

ARCHS = ["GCN", "GAT", "GIN"]
FP = HashFeatureProvider(6, seed=1)


def small_config(arch, **kw):
    params = dict(architecture=arch, hidden_dim=8, heads=2, latent_dim=4, input_dim=FP.dimension, seed=3)
    params.update(kw)
    return EncoderConfig(**params)


def small_graphs(scene_tx, count=5, seed=0):
    rng = np.random.default_rng(seed)
    return [random_graph(rng, scene_tx, 2, 4, density=0.4, gid=f"s{i}") for i in range(count)]


# --- features --------------------------------------------------------------------------

def test_hash_features_are_stable_unit_vectors():
    a, b = HashFeatureProvider(16, 0), HashFeatureProvider(16, 0)
    assert np.array_equal(a.lookup("cat"), b.lookup("cat"))
    assert np.linalg.norm(a.lookup("cat")) == pytest.approx(1.0)
    assert not np.array_equal(a.lookup("cat"), HashFeatureProvider(16, 1).lookup("cat"))


def test_word_vectors(tmp_path):
    p = tmp_path / "vec.txt"
    p.write_text("traffic 1 0 0\nlight 0 1 0\ncat 0 0 1\n")
    wv = WordVectorProvider.from_file(p, HashFeatureProvider(3))
    assert wv.dimension == 3
    assert np.array_equal(wv.lookup("cat"), [0, 0, 1])
    assert np.array_equal(wv.lookup("traffic_light"), [0.5, 0.5, 0])
    assert np.array_equal(wv.lookup("zebra"), HashFeatureProvider(3).lookup("zebra"))
    p.write_text("cat 0 x 1\n")
    with pytest.raises(ValueError, match="vec.txt:1"):
        WordVectorProvider.from_file(p)


# --- encoder ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(heads=0)
    with pytest.raises(ValueError):
        EncoderConfig(architecture="GAT", hidden_dim=10, heads=4)
    with pytest.raises(ValueError):
        EncoderConfig(pooling="median")
    assert EncoderConfig().hidden_dim == 2048 and EncoderConfig().layers == 1


def test_single_node_identity_weights():
    m = EmbeddingModel(small_config("GCN", hidden_dim=FP.dimension))
    with torch.no_grad():
        m.encoder.layers[0].weight.copy_(torch.eye(FP.dimension, dtype=torch.float64))
    g = SceneGraph("g", "A", (("a", "cat"),))
    x = FP.lookup("cat")
    assert np.allclose(encode(g, m, FP), np.maximum(x, 0.0), atol=1e-15)


@pytest.mark.parametrize("arch", ARCHS)
@pytest.mark.parametrize("pooling", ["sum", "mean", "max"])
def test_permutation_invariance(arch, pooling, scene_tx):
    m = EmbeddingModel(small_config(arch, pooling=pooling))
    rng = np.random.default_rng(11)
    g = random_graph(rng, scene_tx, 5, 6, density=0.4)
    ref = encode(g, m, FP)
    for _ in range(20):
        assert np.array_equal(encode(g.permuted(rng), m, FP), ref)


def test_gin_separates_non_isomorphic_graphs(scene_tx):
    rng = np.random.default_rng(12)
    for seed in range(5):
        m = EmbeddingModel(small_config("GIN", seed=seed, hidden_dim=16))
        g1 = random_graph(rng, scene_tx, 3, 5)
        g2 = random_graph(rng, scene_tx, 3, 5)
        if not is_isomorphic(g1, g2):
            assert not np.allclose(encode(g1, m, FP), encode(g2, m, FP))


def test_input_dimension_mismatch():
    m = EmbeddingModel(small_config("GCN"))
    with pytest.raises(ValueError, match="dimension"):
        encode(SceneGraph("g", "A", (("a", "cat"),)), m, HashFeatureProvider(5))


def test_empty_graph_encodes_to_zero():
    m = EmbeddingModel(small_config("GAT"))
    assert not encode(SceneGraph("g", "A"), m, FP).any()


@pytest.mark.parametrize("regime", list(Regime))
def test_save_load_round_trip(regime, tmp_path, scene_tx):
    m = EmbeddingModel(small_config("GAT"), regime)
    m.loss_trace = [3.0, 2.5]
    m.save(tmp_path / "m.npz")
    back = EmbeddingModel.load(tmp_path / "m.npz")
    assert back.regime is regime and back.config == m.config and back.loss_trace == m.loss_trace
    for g in small_graphs(scene_tx):
        assert np.array_equal(encode(g, back, FP), encode(g, m, FP))


# --- losses --------------------------------------------------------------------------------

def test_siamese_examples():
    z = torch.zeros(3, dtype=torch.float64)
    assert siamese_loss(z, z, 0.0).item() == 0
    h = torch.tensor([3.0, 0.0], dtype=torch.float64)
    assert siamese_loss(h, torch.zeros(2, dtype=torch.float64), 5.0).item() == pytest.approx(4.0)


def test_kl_examples():
    z = torch.zeros((4, 3), dtype=torch.float64)
    assert kl_divergence(z, z).item() == 0
    rng = np.random.default_rng(0)
    mu = torch.from_numpy(rng.standard_normal((5, 3)))
    logvar = torch.from_numpy(rng.standard_normal((5, 3)))
    assert kl_divergence(mu, logvar).item() >= 0


def test_edge_reconstruction_limit():
    z = torch.tensor([[30.0], [30.0], [-30.0]], dtype=torch.float64)
    pos = np.array([[0, 1]])
    neg = np.array([[0, 2]])
    assert edge_reconstruction(z, pos, neg).item() < 1e-12


def test_feature_mse_offset():
    x = torch.from_numpy(np.random.default_rng(0).standard_normal((4, 3)))
    assert feature_mse(x, x).item() == 0
    assert feature_mse(x + 1, x).item() == pytest.approx(1.0)


def test_negative_sampling():
    rng = np.random.default_rng(0)
    pos = np.array([[0, 1], [1, 2]])
    neg = sample_negative_edges(4, pos, rng)
    assert len(neg) == 2
    linked = {(0, 1), (1, 0), (1, 2), (2, 1)}
    assert all((s, d) not in linked and s != d for s, d in neg)
    assert np.array_equal(neg, sample_negative_edges(4, pos, np.random.default_rng(0)))


def test_losses_are_non_negative(scene_tx):
    for regime in (Regime.INDUCTIVE_VGAE, Regime.INDUCTIVE_GFA):
        m = EmbeddingModel(small_config("GCN"), regime)
        for g in small_graphs(scene_tx):
            recon, kl = vgae_losses(graph_tensors(g, FP), m, np.random.default_rng(0))
            assert recon.item() >= 0 and kl.item() >= 0


def test_regime_mismatch_errors(scene_tx):
    gt = graph_tensors(small_graphs(scene_tx)[0], FP)
    with pytest.raises(ValueError, match="variational"):
        vgae_losses(gt, EmbeddingModel(small_config("GCN")), np.random.default_rng(0))
    with pytest.raises(ValueError, match="feature decoder"):
        gfa_loss(gt, EmbeddingModel(small_config("GCN"), Regime.INDUCTIVE_VGAE), np.random.default_rng(0))


def _loss_closure(model, regime, g1, g2):
    t1, t2 = graph_tensors(g1, FP), graph_tensors(g2, FP)
    if regime is Regime.TRANSDUCTIVE_SIAMESE:
        return lambda: siamese_loss(model.graph_embedding(t1), model.graph_embedding(t2), 3.0)
    if regime is Regime.INDUCTIVE_VGAE:
        return lambda: sum(vgae_losses(t1, model, np.random.default_rng(5)))
    return lambda: gfa_loss(t1, model, np.random.default_rng(5))


@pytest.mark.parametrize("arch", ARCHS)
@pytest.mark.parametrize("regime", list(Regime))
def test_gradients_match_finite_differences(arch, regime, scene_tx):
    graphs = small_graphs(scene_tx, 6, seed=21)
    for k in range(5):
        m = EmbeddingModel(small_config(arch, seed=k, pooling=["sum", "mean", "max"][k % 3]), regime)
        fn = _loss_closure(m, regime, graphs[k], graphs[k + 1])
        err = central_difference_check(fn, list(m.parameters()), max_entries=12, rng=np.random.default_rng(k))
        assert err <= 1e-4, f"{arch}/{regime.value} graph {k}: rel. error {err:.2e}"


# --- training --------------------------------------------------------------------------

def test_pair_sampling():
    pairs = sample_pairs(10, 7, seed=0)
    assert len(pairs) == len(set(pairs)) == 7
    assert all(i < j for i, j in pairs)
    assert pairs == sample_pairs(10, 7, seed=0)


def test_pair_budget_is_clamped(caplog):
    with caplog.at_level(logging.WARNING):
        assert len(sample_pairs(4, 100, seed=0)) == 6
    assert "clamping" in caplog.text


def test_transductive_training_decreases_and_repeats(scene_tx):
    graphs = generate_synthetic_graphs(0, 16, size_range=(2, 4))
    cfg = small_config("GCN", hidden_dim=32)
    fp = FP
    a = train_transductive(graphs, cfg, fp, scene_tx, pair_budget=12, epochs=15)
    b = train_transductive(graphs, cfg, fp, scene_tx, pair_budget=12, epochs=15)
    assert a.loss_trace == b.loss_trace
    assert a.loss_trace[-1] < a.loss_trace[0]
    for k, v in a.state_arrays().items():
        assert np.array_equal(v, b.state_arrays()[k])


def test_identical_graphs_converge_to_zero(scene_tx):
    g = generate_synthetic_graphs(1, 1)[0]
    graphs = [SceneGraph(f"d{i}", "A", g.nodes, g.edges) for i in range(8)]
    m = train_transductive(graphs, small_config("GCN"), FP, scene_tx, epochs=20)
    assert m.loss_trace[-1] < 1e-8


def test_inductive_training(scene_tx):
    pre = generate_synthetic_graphs(5, 40, id_prefix="p")
    cfg = small_config("GCN", hidden_dim=16)
    a = train_inductive(pre, None, "inductive_vgae", cfg, FP, pretrain_epochs=10, pretrain_lr=0.01)
    b = train_inductive(pre, None, "inductive_vgae", cfg, FP, pretrain_epochs=10, pretrain_lr=0.01)
    assert len(a.loss_trace) == 10
    assert a.loss_trace[-1] < a.loss_trace[0]
    assert all(np.array_equal(v, b.state_arrays()[k]) for k, v in a.state_arrays().items())
    gfa = train_inductive(pre, pre[:5], "inductive_gfa", cfg, FP, pretrain_epochs=3, finetune_epochs=2)
    assert len(gfa.loss_trace) == 5


def test_inductive_refuses_eval_overlap():
    pre = generate_synthetic_graphs(5, 4)
    with pytest.raises(ValueError, match="overlaps"):
        train_inductive(pre, None, "inductive_vgae", small_config("GCN"), FP, eval_ids={pre[0].instance_id})
    with pytest.raises(ValueError):
        train_inductive(pre, None, "transductive_siamese", small_config("GCN"), FP)


# --- retrieval -------------------------------------------------------------------------

def test_own_embedding_under_other_class_is_top1():
    rng = np.random.default_rng(0)
    v = rng.standard_normal((4, 5))
    idx = EmbeddingIndex.from_vectors(["a", "b", "c", "self"], ["B", "B", "B", "B"], np.vstack([v[:3], v[0]]))
    ranked = retrieve_embedding(v[0], idx, "A")
    assert ranked[0][1] == pytest.approx(1.0)
    assert [c for c, _ in ranked[:2]] == ["a", "self"]


def test_same_class_only_errors():
    idx = EmbeddingIndex.from_vectors(["a"], ["A"], np.ones((1, 3)))
    with pytest.raises(EmptyPoolError):
        retrieve_embedding(np.ones(3), idx, "A")


def test_zero_norm_vectors_are_excluded(caplog):
    with caplog.at_level(logging.WARNING):
        idx = EmbeddingIndex.from_vectors(["a", "b"], ["B", "B"], np.array([[0.0, 0.0], [1.0, 0.0]]))
    assert idx.ids == ("b",) and "zero-norm" in caplog.text


def test_sphere_oracle_on_six_graphs(scene_tx):
    graphs = [SceneGraph(g.instance_id, "A" if i % 2 else "B", g.nodes, g.edges)
              for i, g in enumerate(generate_synthetic_graphs(4, 6, size_range=(2, 4)))]
    d = pairwise_ged_matrix(graphs, scene_tx, GedMode.EXACT)
    idx = EmbeddingIndex.from_vectors([g.instance_id for g in graphs], [g.class_label for g in graphs],
                                      sphere_embedding(d))
    for i, q in enumerate(graphs):
        ranked = retrieve_embedding(idx.vector(q.instance_id), idx, q.class_label)
        lookup = {g.instance_id: d[i, j] for j, g in enumerate(graphs) if g.class_label != q.class_label}
        assert precision_at_k(RankingPair.from_costs([c for c, _ in ranked], lookup), 1) == 1.0
        assert [lookup[c] for c, _ in ranked] == sorted(lookup.values())


def test_build_index_matches_encode(scene_tx):
    m = EmbeddingModel(small_config("GIN"))
    graphs = small_graphs(scene_tx)
    idx = build_index(graphs, m, FP)
    v = encode(graphs[2], m, FP)
    assert np.allclose(idx.vector(graphs[2].instance_id), v / np.linalg.norm(v))


def test_exact_ged_is_used_as_target_helper(scene_tx):
    from ucece.embed.train import ged_targets

    graphs = small_graphs(scene_tx)
    t = ged_targets(graphs, [(0, 1)], scene_tx, GedMode.EXACT)
    assert t[0] == exact_ged(graphs[0], graphs[1], scene_tx).cost
    tn = ged_targets(graphs, [(0, 1)], scene_tx, GedMode.EXACT, normalize=True)
    assert tn[0] == t[0] / (len(graphs[0].nodes) + len(graphs[1].nodes))
