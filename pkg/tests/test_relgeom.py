import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from latent_atlas import relgeom as rg
from latent_atlas.errors import (
    DegenerateFeature,
    DegenerateInput,
    InsufficientSamples,
    ShapeError,
    SingularSystem,
    ZeroVector,
)


def rotation(rng, k):
    q, r = np.linalg.qr(rng.normal(size=(k, k)))
    return q * np.sign(np.diag(r))


def test_zscore_two_point_column():
    Z = np.array([[0.0, 5.0], [2.0, 7.0]])
    np.testing.assert_array_equal(rg.zscore_features(Z), [[-1.0, -1.0], [1.0, 1.0]])


def test_constant_feature_is_rejected():
    Z = np.column_stack([np.arange(5.0), np.full(5, 3.0)])
    with pytest.raises(DegenerateFeature) as info:
        rg.zscore_features(Z)
    assert info.value.column == 1


def test_zero_latent_row_is_rejected():
    with pytest.raises(ZeroVector):
        rg.cosine_to(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([[1.0, 1.0]]))


def test_anchor_set_validation():
    with pytest.raises(ShapeError):
        rg.AnchorSet([1, 1, 2])
    with pytest.raises(IndexError):
        rg.relative_embed(np.random.default_rng(0).normal(size=(5, 2)), [0, 7])
    a = rg.select_anchors(100, 10, seed=3)
    assert a == rg.select_anchors(100, 10, seed=3)
    assert a.m == 10 and np.all(np.diff(a.indices) > 0)


def test_raw_cosines_invariant_to_rotation_and_scale():
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(60, 5))
    anchors = rg.select_anchors(60, 8, 0)
    R1 = rg.relative_embed(Z, anchors, standardize=False).R
    R2 = rg.relative_embed(3.7 * Z @ rotation(rng, 5), anchors, standardize=False).R
    assert np.max(np.abs(R1 - R2)) < 1e-10


def test_standardized_embedding_invariant_to_feature_affine_maps():
    rng = np.random.default_rng(1)
    Z = rng.normal(size=(60, 4))
    anchors = rg.select_anchors(60, 8, 1)
    Z2 = Z * np.array([2.0, 0.1, 5.0, 1.3]) + np.array([10.0, -3.0, 0.5, 7.0])
    R1 = rg.relative_embed(Z, anchors).R
    R2 = rg.relative_embed(Z2, anchors).R
    assert np.max(np.abs(R1 - R2)) < 1e-10


def test_self_alignment_is_perfect():
    rng = np.random.default_rng(2)
    R = rg.relative_embed(rng.normal(size=(50, 6)), rg.select_anchors(50, 10, 0))
    rep = rg.align(R, R, model_a="a", model_b="a", seed_a=0, seed_b=0)
    assert rep.cosine == pytest.approx(1.0, abs=1e-12)
    assert rep.t1 == 1.0 and rep.rank == pytest.approx(1.0)


def test_pairs_must_share_anchors():
    rng = np.random.default_rng(3)
    Z = rng.normal(size=(30, 3))
    with pytest.raises(ShapeError):
        rg.alpha_cosine(rg.relative_embed(Z, [0, 1, 2]), rg.relative_embed(Z, [0, 1, 3]))
    with pytest.raises(ShapeError):
        rg.alpha_cosine(np.ones((3, 2)), np.ones((4, 2)))
    with pytest.raises(ShapeError):
        rg.alpha_rank(np.ones((3, 1)), np.ones((3, 1)))


def test_rank_alignment_examples():
    a = np.array([[0.9, 0.5, 0.1]])
    assert rg.alpha_rank(a, np.array([[0.8, 0.6, 0.2]])) == pytest.approx(1.0)
    assert rg.alpha_rank(a, np.array([[0.1, 0.5, 0.9]])) == pytest.approx(-1.0)


def test_top1_ties_go_to_first_column():
    R1 = np.array([[0.5, 0.5, 0.1]])
    assert rg.alpha_t1(R1, np.array([[0.9, 0.2, 0.1]])) == 1.0
    assert rg.alpha_t1(R1, np.array([[0.2, 0.9, 0.1]])) == 0.0


def test_top1_of_independent_embeddings_is_chance():
    rng = np.random.default_rng(4)
    m = 8
    R1, R2 = rng.uniform(-1, 1, size=(2, 20000, m))
    assert abs(rg.alpha_t1(R1, R2) - 1.0 / m) < 0.01


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (12, 4), elements=st.floats(-1, 1)), arrays(np.float64, (12, 4), elements=st.floats(-1, 1)))
def test_scores_are_bounded_and_symmetric(R1, R2):
    R1 = R1 + 1e-3 * np.arange(1, 5)  # keep rows away from zero norm
    R2 = R2 + 1e-3 * np.arange(1, 5)
    for f in (rg.alpha_cosine, rg.alpha_rank):
        v = f(R1, R2)
        assert -1.0 <= v <= 1.0
        assert v == pytest.approx(f(R2, R1), abs=1e-12)
    assert 0.0 <= rg.alpha_t1(R1, R2) <= 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_embedding_entries_are_cosines(seed):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(20, 3))
    R = rg.relative_embed(Z, rg.select_anchors(20, 5, seed)).R
    assert R.shape == (20, 5)
    assert np.all(np.abs(R) <= 1.0)
    # an anchor is maximally similar to itself
    idx = rg.select_anchors(20, 5, seed).indices
    np.testing.assert_allclose(R[idx, np.arange(5)], 1.0, atol=1e-12)


def test_baselines_are_invariant_to_orthogonal_maps():
    rng = np.random.default_rng(5)
    Z = rng.normal(size=(80, 4))
    Zr = Z @ rotation(rng, 4) * 2.5 + 1.0
    assert rg.baseline_cka(Z, Zr) == pytest.approx(1.0, abs=1e-10)
    assert rg.baseline_rsa(Z, Zr) == pytest.approx(1.0, abs=1e-10)
    assert rg.baseline_procrustes(Z, Zr) == pytest.approx(1.0, abs=1e-10)


def test_baselines_handle_different_widths():
    rng = np.random.default_rng(6)
    Z = rng.normal(size=(50, 3))
    embedded = np.hstack([Z @ rotation(rng, 3), np.zeros((50, 2))])
    assert rg.baseline_procrustes(Z, embedded) == pytest.approx(1.0, abs=1e-10)
    assert rg.baseline_cka(Z, embedded) == pytest.approx(1.0, abs=1e-10)


def test_cka_of_independent_noise_is_small():
    rng = np.random.default_rng(7)
    assert rg.baseline_cka(rng.normal(size=(2000, 5)), rng.normal(size=(2000, 5))) < 0.1


def test_baseline_degenerate_inputs():
    Z = np.random.default_rng(8).normal(size=(10, 2))
    with pytest.raises(DegenerateInput):
        rg.baseline_cka(Z, np.ones((10, 2)))
    with pytest.raises(DegenerateInput):
        rg.baseline_procrustes(np.ones((10, 2)), Z)
    with pytest.raises(ShapeError):
        rg.baseline_rsa(Z[:2], Z[:2])
    with pytest.raises(ShapeError):
        rg.baseline_cka(Z, Z[:5])


def test_ablation_with_every_sample_as_anchor_has_zero_spread():
    rng = np.random.default_rng(9)
    Z1, Z2 = rng.normal(size=(2, 40, 3))
    rows = rg.anchor_ablation(Z1, Z2, K_list=(40,), repeats=5)
    assert rows[0].std == pytest.approx(0.0, abs=1e-14)


def test_ablation_of_identical_spaces_is_one():
    Z = np.random.default_rng(10).normal(size=(50, 4))
    for row in rg.anchor_ablation(Z, Z, K_list=(1, 4, 16), repeats=4):
        assert row.mean == pytest.approx(1.0, abs=1e-12)
        assert row.values.shape == (4,)


def test_ablation_and_baseline_sample_limits():
    Z = np.random.default_rng(11).normal(size=(20, 3))
    with pytest.raises(InsufficientSamples):
        rg.anchor_ablation(Z, Z, K_list=(21,))
    with pytest.raises(InsufficientSamples):
        rg.random_baseline(Z, Z, K=11)


def test_random_baseline_anchor_sets_are_disjoint():
    # identical spaces: disjoint anchors give no systematic agreement
    Z = np.random.default_rng(12).normal(size=(400, 6))
    res = rg.random_baseline(Z, Z, K=40, repeats=20)
    assert abs(res.mean) < 0.05
    assert res.values.shape == (20,)


def test_probe_recovers_identity_map():
    X = np.random.default_rng(13).normal(size=(200, 3))
    tr, te = rg.probe_split(200, seed=0)
    res = rg.probe_ridge(X, X, 0.0, tr, te)
    np.testing.assert_allclose(res.r2, 1.0, atol=1e-12)


def test_probe_on_independent_latents_is_near_zero():
    rng = np.random.default_rng(14)
    tr, te = rg.probe_split(2000, seed=1)
    res = rg.probe_ridge(rng.normal(size=(2000, 4)), rng.normal(size=(2000, 2)), 1e-3, tr, te)
    assert res.mean_r2 <= 0.1


def test_probe_large_lambda_predicts_the_mean():
    rng = np.random.default_rng(15)
    Z = rng.normal(size=(300, 3))
    X = Z @ rng.normal(size=(3, 2))
    tr, te = rg.probe_split(300, seed=2)
    res = rg.probe_ridge(Z, X, 1e12, tr, te)
    pred = Z[te] @ res.weights + res.intercept
    np.testing.assert_allclose(pred, np.broadcast_to(X[tr].mean(axis=0), pred.shape), atol=1e-8)


def test_probe_singular_and_shape_errors():
    Z = np.column_stack([np.arange(10.0), np.arange(10.0)])
    tr, te = rg.probe_split(10, seed=0)
    with pytest.raises(SingularSystem):
        rg.probe_ridge(Z, np.arange(10.0), 0.0, tr, te)
    with pytest.raises(ShapeError):
        rg.probe_ridge(Z, np.arange(9.0), 1.0, tr, te)


def test_probe_split_partitions_rows():
    tr, te = rg.probe_split(101, 0.8, seed=4)
    assert len(tr) == 81 and len(te) == 20
    assert np.array_equal(np.sort(np.concatenate([tr, te])), np.arange(101))


def test_pca_of_a_line_has_one_component():
    t = np.linspace(-1, 1, 100)
    noise = 1e-4 * np.random.default_rng(16).normal(size=(100, 3))
    res = rg.pca_project(np.outer(t, [1.0, 2.0, -0.5]) + noise)
    assert res.explained_variance_ratio[0] > 0.999


def test_pca_of_isotropic_cloud_is_balanced():
    Z = np.random.default_rng(17).normal(size=(20000, 3))
    res = rg.pca_project(Z, 3)
    np.testing.assert_allclose(res.explained_variance_ratio, 1 / 3, atol=0.02)


def test_pca_of_planar_data_preserves_distances():
    rng = np.random.default_rng(18)
    Z = rng.normal(size=(30, 2)) @ rng.normal(size=(2, 5))
    res = rg.pca_project(Z, 2)
    d_in = np.linalg.norm(Z[:, None] - Z[None], axis=-1)
    d_out = np.linalg.norm(res.coords[:, None] - res.coords[None], axis=-1)
    np.testing.assert_allclose(d_in, d_out, atol=1e-10)
    lead = np.argmax(np.abs(res.components), axis=1)
    assert np.all(res.components[np.arange(2), lead] > 0)


def test_pca_argument_checks():
    with pytest.raises(ShapeError):
        rg.pca_project(np.ones((10, 3)), 4)
    with pytest.raises(ShapeError):
        rg.pca_project(np.ones((2, 3)), 2)


def test_temporal_tracks_of_a_circle_are_periodic():
    # one full turn of a limit cycle, the sample set being the same circle
    theta = np.linspace(0, 2 * np.pi, 201)
    circle = np.column_stack([np.cos(theta), np.sin(theta)])
    tracks = rg.temporal_tracks(circle[:-1], circle, [0, 50, 100])
    np.testing.assert_allclose(tracks[0], tracks[-1], atol=1e-12)
    assert rg.track_similarity(tracks, tracks) == pytest.approx(1.0)


def test_temporal_tracks_require_three_anchors():
    with pytest.raises(ShapeError):
        rg.temporal_tracks(np.eye(4), np.eye(4), [0, 1])


def _latents(Z, label, seed):
    from latent_atlas.forecasters import LatentMatrix

    return LatentMatrix(Z, np.zeros((len(Z), 2), int), f"{label}#s{seed}", label)


def test_heatmap_averages_cross_instance_pairs():
    rng = np.random.default_rng(19)
    base = rng.normal(size=(40, 3))
    lat = [_latents(base, "A", 0), _latents(base + 0.3 * rng.normal(size=base.shape), "A", 1),
           _latents(rng.normal(size=(40, 3)), "B", 0)]
    anchors = rg.select_anchors(40, 10, 0)
    reps = rg.alignment_grid(lat, anchors, seeds=[0, 1, 0])
    assert len(reps) == 6
    hm = rg.heatmap(reps, ["A", "B"])
    M = np.array(hm["matrix"])
    cross = [r.cosine for r in reps if r.model_a == r.model_b == "A" and r.id_a != r.id_b]
    assert M[0, 0] == pytest.approx(cross[0])
    assert M[1, 1] == pytest.approx(1.0)  # single instance falls back to the self-pair
    ab = [r.cosine for r in reps if {r.model_a, r.model_b} == {"A", "B"}]
    assert M[0, 1] == M[1, 0] == pytest.approx(np.mean(ab))
