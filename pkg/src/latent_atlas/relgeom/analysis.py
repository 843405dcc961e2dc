"""Anchor ablation, random-anchor control, temporal tracks, probing and PCA."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import InsufficientSamples, ShapeError, SingularSystem
from .embedding import alpha_cosine, align, cosine_to, feature_stats, relative_embed, zscore_features

ABLATION_K = (1, 2, 3, 4, 5, 6, 8, 16, 32, 64, 128, 512, 800, 999)


@dataclass
class AblationRow:
    K: int
    mean: float
    std: float
    values: np.ndarray = field(repr=False)


def _standardized_pair(Z_model, Z_reference):
    X = zscore_features(Z_model)
    Y = zscore_features(Z_reference)
    if len(X) != len(Y):
        raise ShapeError(f"latent matrices have {len(X)} and {len(Y)} rows")
    return X, Y


def anchor_ablation(Z_model, Z_reference, K_list=ABLATION_K, repeats=30, seed=0):
    """Alignment as a function of the number of shared anchors.

    For each ``K`` and repeat ``r``, ``K`` distinct rows are drawn with
    ``default_rng([seed, K, r])`` and used as anchors in both spaces; the
    score is the mean row cosine of the two relative embeddings.

    Returns
    -------
    list of AblationRow
        Mean and population std over the repeats, per ``K``.
    """
    X, Y = _standardized_pair(Z_model, Z_reference)
    N = len(X)
    if max(K_list) > N:
        raise InsufficientSamples(f"K={max(K_list)} exceeds the {N} available samples")
    if repeats < 1:
        raise ShapeError("repeats must be >= 1")
    rows = []
    for K in K_list:
        values = np.empty(repeats)
        for r in range(repeats):
            idx = np.sort(np.random.default_rng([seed, K, r]).choice(N, size=K, replace=False))
            values[r] = alpha_cosine(cosine_to(X, X[idx]), cosine_to(Y, Y[idx]))
        rows.append(AblationRow(int(K), float(values.mean()), float(values.std()), values))
    return rows


@dataclass
class BaselineResult:
    K: int
    mean: float
    std: float
    values: np.ndarray = field(repr=False)


def random_baseline(Z_model, Z_reference, K=80, repeats=30, seed=0):
    """Alignment when the two spaces use disjoint, independently drawn anchors.

    The two index sets come from one permutation, so they never overlap, and
    they stay in draw order: sorting both would pair anchors that sit at
    similar positions of the sample list.
    """
    X, Y = _standardized_pair(Z_model, Z_reference)
    N = len(X)
    if 2 * K > N:
        raise InsufficientSamples(f"two disjoint sets of K={K} anchors need {2 * K} samples, have {N}")
    values = np.empty(repeats)
    for r in range(repeats):
        perm = np.random.default_rng([seed, K, r, 1]).permutation(N)
        values[r] = alpha_cosine(cosine_to(X, X[perm[:K]]), cosine_to(Y, Y[perm[K:2 * K]]))
    return BaselineResult(int(K), float(values.mean()), float(values.std()), values)


def temporal_tracks(Z_sample, Z_track, anchors3):
    """``(T, 3)`` anchor cosines of a trajectory's latents.

    Feature statistics and the three anchor latents come from the shared
    sample set so every time step lives in the same relative frame.
    """
    anchors3 = np.asarray(anchors3, dtype=np.int64)
    if anchors3.shape != (3,):
        raise ShapeError(f"temporal alignment needs exactly 3 anchors, got {anchors3.shape}")
    stats = feature_stats(Z_sample)
    A = zscore_features(np.asarray(Z_sample)[anchors3], stats)
    return cosine_to(zscore_features(Z_track, stats), A)


def track_similarity(track_a, track_b):
    """Mean pointwise cosine between two ``(T, 3)`` tracks."""
    return alpha_cosine(track_a, track_b)


def temporal_alignment(models, dataset, sample_index, anchors3, traj_id=0, length=300, split="test", L=20, H=50):
    """Relative-coordinate tracks of one test trajectory for several models.

    Parameters
    ----------
    models : sequence
        Checkpoints and/or :data:`~latent_atlas.forecasters.TRUE_SYSTEM`.
    sample_index : ndarray, shape (N, 2)
        Shared sample list; ``anchors3`` indexes its rows.

    Returns
    -------
    dict
        ``forecaster_id -> (length, 3)`` track.
    """
    from ..dynsys import gather_windows
    from ..forecasters import TRUE_SYSTEM, collect_latents, encode

    tracks = {}
    for model in models:
        mL = L if model is TRUE_SYSTEM else model.spec.L
        mH = H if model is TRUE_SYSTEM else model.spec.H
        n_win = dataset.T - mL - mH + 1
        if length > n_win:
            raise ShapeError(f"trajectory supports only {n_win} windows, asked for {length}")
        index = np.stack([np.full(length, traj_id), np.arange(length)], axis=1)
        windows = gather_windows(dataset, index, mL, mH, split)
        lm = collect_latents(model, dataset, sample_index, split, L=mL, H=mH)
        Zt = TRUE_SYSTEM.encode(windows.inputs).data if model is TRUE_SYSTEM else encode(model, windows.inputs)
        tracks[lm.forecaster_id] = temporal_tracks(lm.Z, Zt, anchors3)
    return tracks


@dataclass
class ProbeResult:
    r2: np.ndarray
    mean_r2: float
    weights: np.ndarray = field(repr=False)
    intercept: np.ndarray = field(repr=False)


def probe_ridge(Z, X, lam, train_rows, test_rows):
    """Linear ridge probe from latents to states, scored by test ``R^2``.

    The intercept is left unpenalized by centering on the training rows.
    """
    Z = np.asarray(Z, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if len(Z) != len(X):
        raise ShapeError(f"Z has {len(Z)} rows but X has {len(X)}")
    if lam < 0:
        raise ShapeError(f"lambda must be >= 0, got {lam}")
    Ztr, Xtr = Z[train_rows], X[train_rows]
    zm, xm = Ztr.mean(axis=0), Xtr.mean(axis=0)
    Zc, Xc = Ztr - zm, Xtr - xm
    if lam == 0 and np.linalg.matrix_rank(Zc) < Zc.shape[1]:
        raise SingularSystem("probe design matrix is rank deficient at lambda = 0")
    try:
        W = np.linalg.solve(Zc.T @ Zc + lam * np.eye(Z.shape[1]), Zc.T @ Xc)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"probe normal equations are singular: {exc}") from None
    b = xm - zm @ W
    pred = Z[test_rows] @ W + b
    Xte = X[test_rows]
    ss_res = np.sum((Xte - pred) ** 2, axis=0)
    ss_tot = np.sum((Xte - Xte.mean(axis=0)) ** 2, axis=0)
    r2 = 1.0 - ss_res / np.where(ss_tot > 0, ss_tot, np.nan)
    return ProbeResult(r2, float(np.mean(r2)), W, b)


def probe_split(n, train_fraction=0.8, seed=0):
    """Random train/test row partition for probing."""
    perm = np.random.default_rng([seed, 9]).permutation(n)
    cut = int(round(train_fraction * n))
    return np.sort(perm[:cut]), np.sort(perm[cut:])


def current_states(dataset, sample_index, L, split="test"):
    """Normalized state at the last input step of each sampled window."""
    index = np.asarray(sample_index)
    return dataset.splits[split][index[:, 0], index[:, 1] + L - 1]


@dataclass
class PCAResult:
    coords: np.ndarray
    explained_variance_ratio: np.ndarray
    components: np.ndarray


def pca_project(Z, n_components=2):
    """Centered SVD projection.

    Each component is sign-flipped so that its largest-magnitude loading is
    positive, which makes the output deterministic.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if n_components not in (2, 3):
        raise ShapeError(f"n_components must be 2 or 3, got {n_components}")
    if Z.ndim != 2 or len(Z) <= n_components:
        raise ShapeError(f"need more than {n_components} rows, got shape {Z.shape}")
    Zc = Z - Z.mean(axis=0)
    _, s, Vt = np.linalg.svd(Zc, full_matrices=False)
    V = Vt[:n_components].copy()
    if V.shape[0] < n_components:
        V = np.vstack([V, np.zeros((n_components - V.shape[0], Z.shape[1]))])
        s = np.concatenate([s, np.zeros(n_components - len(s))])
    lead = np.argmax(np.abs(V), axis=1)
    V *= np.where(V[np.arange(n_components), lead] < 0, -1.0, 1.0)[:, None]
    var = s ** 2
    total = var.sum()
    ratio = var[:n_components] / total if total > 0 else np.zeros(n_components)
    return PCAResult(Zc @ V.T, ratio, V)


def alignment_grid(latents, anchors, seeds=None):
    """Pairwise reports for every unordered pair of latent matrices (self-pairs included)."""
    seeds = seeds or [0] * len(latents)
    embeds = [relative_embed(lm.Z, anchors) for lm in latents]
    reports = []
    for i in range(len(latents)):
        for j in range(i, len(latents)):
            a, b = latents[i], latents[j]
            reports.append(align(
                embeds[i], embeds[j], model_a=a.label, model_b=b.label, seed_a=seeds[i], seed_b=seeds[j],
                id_a=a.forecaster_id, id_b=b.forecaster_id,
            ))
    return reports


def heatmap(reports, order, metric="cosine"):
    """Model-level matrix: mean score over all distinct-instance pairs per cell.

    A diagonal cell averages over different seeds of one model; if only one
    instance exists the self-pair value is used.
    """
    cells = {}
    for rep in reports:
        key = tuple(sorted((rep.model_a, rep.model_b)))
        cells.setdefault(key, {"cross": [], "self": []})
        cells[key]["self" if rep.id_a == rep.id_b else "cross"].append(getattr(rep, metric))
    models = [m for m in order if any(m in k for k in cells)]
    M = np.full((len(models), len(models)), np.nan)
    for i, a in enumerate(models):
        for j, b in enumerate(models):
            c = cells.get(tuple(sorted((a, b))))
            if c is not None:
                vals = c["cross"] or c["self"]
                M[i, j] = float(np.mean(vals))
    return {"models": models, "metric": metric, "matrix": M.tolist()}
