"""Relative embeddings and the three alignment scores."""

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateFeature, ShapeError, ZeroVector

STD_FLOOR = 1e-12
NORM_FLOOR = 1e-12


def feature_stats(Z):
    """Column mean and population std, raising on a constant column."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise ShapeError(f"expected an N x k matrix, got shape {Z.shape}")
    mean = Z.mean(axis=0)
    std = Z.std(axis=0)
    bad = np.flatnonzero(~(std > STD_FLOOR))
    if bad.size:
        raise DegenerateFeature(int(bad[0]), float(std[bad[0]]))
    return mean, std


def zscore_features(Z, stats=None):
    """Standardize every column to mean 0 and (population) std 1.

    Parameters
    ----------
    Z : ndarray, shape (N, k)
    stats : tuple of ndarray, optional
        ``(mean, std)`` to apply instead of the statistics of ``Z``.
    """
    Z = np.asarray(Z, dtype=np.float64)
    mean, std = feature_stats(Z) if stats is None else stats
    return (Z - mean) / std


def _unit_rows(X, what):
    norms = np.linalg.norm(X, axis=1)
    bad = np.flatnonzero(norms < NORM_FLOOR)
    if bad.size:
        raise ZeroVector(f"{what} row {int(bad[0])} has norm {norms[bad[0]]:.3g} < {NORM_FLOOR}")
    return X / norms[:, None]


def cosine_to(Z, A):
    """``R[j, i] = cos(Z[j], A[i])``."""
    return np.clip(_unit_rows(np.asarray(Z, float), "latent") @ _unit_rows(np.asarray(A, float), "anchor").T, -1.0, 1.0)


@dataclass(frozen=True)
class AnchorSet:
    """Distinct row indices into the shared sample list."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        if np.unique(idx).size != idx.size:
            raise ShapeError("anchor indices must be distinct")
        if idx.size and idx.min() < 0:
            raise IndexError("anchor indices must be non-negative")
        object.__setattr__(self, "indices", idx)

    @property
    def m(self):
        return self.indices.size

    def __eq__(self, other):
        return isinstance(other, AnchorSet) and np.array_equal(self.indices, other.indices)

    def __hash__(self):
        return hash(self.indices.tobytes())


def select_anchors(n_samples, m, seed):
    """``m`` distinct sample rows drawn with ``default_rng([seed, 8])``, sorted."""
    if m > n_samples:
        raise ShapeError(f"cannot draw {m} anchors from {n_samples} samples")
    rng = np.random.default_rng([seed, 8])
    return AnchorSet(np.sort(rng.choice(n_samples, size=m, replace=False)))


@dataclass
class RelativeEmbeddingMatrix:
    R: np.ndarray
    anchors: AnchorSet
    standardized: bool
    sim_kind: str = "cosine"

    @property
    def shape(self):
        return self.R.shape


def _as_anchor_set(anchors):
    return anchors if isinstance(anchors, AnchorSet) else AnchorSet(anchors)


def relative_embed(Z, anchors, standardize=True):
    """Cosine similarity of every latent to every anchor latent.

    Parameters
    ----------
    Z : ndarray, shape (N, k)
        Latents on the shared sample list.
    anchors : AnchorSet or sequence of int
        Rows of ``Z`` that act as anchors.
    standardize : bool
        Z-score the features over all ``N`` rows first.

    Returns
    -------
    RelativeEmbeddingMatrix
        ``R`` of shape ``(N, m)`` with entries in ``[-1, 1]``.
    """
    anchors = _as_anchor_set(anchors)
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise ShapeError(f"expected an N x k matrix, got shape {Z.shape}")
    if anchors.m and anchors.indices.max() >= len(Z):
        raise IndexError(f"anchor index {anchors.indices.max()} out of range for {len(Z)} samples")
    X = zscore_features(Z) if standardize else Z
    return RelativeEmbeddingMatrix(cosine_to(X, X[anchors.indices]), anchors, standardize)


def _pair(R1, R2, min_cols=1):
    a1 = getattr(R1, "anchors", None)
    a2 = getattr(R2, "anchors", None)
    if a1 is not None and a2 is not None and a1 != a2:
        raise ShapeError("relative embeddings use different anchor sets")
    R1 = np.asarray(getattr(R1, "R", R1), dtype=np.float64)
    R2 = np.asarray(getattr(R2, "R", R2), dtype=np.float64)
    if R1.ndim != 2 or R1.shape != R2.shape:
        raise ShapeError(f"relative embeddings must have equal N x m shapes, got {R1.shape} and {R2.shape}")
    if R1.shape[1] < min_cols:
        raise ShapeError(f"need at least {min_cols} anchors, got {R1.shape[1]}")
    return R1, R2


def row_cosines(R1, R2):
    R1, R2 = _pair(R1, R2)
    return np.clip(np.sum(_unit_rows(R1, "embedding") * _unit_rows(R2, "embedding"), axis=1), -1.0, 1.0)


def alpha_cosine(R1, R2):
    """Mean over samples of the cosine between the two relative embeddings."""
    return float(np.mean(row_cosines(R1, R2)))


def alpha_t1(R1, R2):
    """Fraction of samples whose most similar anchor is the same in both spaces.

    ``np.argmax`` returns the first maximum, so ties go to the lowest column.
    """
    R1, R2 = _pair(R1, R2)
    return float(np.mean(np.argmax(R1, axis=1) == np.argmax(R2, axis=1)))


def descending_ranks(R):
    """Rank 0 for the largest entry of each row; ties keep column order."""
    order = np.argsort(-R, axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(R.shape[0])[:, None]
    ranks[rows, order] = np.arange(R.shape[1])[None, :]
    return ranks.astype(np.float64)


def alpha_rank(R1, R2):
    """Mean over samples of the Pearson correlation of the two rank vectors."""
    R1, R2 = _pair(R1, R2, min_cols=2)
    a = descending_ranks(R1)
    b = descending_ranks(R2)
    # every row is a permutation of 0..m-1, so mean and variance are shared
    a -= a.mean(axis=1, keepdims=True)
    b -= b.mean(axis=1, keepdims=True)
    rho = np.sum(a * b, axis=1) / np.sqrt(np.sum(a * a, axis=1) * np.sum(b * b, axis=1))
    return float(np.mean(np.clip(rho, -1.0, 1.0)))


@dataclass
class AlignmentReport:
    model_a: str
    model_b: str
    seed_a: int
    seed_b: int
    cosine: float
    t1: float
    rank: float
    n_samples: int
    n_anchors: int
    id_a: str = ""
    id_b: str = ""

    def row(self):
        return [self.model_a, self.model_b, self.seed_a, self.seed_b, self.cosine, self.t1, self.rank]


def align(R1, R2, **labels):
    """All three scores for one pair of relative embeddings."""
    R = np.asarray(getattr(R1, "R", R1))
    return AlignmentReport(
        cosine=alpha_cosine(R1, R2), t1=alpha_t1(R1, R2), rank=alpha_rank(R1, R2) if R.shape[1] > 1 else float("nan"),
        n_samples=R.shape[0], n_anchors=R.shape[1], **labels,
    )
