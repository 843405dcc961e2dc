"""Comparators on absolute latents: linear CKA, RSA and orthogonal Procrustes."""

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import spearmanr

from ..errors import DegenerateInput, ShapeError


def _pair(Z1, Z2):
    Z1 = np.asarray(Z1, dtype=np.float64)
    Z2 = np.asarray(Z2, dtype=np.float64)
    if Z1.ndim != 2 or Z2.ndim != 2 or len(Z1) != len(Z2):
        raise ShapeError(f"expected N x k1 and N x k2 matrices, got {Z1.shape} and {Z2.shape}")
    return Z1, Z2


def baseline_cka(Z1, Z2):
    """Linear CKA: ``||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F)`` on centered data."""
    X, Y = _pair(Z1, Z2)
    X = X - X.mean(axis=0)
    Y = Y - Y.mean(axis=0)
    xx = np.linalg.norm(X.T @ X)
    yy = np.linalg.norm(Y.T @ Y)
    if xx == 0 or yy == 0:
        raise DegenerateInput("centered Gram matrix is all zero")
    return float(np.linalg.norm(Y.T @ X) ** 2 / (xx * yy))


def baseline_rsa(Z1, Z2):
    """Spearman correlation of the two condensed Euclidean distance matrices."""
    X, Y = _pair(Z1, Z2)
    if len(X) < 3:
        raise ShapeError("RSA needs at least 3 samples")
    d1, d2 = pdist(X), pdist(Y)
    if np.ptp(d1) == 0 or np.ptp(d2) == 0:
        raise DegenerateInput("pairwise distances are constant")
    return float(spearmanr(d1, d2).statistic)


def baseline_procrustes(Z1, Z2):
    """``1 - residual`` after the optimal orthogonal map and scaling.

    Both matrices are centered and scaled to unit Frobenius norm; the narrower
    one is zero-padded. The minimal residual is ``1 - (sum of singular values
    of A^T B)^2``, so the score is that squared nuclear norm.
    """
    A, B = _pair(Z1, Z2)
    A = A - A.mean(axis=0)
    B = B - B.mean(axis=0)
    na, nb = np.linalg.norm(A), np.linalg.norm(B)
    if na == 0 or nb == 0:
        raise DegenerateInput("centered latent matrix is all zero")
    A, B = A / na, B / nb
    k = max(A.shape[1], B.shape[1])
    A = np.pad(A, ((0, 0), (0, k - A.shape[1])))
    B = np.pad(B, ((0, 0), (0, k - B.shape[1])))
    s = np.linalg.svd(A.T @ B, compute_uv=False)
    return float(min(1.0, np.sum(s) ** 2))
