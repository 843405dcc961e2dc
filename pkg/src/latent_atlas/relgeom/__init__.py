"""Relative geometry of latent spaces: anchors, alignment scores and comparators."""

from .analysis import (
    ABLATION_K,
    AblationRow,
    BaselineResult,
    PCAResult,
    ProbeResult,
    alignment_grid,
    anchor_ablation,
    current_states,
    heatmap,
    pca_project,
    probe_ridge,
    probe_split,
    random_baseline,
    temporal_alignment,
    temporal_tracks,
    track_similarity,
)
from .baselines import baseline_cka, baseline_procrustes, baseline_rsa
from .embedding import (
    AlignmentReport,
    AnchorSet,
    RelativeEmbeddingMatrix,
    align,
    alpha_cosine,
    alpha_rank,
    alpha_t1,
    cosine_to,
    descending_ranks,
    feature_stats,
    relative_embed,
    row_cosines,
    select_anchors,
    zscore_features,
)

__all__ = [
    "ABLATION_K", "AblationRow", "AlignmentReport", "AnchorSet", "BaselineResult", "PCAResult",
    "ProbeResult", "RelativeEmbeddingMatrix", "align", "alignment_grid", "alpha_cosine", "alpha_rank",
    "alpha_t1", "anchor_ablation", "baseline_cka", "baseline_procrustes", "baseline_rsa", "cosine_to",
    "current_states", "descending_ranks", "feature_stats", "heatmap", "pca_project", "probe_ridge",
    "probe_split", "random_baseline", "relative_embed", "row_cosines", "select_anchors",
    "temporal_alignment", "temporal_tracks", "track_similarity", "zscore_features",
]
