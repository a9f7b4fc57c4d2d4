"""Downstream evaluation: embeddings, linear probing, retrieval metrics."""

from mart.eval.embed import EmbeddingSet, embed, read_embeddings, write_embeddings
from mart.eval.metrics import (
    average_precision_at_ranks,
    cosine_matrix,
    macro_average,
    pr_auc,
    retrieval_eval,
    retrieval_scores,
    roc_auc,
)
from mart.eval.probe import ProbeResult, linear_probe, split_indices

__all__ = [
    "EmbeddingSet", "ProbeResult", "average_precision_at_ranks", "cosine_matrix", "embed",
    "linear_probe", "macro_average", "pr_auc", "read_embeddings", "retrieval_eval",
    "retrieval_scores", "roc_auc", "split_indices", "write_embeddings",
]
