"""Ranking metrics: ROC-AUC, average precision, and retrieval scores."""

import warnings

import numpy as np
from scipy.stats import rankdata

from mart.errors import UndefinedMetricError


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(bool)
    if scores.shape != labels.shape:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} differ in length")
    return scores, labels


def roc_auc(scores, labels):
    """Probability a random positive outscores a random negative; ties count 1/2."""
    scores, labels = _check_binary(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC-AUC needs at least one positive and one negative")
    ranks = rankdata(scores)  # midranks for ties
    # 2x the Mann-Whitney U statistic is an exact integer
    u2 = 2.0 * ranks[labels].sum() - n_pos * (n_pos + 1)
    return u2 / (2.0 * n_pos * n_neg)


def pr_auc(scores, labels):
    """Average precision: sum over distinct thresholds of (recall step) x precision."""
    scores, labels = _check_binary(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y)
    # last index of each run of tied scores
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), s.size - 1]
    tp_at = tp[last]
    n_at = last + 1
    prev = np.r_[0, tp_at[:-1]]
    ap = 0.0
    for t, k, p0 in zip(tp_at, n_at, prev):
        if t != p0:
            ap += ((t - p0) / n_pos) * (t / k)
    return ap


def macro_average(metric, scores, labels):
    """Mean of ``metric`` over label columns; undefined columns are skipped with a warning."""
    scores, labels = np.asarray(scores), np.asarray(labels)
    vals = []
    for j in range(labels.shape[1]):
        try:
            vals.append(metric(scores[:, j], labels[:, j]))
        except UndefinedMetricError:
            warnings.warn(f"tag column {j} has a single class in this split; excluded from average")
    if not vals:
        raise UndefinedMetricError("no tag column has both classes")
    return float(np.mean(vals))


def rank_candidates(sim_row, ids, query):
    """Indices of all items except ``query`` by descending score, ties by ascending id."""
    cand = np.array([i for i in range(len(ids)) if i != query])
    keys = np.array([ids[i] for i in cand])
    order = np.lexsort((keys, -sim_row[cand]))
    return cand[order]


def average_precision_at_ranks(relevant):
    """AP of a ranked relevance vector: mean precision at each relevant position."""
    relevant = np.asarray(relevant, dtype=bool)
    hits = np.flatnonzero(relevant)
    if hits.size == 0:
        return 0.0
    prec = np.arange(1, hits.size + 1) / (hits + 1)
    return float(prec.mean())


def cosine_matrix(x):
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        from mart.errors import DegenerateVectorError
        raise DegenerateVectorError("zero embedding vector in retrieval")
    xn = x / norms
    return xn @ xn.T


def retrieval_scores(sim, cliques, ids=None, k=10):
    """MAP, P@k and MR1 of leave-one-out retrieval from a similarity matrix.

    Queries whose clique has no other member are skipped with a warning.
    """
    sim = np.asarray(sim, dtype=np.float64)
    cliques = np.asarray(cliques)
    n = sim.shape[0]
    ids = list(range(n)) if ids is None else list(ids)
    aps, pks, firsts = [], [], []
    skipped = 0
    for q in range(n):
        ranked = rank_candidates(sim[q], ids, q)
        rel = cliques[ranked] == cliques[q]
        if not rel.any():
            skipped += 1
            continue
        aps.append(average_precision_at_ranks(rel))
        top = min(k, rel.size)
        pks.append(rel[:top].sum() / top)
        firsts.append(int(np.argmax(rel)) + 1)
    if skipped:
        warnings.warn(f"{skipped} queries had no other clique member and were skipped")
    if not aps:
        raise UndefinedMetricError("no query has a relevant item")
    return float(np.mean(aps)), float(np.mean(pks)), float(np.mean(firsts))


def retrieval_eval(embeddings, cliques, ids=None, k=10):
    """Cosine-similarity retrieval: returns ``(MAP, P@k, MR1)``."""
    return retrieval_scores(cosine_matrix(embeddings), cliques, ids, k)
