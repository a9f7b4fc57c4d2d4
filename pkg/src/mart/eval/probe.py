"""Linear probing: one affine layer with a sigmoid per tag on frozen embeddings."""

from dataclasses import dataclass

import numpy as np

from mart.diffcore import AdamState, Tensor, adam_step
from mart.eval.metrics import macro_average, pr_auc, roc_auc


@dataclass
class ProbeResult:
    roc_auc: float
    pr_auc: float
    epochs_run: int
    best_val_roc_auc: float


def split_indices(n, rng, fractions=(0.6, 0.2, 0.2), groups=None):
    """Random train/val/test split. With ``groups`` whole groups stay together."""
    if groups is None:
        perm = rng.permutation(n)
        a = int(round(fractions[0] * n))
        b = a + int(round(fractions[1] * n))
        return perm[:a], perm[a:b], perm[b:]
    groups = np.asarray(groups)
    uniq = rng.permutation(np.unique(groups))
    a = int(round(fractions[0] * uniq.size))
    b = a + int(round(fractions[1] * uniq.size))
    pick = lambda g: np.flatnonzero(np.isin(groups, g))  # noqa: E731
    return pick(uniq[:a]), pick(uniq[a:b]), pick(uniq[b:])


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _scores(x, w, b):
    return x @ w + b


def _val_auc(x, y, w, b):
    try:
        return macro_average(roc_auc, _scores(x, w, b), y)
    except Exception:
        return -np.inf


def linear_probe(embeddings, labels, split, epochs=500, patience=10, lr=1e-3, seed=0, batch_size=16):
    """Train a per-tag logistic layer and report macro ROC-AUC / PR-AUC on the test split.

    ``split`` is ``(train_idx, val_idx, test_idx)``. Embeddings are standardised
    with training statistics. Early stopping keeps the weights with the best
    validation ROC-AUC and stops after ``patience`` epochs without improvement.
    Each epoch is one shuffled pass over the training rows in minibatches.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    tr, va, te = (np.asarray(s) for s in split)
    if set(tr.tolist()) & set(te.tolist()):
        raise ValueError("train and test splits overlap")
    mu = x[tr].mean(axis=0)
    sd = x[tr].std(axis=0)
    sd[sd == 0] = 1.0
    x = (x - mu) / sd

    rng = np.random.default_rng(seed)
    d, t = x.shape[1], y.shape[1]
    params = {
        "w": Tensor(rng.normal(0, 0.01, (d, t))),
        "b": Tensor(np.zeros(t)),
    }
    opt = AdamState(learning_rate=lr, weight_decay=0.0)
    best = (-np.inf, params["w"].data.copy(), params["b"].data.copy())
    since, run = 0, 0
    xtr, ytr = x[tr], y[tr]
    for run in range(1, epochs + 1):
        order = rng.permutation(len(tr))
        for i in range(0, len(tr), batch_size):
            xb, yb = xtr[order[i:i + batch_size]], ytr[order[i:i + batch_size]]
            p = _sigmoid(_scores(xb, params["w"].data, params["b"].data))
            g = (p - yb) / len(xb)  # d(mean BCE)/d(logit), summed over tags
            adam_step(params, {"w": xb.T @ g, "b": g.sum(axis=0)}, opt)
        if len(va) == 0:
            best = (np.nan, params["w"].data.copy(), params["b"].data.copy())
            continue
        score = _val_auc(x[va], y[va], params["w"].data, params["b"].data)
        if score > best[0]:
            best = (score, params["w"].data.copy(), params["b"].data.copy())
            since = 0
        else:
            since += 1
            if since >= patience:
                break
    _, w, b = best
    s = _scores(x[te], w, b)
    return ProbeResult(macro_average(roc_auc, s, y[te]), macro_average(pr_auc, s, y[te]), run, best[0])
