"""Ranking and density metrics for imbalanced binary labels and full-catalog
ranking: average precision, AUROC, max F1, sensitivity at fixed specificity,
hit-rate@k, mean reciprocal rank, probability-mass-within, entity max-pooling,
and parameter-free rank fusion of two score vectors.

Conventions (documented because tie handling differs across libraries):
  - AP sorts by (-score, input index) stably and sums precision at each
    positive's rank.
  - AUROC is the Mann-Whitney statistic, ties counted half.
  - H@k counts a hit iff strictly fewer than k items score strictly higher,
    with equal scores broken by item index.
  - Rank fusion converts each vector to average ranks normalized to [0, 1]
    and sums them.
"""

from __future__ import annotations

import numpy as np

from .schema import DataError


def _as_scores_labels(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DataError("scores and labels must be 1-D and the same length")
    return scores, labels


def average_precision(scores, labels) -> float:
    scores, labels = _as_scores_labels(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise DataError("average precision needs at least one positive")
    order = np.lexsort((np.arange(len(scores)), -scores))
    hits = labels[order]
    cum_pos = np.cumsum(hits)
    ranks = np.arange(1, len(scores) + 1)
    precision_at = cum_pos / ranks
    return float(precision_at[hits].sum() / n_pos)


def auroc(scores, labels) -> float:
    scores, labels = _as_scores_labels(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUROC needs both classes")
    ranks = _average_ranks(scores)
    rank_sum = ranks[labels].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks, ascending, average on ties."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def max_f1(scores, labels) -> float:
    """Maximum F1 over thresholds of the form score >= t, t a distinct score."""
    scores, labels = _as_scores_labels(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise DataError("max F1 needs at least one positive")
    order = np.lexsort((np.arange(len(scores)), -scores))
    hits = labels[order].astype(np.float64)
    tp = np.cumsum(hits)
    ranks = np.arange(1, len(scores) + 1)
    # Valid cut points are the last index of each tied block.
    sorted_scores = scores[order]
    is_cut = np.ones(len(scores), dtype=bool)
    is_cut[:-1] = sorted_scores[:-1] != sorted_scores[1:]
    precision = tp / ranks
    recall = tp / n_pos
    denom = precision + recall
    f1 = np.where(denom > 0, 2.0 * precision * recall / np.where(denom > 0, denom, 1.0), 0.0)
    return float(f1[is_cut].max())


def sens_at_spec(scores, labels, specificity: float = 0.9) -> float:
    """Highest sensitivity among thresholds whose specificity is >= the bar;
    the reject-everything threshold (sensitivity 0) always qualifies."""
    scores, labels = _as_scores_labels(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("sens_at_spec needs both classes")
    order = np.lexsort((np.arange(len(scores)), -scores))
    hits = labels[order].astype(np.float64)
    tp = np.cumsum(hits)
    fp = np.cumsum(1.0 - hits)
    sorted_scores = scores[order]
    is_cut = np.ones(len(scores), dtype=bool)
    is_cut[:-1] = sorted_scores[:-1] != sorted_scores[1:]
    spec = 1.0 - fp / n_neg
    sens = tp / n_pos
    ok = is_cut & (spec >= specificity)
    return float(sens[ok].max()) if ok.any() else 0.0


def _target_rank(scores: np.ndarray, target: int) -> int:
    """1-based rank: strictly higher scores first, ties by item index."""
    higher = int((scores > scores[target]).sum())
    tied_before = int((scores[:target] == scores[target]).sum())
    return higher + tied_before + 1


def hit_at_k(rankings, targets, k: int) -> float:
    """Fraction of queries whose target ranks in the top k."""
    hits = [1.0 if _target_rank(np.asarray(s, dtype=np.float64), int(t)) <= k else 0.0 for s, t in zip(rankings, targets)]
    if not hits:
        raise DataError("no queries")
    return float(np.mean(hits))


def mrr(rankings, targets) -> float:
    """Mean reciprocal rank of the target."""
    rr = [1.0 / _target_rank(np.asarray(s, dtype=np.float64), int(t)) for s, t in zip(rankings, targets)]
    if not rr:
        raise DataError("no queries")
    return float(np.mean(rr))


def t_pm60(mass_within: np.ndarray) -> float:
    """Mean probability mass within the +-60 min window, over queries."""
    mass_within = np.asarray(mass_within, dtype=np.float64)
    if mass_within.size == 0:
        raise DataError("no queries")
    return float(mass_within.mean())


def pool_agent_max(scores, labels, group_key) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Entity-level view: score is the max over the entity's events, label is
    set when any event label is.  Returns (entities, scores, labels)."""
    scores, labels = _as_scores_labels(scores, labels)
    group_key = np.asarray(group_key)
    if group_key.shape != scores.shape:
        raise DataError("group_key must align with scores")
    entities = np.unique(group_key)
    pooled_scores = np.empty(len(entities))
    pooled_labels = np.zeros(len(entities), dtype=bool)
    for i, ent in enumerate(entities):
        at = group_key == ent
        pooled_scores[i] = scores[at].max()
        pooled_labels[i] = labels[at].any()
    return entities, pooled_scores, pooled_labels


def rank_fuse(scores_a, scores_b) -> np.ndarray:
    """Sum of the two vectors' global ranks, each normalized to [0, 1] with
    average ranks on ties; combines heads without a tunable weight."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError("score vectors must be 1-D and the same length")
    return _normalized_ranks(a) + _normalized_ranks(b)


def _normalized_ranks(scores: np.ndarray) -> np.ndarray:
    if len(scores) == 1:
        return np.array([0.5])
    return (_average_ranks(scores) - 1.0) / (len(scores) - 1.0)
