"""Latent-space machinery: cosine distances, the 3-sigma bound, mutual k-NN
similarity, pseudo label sets and the class-contrastive loss.

Samples are addressed by position in an id-sorted array, so "ties broken by
ascending id" is the same as ties broken by ascending position.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

_DEN_EPS = 1e-12


def _unit_rows(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    f = np.atleast_2d(np.asarray(f, dtype=np.float64))
    norms = np.linalg.norm(f, axis=1)
    if np.any(norms == 0):
        bad = int(np.flatnonzero(norms == 0)[0])
        raise ValueError(f"zero-norm feature vector at row {bad}: direction undefined")
    return f / norms[:, None], norms


def pairwise_distance(f_i, f_j) -> float:
    """1 - cosine similarity, in [0, 2]."""
    u, _ = _unit_rows(np.stack([np.asarray(f_i, float), np.asarray(f_j, float)]))
    return float(np.clip(1.0 - u[0] @ u[1], 0.0, 2.0))


def distance_matrix(f, g=None) -> np.ndarray:
    """All pairwise distances between rows of ``f`` (and ``g`` when given).

    The square case is made exactly symmetric with a zero diagonal so that
    neighbour rankings do not depend on summation order.
    """
    u, _ = _unit_rows(f)
    if g is None:
        d = 1.0 - u @ u.T
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
    else:
        v, _ = _unit_rows(g)
        d = 1.0 - u @ v.T
    return np.clip(d, 0.0, 2.0)


def distance_upper_bound(distances) -> float:
    """μ - 3σ of the distances from one sample to every member of its pool.

    σ is the population standard deviation. The result may be negative, in
    which case no pair can pass the strict ``d < bound`` test.
    """
    d = np.asarray(distances, dtype=np.float64).ravel()
    if d.size == 0:
        raise ValueError("distance bound needs a non-empty pool")
    mu = d.mean()
    return float(mu - 3.0 * np.sqrt(((d - mu) ** 2).mean()))


def knn_indices(dist: np.ndarray, k: int) -> np.ndarray:
    """Row-wise k nearest neighbours excluding self, ties by ascending index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = dist.shape[0]
    k = min(k, n - 1)
    d = dist.astype(np.float64, copy=True)
    np.fill_diagonal(d, np.inf)
    idx = np.broadcast_to(np.arange(n), d.shape)
    order = np.lexsort((idx, d), axis=1)
    return order[:, :k]


def mutual_knn(dist: np.ndarray, k: int) -> np.ndarray:
    """Boolean matrix M[i, j] = (j ∈ K_i) and (i ∈ K_j)."""
    n = dist.shape[0]
    member = np.zeros((n, n), dtype=bool)
    if n > 1:
        nn = knn_indices(dist, k)
        member[np.repeat(np.arange(n), nn.shape[1]), nn.ravel()] = True
    return member & member.T


@dataclass
class SimilarityResult:
    scores: np.ndarray          # (N, C) integer S(i, c) for every context row
    mutual: np.ndarray          # (N, N) mutual-kNN predicate
    bounds: np.ndarray          # (N,) 3-sigma bound per labelled row (nan otherwise)
    dist: np.ndarray


def similarity_scores(features, labels, in_source, in_tl, num_classes: int,
                      k: int = 5) -> SimilarityResult:
    """S(i, c) for every row of a context spanning D_S ∪ D_T.

    ``labels`` is only read for rows flagged in ``in_source`` or ``in_tl``.
    Source neighbours count once, labelled-target neighbours twice; a pair only
    counts when it is a mutual k-NN pair closer than the neighbour's bound.
    """
    in_source = np.asarray(in_source, dtype=bool)
    in_tl = np.asarray(in_tl, dtype=bool)
    labels = np.asarray(labels)
    dist = distance_matrix(features)
    mutual = mutual_knn(dist, k)
    n = dist.shape[0]
    bounds = np.full(n, np.nan)
    for pool in (in_source, in_tl):
        if pool.any():
            sub = dist[np.ix_(pool, pool)]
            mu = sub.mean(axis=1)
            sigma = np.sqrt(((sub - mu[:, None]) ** 2).mean(axis=1))
            bounds[pool] = mu - 3.0 * sigma
    close = np.zeros_like(dist, dtype=bool)
    lab = in_source | in_tl
    close[:, lab] = dist[:, lab] < bounds[None, lab]
    hit = mutual & close
    scores = np.zeros((n, num_classes), dtype=np.int64)
    for c in range(num_classes):
        src = in_source & (labels == c)
        tgt = in_tl & (labels == c)
        scores[:, c] = hit[:, src].sum(axis=1) + 2 * hit[:, tgt].sum(axis=1)
    return SimilarityResult(scores, mutual, bounds, dist)


def similarity_score(i: int, c: int, k: int, features, labels, in_source, in_tl,
                     num_classes: int) -> int:
    return int(similarity_scores(features, labels, in_source, in_tl,
                                 num_classes, k).scores[i, c])


def pseudo_label_set(scores) -> frozenset:
    """Classes whose score is positive and strictly above the mean score."""
    s = np.asarray(scores, dtype=np.int64)
    total = int(s.sum())
    c = s.size
    # S_q > total / C  <=>  C * S_q > total, exact in integers
    return frozenset(int(q) for q in range(c) if s[q] > 0 and c * int(s[q]) > total)


# ---------------------------------------------------------------------------
# Contrastive loss
# ---------------------------------------------------------------------------


def draw_subsets(rng: np.random.Generator, labels, members, m: int) -> dict[int, np.ndarray]:
    """For each class among ``members``, a uniform subset of size min(m, n_c)."""
    labels = np.asarray(labels)
    members = np.asarray(members, dtype=bool)
    out = {}
    for c in np.unique(labels[members]):
        pool = np.flatnonzero(members & (labels == c))
        take = min(m, pool.size)
        out[int(c)] = np.sort(rng.choice(pool, size=take, replace=False))
    return out


def contrastive_loss(features, labels, in_source, in_tl, anchors,
                     subsets_source: Mapping[int, np.ndarray],
                     subsets_tl: Mapping[int, np.ndarray]) -> tuple[float, np.ndarray]:
    """Class-contrastive distance-ratio loss and its gradient w.r.t. ``features``.

    For each anchor i (a row in D_S ∪ D_Tl) the loss adds
    Σ_{j∈S̃_{y_i}} d(i,j) / Σ_{j∈D_S} d(i,j) and the same ratio against D_Tl,
    averaged over anchors; anchors in D_Tl also add their mean distance to
    S̃_{y_i}, averaged over those anchors. Zero denominators make a summand 0.
    """
    f = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels)
    in_source = np.asarray(in_source, dtype=bool)
    in_tl = np.asarray(in_tl, dtype=bool)
    anchors = np.asarray(anchors, dtype=np.int64)
    grad = np.zeros_like(f)
    if anchors.size == 0:
        return 0.0, grad
    if np.any(~(in_source | in_tl)[anchors]):
        raise ValueError("contrastive anchors must be labelled (D_S or D_Tl)")

    u, norms = _unit_rows(f)
    raw = 1.0 - u[anchors] @ u.T
    live = raw > 0.0
    d = np.where(live, raw, 0.0)
    na = anchors.size
    n_tl_anchor = int(in_tl[anchors].sum())

    coef = np.zeros_like(d)
    value = 0.0
    for r, i in enumerate(anchors):
        y = int(labels[i])
        for pool, subsets in ((in_source, subsets_source), (in_tl, subsets_tl)):
            den = d[r, pool].sum()
            sub = subsets.get(y, np.empty(0, dtype=np.int64))
            if den <= _DEN_EPS or sub.size == 0:
                continue
            num = d[r, sub].sum()
            value += num / den / na
            coef[r, sub] += 1.0 / den / na
            coef[r, pool] -= num / den ** 2 / na
        if in_tl[i]:
            sub = subsets_source.get(y, np.empty(0, dtype=np.int64))
            if sub.size:
                value += d[r, sub].sum() / sub.size / n_tl_anchor
                coef[r, sub] += 1.0 / sub.size / n_tl_anchor

    coef = np.where(live, coef, 0.0)
    # d(i,j) = 1 - u_i·u_j
    du = -(coef.T @ u[anchors])
    np.add.at(du, anchors, -(coef @ u))
    grad = (du - (du * u).sum(axis=1, keepdims=True) * u) / norms[:, None]
    return float(value), grad
