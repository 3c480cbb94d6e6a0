"""Uncertainty scoring of the unlabelled target pool and two-step selection."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .entropy import (ClampCounter, UncertaintyScore, shannon_u_dom, shannon_u_pred,
                      u_dom, u_pred)
from .geometry import distance_matrix
from .model import EvidentialModel, forward

STRATEGIES = ("renyi", "shannon", "random")


def score_alphas(alpha, s: float, lambda_dom: float, lambda_pred: float,
                 strategy: str = "renyi", stats: ClampCounter | None = None):
    """(u_dom, u_pred, u_total) arrays for a batch of concentrations."""
    a = np.atleast_2d(np.asarray(alpha, dtype=np.float64))
    if a.shape[0] == 0:
        empty = np.empty(0)
        return empty, empty.copy(), empty.copy()
    if strategy == "shannon":
        dom = np.atleast_1d(shannon_u_dom(a, stats))
        pred = np.atleast_1d(shannon_u_pred(a))
    elif strategy in ("renyi", "random"):
        dom = np.atleast_1d(u_dom(a, s, stats))
        pred = np.atleast_1d(u_pred(a, s))
    else:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    return dom, pred, lambda_dom * dom + lambda_pred * pred


def score_unlabeled(model: EvidentialModel, ids: Sequence[int], x, lambda_dom: float = 7.0,
                    lambda_pred: float = 0.5, strategy: str = "renyi",
                    stats: ClampCounter | None = None) -> list[tuple[int, UncertaintyScore]]:
    """One score per unlabelled sample at the model's current order s, ordered by id."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        return []
    order = np.argsort(ids, kind="stable")
    alpha = forward(model, np.asarray(x, dtype=np.float64)[order]).alpha
    dom, pred, total = score_alphas(alpha, model.s, lambda_dom, lambda_pred, strategy, stats)
    return [(int(i), UncertaintyScore(float(a), float(b), float(c)))
            for i, a, b, c in zip(ids[order], dom, pred, total)]


def _as_arrays(scores) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(scores, Mapping):
        items = list(scores.items())
    else:
        items = list(scores)
    ids = np.array([int(i) for i, _ in items], dtype=np.int64)
    vals = np.array([v.u_total if isinstance(v, UncertaintyScore) else float(v)
                     for _, v in items], dtype=np.float64)
    return ids, vals


def _rank(ids: np.ndarray, key: np.ndarray) -> np.ndarray:
    # descending key, ascending id on ties
    return np.lexsort((ids, -key))


def select_candidates(scores, round_index: int, budget: int) -> list[int]:
    """Top min((i+1)·N, |scores|) ids by u_total, ties by ascending id."""
    if round_index < 1:
        raise ValueError("round_index is 1-based")
    if budget < 1:
        raise ValueError("per-round budget must be >= 1")
    ids, vals = _as_arrays(scores)
    if ids.size == 0:
        raise ValueError("select_candidates needs a non-empty score list")
    keep = min((round_index + 1) * budget, ids.size)
    return [int(i) for i in ids[_rank(ids, vals)[:keep]]]


def _minmax(v: np.ndarray) -> np.ndarray:
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.full_like(v, 0.5)
    return (v - lo) / (hi - lo)


def diversity_filter(candidates: Sequence[int], features, scores, budget: int) -> list[int]:
    """The ``budget`` candidates with the largest d·(1+u).

    ``features`` holds one row per candidate (same order) or maps id -> row;
    ``scores`` maps id -> u_total (or UncertaintyScore). d is the mean
    distance to the other candidates; d and u are min-max normalised over the
    pool, a constant column becoming 0.5.
    """
    cand = np.asarray(candidates, dtype=np.int64)
    if budget > cand.size:
        raise ValueError(f"budget {budget} exceeds {cand.size} candidates")
    if budget <= 0:
        return []
    if isinstance(features, Mapping):
        f = np.stack([np.asarray(features[int(i)], dtype=np.float64) for i in cand])
    else:
        f = np.atleast_2d(np.asarray(features, dtype=np.float64))
    smap = dict(scores.items()) if isinstance(scores, Mapping) else dict(scores)
    u = np.array([smap[int(i)].u_total if isinstance(smap[int(i)], UncertaintyScore)
                  else float(smap[int(i)]) for i in cand])
    n = cand.size
    if n > 1:
        d = distance_matrix(f).sum(axis=1) / (n - 1)
    else:
        d = np.zeros(1)
    key = _minmax(d) * (1.0 + _minmax(u))
    return [int(i) for i in cand[_rank(cand, key)[:budget]]]


def random_selection(rng: np.random.Generator, unlabeled_ids: Sequence[int], budget: int) -> list[int]:
    ids = np.sort(np.asarray(unlabeled_ids, dtype=np.int64))
    take = min(budget, ids.size)
    return sorted(int(i) for i in rng.choice(ids, size=take, replace=False))
