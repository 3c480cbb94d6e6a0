"""Independent reference implementations used by the self-test and the tests.

Everything here is written with scalar loops over plain Python numbers or
mpmath values and shares no numerical code with the vectorised modules, so
agreement between the two is evidence rather than tautology.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Mapping, Sequence

import mpmath as mp
import numpy as np

from .model import PARAM_NAMES, EvidentialModel
from .training import LossConfig, TrainBatch

# ---------------------------------------------------------------------------
# Brute-force latent-space routines
# ---------------------------------------------------------------------------


def _cos_dist(a, b, sqrt=math.sqrt):
    dot = sum(x * y for x, y in zip(a, b))
    na = sqrt(sum(x * x for x in a))
    nb = sqrt(sum(y * y for y in b))
    d = 1 - dot / (na * nb)
    return min(max(d, 0), 2)


def brute_contrastive(features, labels, in_source, in_tl, anchors,
                      subsets_source: Mapping[int, Sequence[int]],
                      subsets_tl: Mapping[int, Sequence[int]], sqrt=math.sqrt):
    """Three-term distance-ratio loss evaluated term by term."""
    rows = [list(r) for r in features]
    n = len(rows)
    src = [j for j in range(n) if in_source[j]]
    tl = [j for j in range(n) if in_tl[j]]
    anchors = [int(a) for a in anchors]
    if not anchors:
        return 0
    n_tl_anchor = sum(1 for i in anchors if in_tl[i])
    first = second = third = 0
    for i in anchors:
        y = int(labels[i])
        d = {j: _cos_dist(rows[i], rows[j], sqrt) for j in range(n)}
        den_s = sum(d[j] for j in src)
        sub_s = list(subsets_source.get(y, []))
        if sub_s and den_s > 1e-12:
            first += sum(d[j] for j in sub_s) / den_s
        den_t = sum(d[j] for j in tl)
        sub_t = list(subsets_tl.get(y, []))
        if sub_t and den_t > 1e-12:
            second += sum(d[j] for j in sub_t) / den_t
        if in_tl[i] and sub_s:
            third += sum(d[j] for j in sub_s) / len(sub_s)
    total = (first + second) / len(anchors)
    if n_tl_anchor:
        total += third / n_tl_anchor
    return total


def brute_similarity(features, labels, in_source, in_tl, num_classes: int, k: int):
    """Score table S[i][c] by exhaustive neighbour enumeration."""
    rows = [[float(v) for v in r] for r in features]
    n = len(rows)
    dist = [[0.0 if i == j else _cos_dist(rows[i], rows[j]) for j in range(n)] for i in range(n)]
    knn = []
    for i in range(n):
        others = sorted((dist[i][j], j) for j in range(n) if j != i)
        knn.append({j for _, j in others[:k]})

    def bound(j):
        pool = [p for p in range(n) if (in_source[p] if in_source[j] else in_tl[p])]
        vals = [dist[j][p] for p in pool]
        mu = math.fsum(vals) / len(vals)
        var = math.fsum((v - mu) ** 2 for v in vals) / len(vals)
        return mu - 3 * math.sqrt(var)

    bounds = {j: bound(j) for j in range(n) if in_source[j] or in_tl[j]}
    scores = [[0] * num_classes for _ in range(n)]
    for i in range(n):
        for j in bounds:
            if j == i or not (j in knn[i] and i in knn[j]):
                continue
            if dist[i][j] < bounds[j]:
                scores[i][int(labels[j])] += 2 if in_tl[j] else 1
    return scores


def brute_pls(scores) -> frozenset:
    total = Fraction(sum(int(v) for v in scores))
    mean = total / len(scores)
    return frozenset(q for q, v in enumerate(scores) if v > 0 and Fraction(int(v)) > mean)


def brute_select_candidates(scores: Mapping[int, float], round_index: int, budget: int) -> list:
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return [i for i, _ in ranked[:min((round_index + 1) * budget, len(ranked))]]


def brute_diversity_filter(candidates, features: Mapping[int, Sequence[float]],
                           scores: Mapping[int, float], budget: int) -> list:
    cand = list(candidates)
    n = len(cand)
    if n > 1:
        div = {i: sum(_cos_dist(features[i], features[j]) for j in cand if j != i) / (n - 1)
               for i in cand}
    else:
        div = {cand[0]: 0.0}

    def norm(table):
        lo, hi = min(table.values()), max(table.values())
        if hi == lo:
            return {i: 0.5 for i in table}
        return {i: (v - lo) / (hi - lo) for i, v in table.items()}

    nd = norm(div)
    nu = norm({i: scores[i] for i in cand})
    key = {i: nd[i] * (1 + nu[i]) for i in cand}
    return sorted(cand, key=lambda i: (-key[i], i))[:budget]


# ---------------------------------------------------------------------------
# High-precision loss reference
# ---------------------------------------------------------------------------


def _mp_forward(p: dict, x):
    d_in, hidden = len(p["w1"]), len(p["b1"])
    d_feat, c = len(p["b2"]), len(p["bh"])
    h = [mp.tanh(mp.fsum(x[a] * p["w1"][a][b] for a in range(d_in)) + p["b1"][b])
         for b in range(hidden)]
    f = [mp.tanh(mp.fsum(h[a] * p["w2"][a][b] for a in range(hidden)) + p["b2"][b])
         for b in range(d_feat)]
    z = [mp.fsum(f[a] * p["wh"][a][b] for a in range(d_feat)) + p["bh"][b] for b in range(c)]
    if any(abs(v) >= 30 for v in z):
        raise ValueError("reference model hit the logit clamp; pick a smaller instance")
    return f, [mp.exp(v) for v in z]


def _mp_nll(alpha, y):
    return mp.log(mp.fsum(alpha)) - mp.log(alpha[y])


def _mp_kl(alpha, y):
    ah = [mp.mpf(1) if k == y else a for k, a in enumerate(alpha)]
    s = mp.fsum(ah)
    c = len(ah)
    return (mp.loggamma(s) - mp.fsum(mp.loggamma(a) for a in ah) - mp.loggamma(c)
            + mp.fsum((a - 1) * (mp.digamma(a) - mp.digamma(s)) for a in ah))


def mp_uncertainties(alpha, s):
    """(u_dom, u_pred) straight from the Dirichlet moment formula."""
    a0 = mp.fsum(alpha)
    terms = [mp.loggamma(a0) + mp.loggamma(a + s) - mp.loggamma(a) - mp.loggamma(a0 + s)
             for a in alpha]
    pred = mp.log(mp.fsum(mp.exp(t) for t in terms)) / (1 - s)
    renyi = mp.log(mp.fsum((a / a0) ** s for a in alpha)) / (1 - s)
    return renyi - pred, pred


def mp_total_loss(p: dict, s, batch: TrainBatch, cfg: LossConfig) -> dict:
    """Every loss component of one batch, evaluated at the working precision."""
    terms = cfg.terms
    sup = [_mp_forward(p, [mp.mpf(float(v)) for v in x])[1] for x in np.atleast_2d(batch.x_sup)]
    out = {k: mp.mpf(0) for k in ("nll", "kl", "align", "contrastive", "s_reg")}
    labelled = [(a, int(t)) for a, t in zip(sup, batch.targets) if not isinstance(t, (set, frozenset))]
    pseudo = [(a, sorted(t)) for a, t in zip(sup, batch.targets)
              if isinstance(t, (set, frozenset)) and t]
    for name, fn in (("nll", _mp_nll), ("kl", _mp_kl)):
        if name not in terms:
            continue
        val = mp.mpf(0)
        if labelled:
            val += mp.fsum(fn(a, y) for a, y in labelled) / len(labelled)
        if pseudo:
            val += mp.fsum(mp.fsum(fn(a, y) for y in ys) / len(ys) for a, ys in pseudo) / len(pseudo)
        out[name] = val
    unl = np.atleast_2d(batch.x_unl) if len(batch.x_unl) else []
    if "align" in terms and len(unl):
        vals = []
        for x in unl:
            dom, pred = mp_uncertainties(_mp_forward(p, [mp.mpf(float(v)) for v in x])[1], s)
            vals.append(cfg.lambda_dom * dom + cfg.lambda_pred * pred)
        out["align"] = mp.fsum(vals) / len(vals)
    if "contrastive" in terms and batch.x_ctx is not None and len(batch.anchors):
        feats = [_mp_forward(p, [mp.mpf(float(v)) for v in x])[0] for x in batch.x_ctx]
        out["contrastive"] = brute_contrastive(
            feats, batch.ctx_labels, batch.ctx_source, batch.ctx_tl, batch.anchors,
            {k: list(v) for k, v in batch.subsets_source.items()},
            {k: list(v) for k, v in batch.subsets_tl.items()}, sqrt=mp.sqrt)
    if "s_reg" in terms:
        out["s_reg"] = (s - mp.mpf("0.5")) ** 2
    out["total"] = (out["nll"] + out["kl"] + out["align"]
                    + cfg.lambda_c * out["contrastive"] + out["s_reg"])
    return out


def _mp_params(m: EvidentialModel) -> dict:
    def conv(a):
        return [conv(r) for r in a] if isinstance(a, list) else mp.mpf(a)
    return {k: conv(v.tolist()) for k, v in m.params().items()}


def fd_gradient(m: EvidentialModel, batch: TrainBatch, cfg: LossConfig, dps: int = 30,
                rel_step: float = 1e-5) -> dict[str, np.ndarray]:
    """Five-point central differences of the reference loss for every parameter and s.

    The step is ``rel_step * max(1, |θ|)``; at ``dps`` digits the stencil's
    rounding error is far below float64 resolution.
    """
    out: dict[str, np.ndarray] = {}
    with mp.workdps(dps):
        base = _mp_params(m)
        s0 = mp.mpf(m.s)

        def loss(p, s):
            return mp_total_loss(p, s, batch, cfg)["total"]

        def stencil(f, theta):
            h = mp.mpf(rel_step) * max(mp.mpf(1), abs(theta))
            return (-f(theta + 2 * h) + 8 * f(theta + h) - 8 * f(theta - h) + f(theta - 2 * h)) / (12 * h)

        for name in PARAM_NAMES:
            arr = getattr(m, name)
            g = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                def f(v, idx=idx):
                    p = {k: ([list(r) for r in val] if isinstance(val[0], list) else list(val))
                         for k, val in base.items()}
                    if len(idx) == 2:
                        p[name][idx[0]][idx[1]] = v
                    else:
                        p[name][idx[0]] = v
                    return loss(p, s0)
                cur = base[name][idx[0]][idx[1]] if len(idx) == 2 else base[name][idx[0]]
                g[idx] = float(stencil(f, cur))
            out[name] = g
        out["s"] = np.float64(float(stencil(lambda v: loss(base, v), s0)))
    return out


def tiny_case(seed: int) -> tuple[EvidentialModel, TrainBatch, LossConfig]:
    """A random 3-4-4-3 model with a batch touching every loss term.

    Two supervised rows (one labelled, one carrying a two-class pseudo label
    set), two unlabelled rows for the alignment term and a five-row context
    with source and labelled-target members for the contrastive term.
    """
    from .geometry import draw_subsets
    from .model import init_model

    rng = np.random.Generator(np.random.PCG64(seed))
    m = init_model(3, 4, 3, seed=int(rng.integers(2**31)), hidden=4)
    m.w1 *= 2.0
    m.w2 *= 2.0
    m.wh *= 3.0
    m.b1[:] = rng.normal(0, 0.3, 4)
    m.b2[:] = rng.normal(0, 0.3, 4)
    m.bh[:] = rng.normal(0, 0.5, 3)
    m.s = float(rng.uniform(0.15, 0.85))
    labels = np.array([0, 1, 0, 1, 0])
    in_source = np.array([True, True, True, False, False])
    in_tl = ~in_source
    pls = frozenset(int(q) for q in rng.choice(3, size=2, replace=False))
    batch = TrainBatch(
        x_sup=rng.normal(0, 1, (2, 3)), targets=[int(rng.integers(3)), pls],
        x_unl=rng.normal(0, 1, (2, 3)), x_ctx=rng.normal(0, 1, (5, 3)),
        ctx_labels=labels, ctx_source=in_source, ctx_tl=in_tl,
        anchors=np.array([0, 3]),
        subsets_source=draw_subsets(rng, labels, in_source, 2),
        subsets_tl=draw_subsets(rng, labels, in_tl, 2))
    lam = LossConfig(lambda_dom=7.0, lambda_pred=0.5, lambda_c=float(rng.uniform(0.5, 2.0)))
    return m, batch, lam
