"""Oracle suites shared by ``renyi-ada selftest`` and the acceptance tests.

Each suite returns a :class:`SuiteResult`; sizes are parameters so the
command-line self-test can run reduced versions of the full checks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import entropy
from .geometry import contrastive_loss, draw_subsets, pseudo_label_set, similarity_scores
from .oracles import (brute_contrastive, brute_diversity_filter, brute_pls, brute_select_candidates,
                      brute_similarity, fd_gradient, tiny_case)
from .selection import diversity_filter, select_candidates
from .training import backward


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@_timed
def mc_vs_closed_form(pairs: int = 100, n: int = 100_000, need: int | None = None,
                      seed: int = 11) -> SuiteResult:
    """u_pred against a Monte-Carlo estimate, counted within 3 standard errors."""
    need = int(np.ceil(0.97 * pairs)) if need is None else need
    rng = _rng(seed)
    ok = 0
    worst = 0.0
    for k in range(pairs):
        c = int(rng.integers(2, 12))
        alpha = rng.uniform(0.1, 50.0, size=c)
        s = float(rng.uniform(0.1, 0.9))
        est, se = entropy.mc_conditional_entropy(alpha, s, n, seed=seed * 1000 + k)
        z = abs(entropy.u_pred(alpha, s) - est) / se
        worst = max(worst, z)
        ok += z <= 3.0
    return SuiteResult("mc-vs-closed-form", ok >= need,
                       f"{ok}/{pairs} within 3 SE at n={n} (need {need}), max |z|={worst:.2f}")


@_timed
def non_negativity(draws: int = 10_000, seed: int = 12,
                   dom_fn: Callable | None = None) -> SuiteResult:
    """Domain uncertainty is never below -1e-8 over random (α, s)."""
    dom_fn = entropy.u_dom if dom_fn is None else dom_fn
    rng = _rng(seed)
    stats = entropy.ClampCounter()
    lowest = np.inf
    for _ in range(draws):
        c = int(rng.integers(2, 12))
        alpha = np.exp(rng.uniform(np.log(1e-3), np.log(1e4), size=c))
        s = float(rng.uniform(0.01, 0.99))
        try:
            v = float(dom_fn(alpha, s, stats))
        except entropy.NegativeUncertaintyError as exc:
            return SuiteResult("non-negativity", False, f"u_dom below -1e-8: {exc}")
        lowest = min(lowest, v)
        if v < -1e-8:
            return SuiteResult("non-negativity", False,
                               f"u_dom = {v:.3e} < -1e-8 at alpha={alpha.tolist()}, s={s:.4f}")
    return SuiteResult("non-negativity", True,
                       f"min u_dom {lowest:.3e} over {draws} draws; "
                       f"{stats.clamped} clamped from [-1e-8, 0)")


@_timed
def entropy_relations(n_p: int = 200, seed: int = 13) -> SuiteResult:
    """Shannon limit, Rényi ≥ Shannon and monotone decrease in s."""
    rng = _rng(seed)
    orders = np.round(np.arange(0.1, 0.91, 0.1), 10)
    worst_limit = 0.0
    problems = []
    for _ in range(n_p):
        p = rng.dirichlet(np.ones(int(rng.integers(2, 12))))
        h = entropy.shannon_entropy(p)
        worst_limit = max(worst_limit, abs(entropy.renyi_entropy(p, 0.999) - h))
        vals = [entropy.renyi_entropy(p, s) for s in orders]
        if min(vals) < h - 1e-12:
            problems.append("renyi below shannon")
        if any(b > a + 1e-12 for a, b in zip(vals, vals[1:])):
            problems.append("not monotone in s")
    if worst_limit > 1e-3:
        problems.append(f"limit gap {worst_limit:.2e}")
    return SuiteResult("entropy-relations", not problems,
                       f"{n_p} vectors, max |R(0.999)-H| = {worst_limit:.2e}"
                       + ("; " + ", ".join(sorted(set(problems))) if problems else ""))


@_timed
def gradient_fd(models: int = 20, seed: int = 14, tol: float = 1e-4) -> SuiteResult:
    """Analytic gradients against high-precision five-point differences."""
    worst = 0.0
    where = ""
    checked = 0
    for k in range(models):
        m, batch, cfg = tiny_case(seed * 100 + k)
        _, grads = backward(m, batch, cfg)
        ref = fd_gradient(m, batch, cfg)
        for name, g_fd in ref.items():
            a = np.atleast_1d(grads[name]).ravel()
            f = np.atleast_1d(g_fd).ravel()
            mask = np.abs(f) > 1e-8
            checked += int(mask.sum())
            if mask.any():
                rel = float(np.max(np.abs(a[mask] - f[mask]) / np.abs(f[mask])))
                if rel > worst:
                    worst, where = rel, f"model {k} param {name}"
    return SuiteResult("gradient-fd", worst < tol,
                       f"{models} models, {checked} components, max rel err {worst:.2e}"
                       + (f" at {where}" if worst >= tol else ""))


def _random_instance(rng: np.random.Generator):
    n = int(rng.integers(4, 11))
    c = int(rng.integers(2, 4))
    feats = rng.normal(0, 1, (n, int(rng.integers(2, 5))))
    # a few near-duplicates so some pairs pass the 3-sigma gate
    if n >= 6:
        feats[1] = feats[0] + rng.normal(0, 1e-3, feats.shape[1])
    labels = rng.integers(0, c, n)
    role = rng.integers(0, 3, n)  # 0 source, 1 labelled target, 2 unlabelled
    role[0] = 0
    in_s, in_tl = role == 0, role == 1
    return n, c, feats, labels, in_s, in_tl


@_timed
def brute_force(instances: int = 50, seed: int = 15) -> SuiteResult:
    """Vectorised latent-space routines against exhaustive scalar evaluation."""
    rng = _rng(seed)
    failures = []
    for t in range(instances):
        n, c, feats, labels, in_s, in_tl = _random_instance(rng)
        k = int(rng.integers(1, n))
        # contrastive
        lab_rows = np.flatnonzero(in_s | in_tl)
        anchors = np.sort(rng.choice(lab_rows, size=int(rng.integers(1, lab_rows.size + 1)),
                                     replace=False))
        sub_s = draw_subsets(rng, labels, in_s, 2)
        sub_t = draw_subsets(rng, labels, in_tl, 2)
        val, _ = contrastive_loss(feats, labels, in_s, in_tl, anchors, sub_s, sub_t)
        ref = brute_contrastive(feats.tolist(), labels, in_s, in_tl, anchors,
                                {q: v.tolist() for q, v in sub_s.items()},
                                {q: v.tolist() for q, v in sub_t.items()})
        if not np.isclose(val, ref, rtol=1e-10, atol=1e-12):
            failures.append(f"contrastive #{t}")
        # similarity and PLS
        sim = similarity_scores(feats, labels, in_s, in_tl, c, k).scores
        ref_sim = np.array(brute_similarity(feats, labels, in_s, in_tl, c, k))
        if not np.array_equal(sim, ref_sim):
            failures.append(f"similarity #{t}")
        rand_scores = rng.integers(0, 4, size=c)
        for row in list(sim) + [rand_scores]:
            if pseudo_label_set(row) != brute_pls(row.tolist()):
                failures.append(f"pls #{t}")
        # selection
        ids = rng.permutation(100)[:n].tolist()
        u = rng.choice([0.1, 0.5, 0.9], size=n) if t % 3 == 0 else rng.uniform(0, 3, n)
        scores = dict(zip(ids, u.tolist()))
        i_round = int(rng.integers(1, 6))
        budget = int(rng.integers(1, n + 1))
        cand = select_candidates(list(scores.items()), i_round, budget)
        if cand != brute_select_candidates(scores, i_round, budget):
            failures.append(f"select_candidates #{t}")
        nb = int(rng.integers(1, len(cand) + 1))
        fmap = {i: feats[j] for j, i in enumerate(ids)}
        got = diversity_filter(cand, np.stack([fmap[i] for i in cand]), scores, nb)
        want = brute_diversity_filter(cand, {i: fmap[i].tolist() for i in cand}, scores, nb)
        if got != want:
            failures.append(f"diversity_filter #{t}")
    return SuiteResult("brute-force", not failures,
                       f"{instances} instances x 5 routines"
                       + (f"; mismatches: {', '.join(failures[:5])}" if failures else ""))


def run_selftest(deep: bool = False, dom_fn: Callable | None = None) -> list[SuiteResult]:
    """The reduced oracle suite (``deep`` raises the Monte-Carlo n to 1e6)."""
    return [
        mc_vs_closed_form(pairs=20, n=1_000_000 if deep else 20_000, need=19),
        non_negativity(draws=2_000, dom_fn=dom_fn),
        entropy_relations(n_p=50),
        gradient_fd(models=4),
        brute_force(instances=20),
    ]
