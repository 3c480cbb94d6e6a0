"""Total-loss assembly, analytic gradients and momentum SGD with cosine annealing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .geometry import contrastive_loss
from .losses import (LossBreakdown, Target, alignment_terms, edl_coefficients,
                     edl_terms, s_regularizer, s_regularizer_grad)
from .model import EXTRACTOR_PARAMS, PARAM_NAMES, S_BOUNDS, EvidentialModel, backprop, forward

ALL_TERMS = frozenset({"nll", "kl", "align", "contrastive", "s_reg"})
EDL_ONLY = frozenset({"nll", "kl"})


@dataclass(frozen=True)
class LossConfig:
    lambda_dom: float = 7.0
    lambda_pred: float = 0.5
    lambda_c: float = 1.0
    terms: frozenset = ALL_TERMS


@dataclass
class TrainBatch:
    """Everything one optimisation step looks at.

    ``x_sup``/``targets`` feed the evidential loss, ``x_unl`` the alignment
    loss, and the ``ctx_*`` fields the contrastive loss (``anchors`` index
    into the context rows).
    """
    x_sup: np.ndarray
    targets: Sequence[Target]
    x_unl: np.ndarray
    x_ctx: np.ndarray | None = None
    ctx_labels: np.ndarray | None = None
    ctx_source: np.ndarray | None = None
    ctx_tl: np.ndarray | None = None
    anchors: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    subsets_source: Mapping[int, np.ndarray] = field(default_factory=dict)
    subsets_tl: Mapping[int, np.ndarray] = field(default_factory=dict)


def _check_finite(term: str, *arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError(f"non-finite gradient in loss term '{term}'")


def backward(m: EvidentialModel, batch: TrainBatch,
             cfg: LossConfig = LossConfig()) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
    """Loss breakdown and analytic gradients of the total loss.

    The returned gradient record has one array per model parameter plus the
    scalar ``"s"``.
    """
    d_in = m.d_in
    x_sup = np.asarray(batch.x_sup, dtype=np.float64).reshape(-1, d_in)
    x_unl = np.asarray(batch.x_unl, dtype=np.float64).reshape(-1, d_in)
    use_ctx = "contrastive" in cfg.terms and batch.x_ctx is not None and len(batch.anchors) > 0
    x_ctx = (np.asarray(batch.x_ctx, dtype=np.float64).reshape(-1, d_in)
             if use_ctx else np.empty((0, d_in)))
    n1, n2 = len(x_sup), len(x_unl)
    fr = forward(m, np.concatenate([x_sup, x_unl, x_ctx]))
    alpha = fr.alpha
    c = m.num_classes
    d_logits = np.zeros((len(alpha), c))
    d_feat = np.zeros_like(fr.features)
    ds = 0.0

    nll = kl = align = contrast = sreg = 0.0
    if n1 and ({"nll", "kl"} & cfg.terms):
        coef = edl_coefficients(batch.targets, c)
        nll_v, kl_v, g_nll, g_kl = edl_terms(alpha[:n1], coef)
        if "nll" in cfg.terms:
            _check_finite("nll", g_nll)
            nll = nll_v
            d_logits[:n1] += g_nll
        if "kl" in cfg.terms:
            _check_finite("kl", g_kl)
            kl = kl_v
            d_logits[:n1] += g_kl
    if n2 and "align" in cfg.terms:
        align, g_al, g_s = alignment_terms(alpha[n1:n1 + n2], m.s,
                                           cfg.lambda_dom, cfg.lambda_pred)
        _check_finite("align", g_al, g_s)
        d_logits[n1:n1 + n2] += g_al
        ds += g_s
    if use_ctx:
        contrast, g_f = contrastive_loss(
            fr.features[n1 + n2:], batch.ctx_labels, batch.ctx_source, batch.ctx_tl,
            batch.anchors, batch.subsets_source, batch.subsets_tl)
        _check_finite("contrastive", g_f)
        d_feat[n1 + n2:] += cfg.lambda_c * g_f
    if "s_reg" in cfg.terms:
        sreg = s_regularizer(m.s)
        ds += s_regularizer_grad(m.s)

    grads = backprop(m, fr, d_logits, d_feat)
    grads["s"] = np.float64(ds)
    edl = nll + kl
    total = edl + align + cfg.lambda_c * contrast + sreg
    return LossBreakdown(nll, kl, edl, align, contrast, sreg, total, cfg.lambda_c), grads


def total_loss(m: EvidentialModel, batch: TrainBatch, cfg: LossConfig = LossConfig()) -> float:
    return backward(m, batch, cfg)[0].total


# ---------------------------------------------------------------------------
# Optimiser
# ---------------------------------------------------------------------------


@dataclass
class OptimizerState:
    total_steps: int
    lr_extractor: float = 5e-4
    lr_other: float = 5e-3
    momentum: float = 0.9
    step: int = 0
    velocity: dict = field(default_factory=dict)

    def lr_factor(self, t: int | None = None) -> float:
        """Cosine annealing factor 0.5 (1 + cos(π t / T)), held at 0 past T."""
        t = self.step if t is None else t
        if self.total_steps <= 0:
            return 0.0
        t = min(t, self.total_steps)
        return 0.5 * (1.0 + math.cos(math.pi * t / self.total_steps))

    def lr_for(self, name: str) -> float:
        base = self.lr_extractor if name in EXTRACTOR_PARAMS or name == "s" else self.lr_other
        return base * self.lr_factor()


def sgd_step(m: EvidentialModel, grads: Mapping[str, np.ndarray],
             opt: OptimizerState) -> tuple[EvidentialModel, OptimizerState]:
    """One momentum step with per-group rates; s is projected into [0.01, 0.99]."""
    for name in PARAM_NAMES + ("s",):
        g = np.asarray(grads[name], dtype=np.float64)
        v = opt.velocity.get(name)
        v = g.copy() if v is None else opt.momentum * v + g
        opt.velocity[name] = v
        lr = opt.lr_for(name)
        if name == "s":
            m.s = float(np.clip(m.s - lr * float(v), *S_BOUNDS))
        else:
            getattr(m, name)[...] -= lr * v
    opt.step += 1
    return m, opt
