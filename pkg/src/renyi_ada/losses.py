"""Evidential, alignment and order-regularisation losses with logit gradients.

The NLL uses the non-negative convention log α0 - log α_y. Every batch function
returns the loss together with its gradient with respect to the logits
z = log α (and with respect to s where s enters).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .entropy import _alpha, uncertainty_grads
from .special import digamma_diff, log_gamma, log_gamma_ratio, trigamma

Target = Union[int, frozenset, set]


@dataclass(frozen=True)
class LossBreakdown:
    nll: float
    kl: float
    edl: float
    align: float
    contrastive: float
    s_reg: float
    total: float
    lambda_c: float = 1.0

    def as_dict(self) -> dict[str, float]:
        return {"nll": self.nll, "kl": self.kl, "edl": self.edl, "align": self.align,
                "contrastive": self.contrastive, "s_reg": self.s_reg, "total": self.total}


# ---------------------------------------------------------------------------
# Per-(sample, label) matrices
# ---------------------------------------------------------------------------


def nll_matrix(alpha) -> np.ndarray:
    """NLL[i, y] = log α0_i - log α_iy for every candidate label y."""
    a = np.atleast_2d(_alpha(alpha))
    return np.log(a.sum(axis=1, keepdims=True)) - np.log(a)


def _masked_alpha(a: np.ndarray) -> np.ndarray:
    # ahat[i, y, k] = 1 if k == y else α_ik
    c = a.shape[1]
    eye = np.eye(c, dtype=bool)
    return np.where(eye[None, :, :], 1.0, a[:, None, :])


def kl_matrix(alpha) -> np.ndarray:
    """KL[Dir(α̂) || Dir(1)] for every candidate label, α̂ = α with α̂_y = 1."""
    a = np.atleast_2d(_alpha(alpha))
    c = a.shape[1]
    ah = _masked_alpha(a)
    total = ah.sum(axis=2, keepdims=True)
    # lnΓ(S) - lnΓ(α̂_max) via the ratio helper keeps precision when one class dominates
    kmax = np.argmax(ah, axis=2)[..., None]
    amax = np.take_along_axis(ah, kmax, axis=2)
    rest = total - amax
    lg = log_gamma(ah)
    lg_rest = lg.sum(axis=2, keepdims=True) - np.take_along_axis(lg, kmax, axis=2)
    base = log_gamma_ratio(amax, rest) - lg_rest - log_gamma(float(c))
    # ψ(α̂_c) - ψ(S) = -(ψ(α̂_c + (S - α̂_c)) - ψ(α̂_c))
    others = total - ah
    dpsi = -digamma_diff(ah, others)
    body = ((ah - 1.0) * dpsi).sum(axis=2, keepdims=True)
    return (base + body)[..., 0]


def _kl_grad_tensor(a: np.ndarray) -> np.ndarray:
    # d KL[i, y] / d z_ik  (zero for k == y because α̂_y is pinned to 1)
    c = a.shape[1]
    ah = _masked_alpha(a)
    total = ah.sum(axis=2, keepdims=True)
    g = (ah - 1.0) * trigamma(ah) - trigamma(total) * (ah - 1.0).sum(axis=2, keepdims=True)
    eye = np.eye(c, dtype=bool)[None, :, :]
    return np.where(eye, 0.0, g * a[:, None, :])


def nll_loss(d, y: int) -> float:
    a = _alpha(d)
    _check_label(y, a.shape[-1])
    return float(nll_matrix(a)[0, y])


def kl_loss(d, y: int) -> float:
    a = _alpha(d)
    _check_label(y, a.shape[-1])
    return float(kl_matrix(a)[0, y])


def _check_label(y, c: int) -> None:
    if not (0 <= int(y) < c):
        raise ValueError(f"label {y} outside 0..{c - 1}")


# ---------------------------------------------------------------------------
# Batch losses
# ---------------------------------------------------------------------------


def edl_coefficients(targets: Sequence[Target], num_classes: int) -> np.ndarray:
    """Weights w[i, y] such that edl = Σ w ⊙ (NLL + KL).

    An ``int`` target is a labelled sample (D_S or D_Tl); a set is the pseudo
    label set of an unlabelled sample. Labelled samples are averaged together;
    unlabelled samples with a non-empty set are averaged separately, each
    spreading its weight evenly over its set. Empty sets contribute nothing.
    """
    coef = np.zeros((len(targets), num_classes))
    labelled = [i for i, t in enumerate(targets) if not isinstance(t, (set, frozenset))]
    pseudo = [i for i, t in enumerate(targets)
              if isinstance(t, (set, frozenset)) and len(t) > 0]
    for i in labelled:
        _check_label(targets[i], num_classes)
        coef[i, int(targets[i])] = 1.0 / len(labelled)
    for i in pseudo:
        labels = sorted(targets[i])
        for y in labels:
            _check_label(y, num_classes)
            coef[i, y] = 1.0 / (len(pseudo) * len(labels))
    return coef


def edl_terms(alpha, coef: np.ndarray):
    """Return (nll, kl, d_nll/dz, d_kl/dz) for a batch with weights ``coef``."""
    a = np.atleast_2d(_alpha(alpha))
    if not coef.any():
        zero = np.zeros_like(a)
        return 0.0, 0.0, zero, zero.copy()
    nll = float((coef * nll_matrix(a)).sum())
    kl = float((coef * kl_matrix(a)).sum())
    p = a / a.sum(axis=1, keepdims=True)
    # d NLL[i, y] / dz_ik = p_ik - [k == y]
    d_nll = coef.sum(axis=1, keepdims=True) * p - coef
    d_kl = np.einsum("iy,iyk->ik", coef, _kl_grad_tensor(a))
    return nll, kl, d_nll, d_kl


def edl_loss(alphas, targets: Sequence[Target]) -> float:
    a = np.atleast_2d(_alpha(alphas))
    nll, kl, _, _ = edl_terms(a, edl_coefficients(targets, a.shape[1]))
    return nll + kl


def alignment_terms(alpha, s: float, lambda_dom: float, lambda_pred: float):
    """Mean of λ_dom·u_dom + λ_pred·u_pred over the batch, with gradients.

    Returns ``(value, d/dz, d/ds)``; an empty batch gives ``(0, empty, 0)``.
    """
    a = np.asarray(alpha, dtype=np.float64)
    if a.size == 0:
        return 0.0, np.zeros_like(np.atleast_2d(a)), 0.0
    dom, pred, ddom_dz, dpred_dz, ddom_ds, dpred_ds = uncertainty_grads(a, s)
    n = dom.shape[0]
    value = float((lambda_dom * dom + lambda_pred * pred).mean())
    dz = (lambda_dom * ddom_dz + lambda_pred * dpred_dz) / n
    ds = float((lambda_dom * ddom_ds + lambda_pred * dpred_ds).sum() / n)
    return value, dz, ds


def alignment_loss(batch: Iterable, s: float, lambda_dom: float, lambda_pred: float) -> float:
    rows = [np.asarray(d, dtype=np.float64) for d in batch]
    if not rows:
        return 0.0
    return alignment_terms(np.stack(rows), s, lambda_dom, lambda_pred)[0]


def s_regularizer(s: float) -> float:
    return (float(s) - 0.5) ** 2


def s_regularizer_grad(s: float) -> float:
    return 2.0 * (float(s) - 0.5)
