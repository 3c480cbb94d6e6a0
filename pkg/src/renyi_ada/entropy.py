"""Rényi entropy and the Dirichlet-based domain / prediction uncertainties.

All functions accept either a single concentration vector of shape ``(C,)`` or
a batch ``(N, C)``; the class axis is always the last one. Natural logarithms
are used throughout.

Gamma ratios such as Γ(α0)Γ(αc+s) / (Γ(αc)Γ(α0+s)) are never formed directly:
α0 can exceed 700, where Γ overflows, so every such term is a difference of
log-gamma values reduced with log-sum-exp.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .special import digamma, digamma_diff, log_gamma_ratio

S_MIN = 0.0
S_MAX = 1.0
NEGATIVE_TOLERANCE = 1e-8


class NegativeUncertaintyError(ArithmeticError):
    """Domain uncertainty came out more negative than rounding can explain."""


# ---------------------------------------------------------------------------
# Validated value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbVector:
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 1 or p.size < 2:
            raise ValueError("probability vector needs at least two entries")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    def __array__(self, dtype=None, copy=None):
        return self.p if dtype is None else self.p.astype(dtype)


@dataclass(frozen=True)
class DirichletParams:
    alpha: np.ndarray
    alpha0: float = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.float64)
        if a.ndim != 1 or a.size < 2:
            raise ValueError("concentration vector needs at least two entries")
        if not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise ValueError("concentrations must be finite and > 0")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "alpha0", float(a.sum()))

    def __array__(self, dtype=None, copy=None):
        return self.alpha if dtype is None else self.alpha.astype(dtype)

    @property
    def num_classes(self) -> int:
        return self.alpha.size


@dataclass(frozen=True)
class RenyiOrder:
    s: float

    def __post_init__(self):
        s = float(self.s)
        if not (S_MIN < s < S_MAX):
            raise ValueError(f"Renyi order must lie in (0, 1), got {s!r}")
        object.__setattr__(self, "s", s)

    def __float__(self):
        return self.s


@dataclass(frozen=True)
class UncertaintyScore:
    u_dom: float
    u_pred: float
    u_total: float


class ClampCounter:
    """Counts domain-uncertainty values clamped from [-1e-8, 0) up to 0."""

    def __init__(self):
        self._lock = threading.Lock()
        self.clamped = 0
        self.evaluated = 0

    def add(self, clamped: int, evaluated: int) -> None:
        with self._lock:
            self.clamped += int(clamped)
            self.evaluated += int(evaluated)


def _order(s) -> float:
    s = float(s)
    if not (S_MIN < s < S_MAX):
        raise ValueError(f"Renyi order must lie in (0, 1), got {s!r}")
    return s


def _alpha(d) -> np.ndarray:
    a = np.asarray(d, dtype=np.float64)
    if a.shape[-1] < 2:
        raise ValueError("need at least two classes")
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise ValueError("concentrations must be finite and > 0")
    return a


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


# ---------------------------------------------------------------------------
# Entropies of a probability vector
# ---------------------------------------------------------------------------


def renyi_entropy(p, s):
    """(1/(1-s)) log Σ p_c^s; zero entries contribute nothing."""
    s = _order(s)
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    return _scalar(logsumexp(s * logp, axis=-1) / (1.0 - s))


def shannon_entropy(p):
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return _scalar(-terms.sum(axis=-1))


def posterior_predictive(d):
    """Expected class probabilities α_c / α_0."""
    a = _alpha(d)
    return a / a.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Uncertainties of a Dirichlet
# ---------------------------------------------------------------------------


def _log_moments(a: np.ndarray, s: float) -> np.ndarray:
    # log E[μ_c^s] under Dir(α) = lnΓ(α0) + lnΓ(αc+s) - lnΓ(αc) - lnΓ(α0+s)
    a0 = a.sum(axis=-1, keepdims=True)
    return log_gamma_ratio(a, s) - log_gamma_ratio(a0, s)


def u_pred(d, s):
    """Rényi conditional entropy of the label given μ ~ Dir(α)."""
    s = _order(s)
    a = _alpha(d)
    return _scalar(logsumexp(_log_moments(a, s), axis=-1) / (1.0 - s))


def _u_dom_raw(a: np.ndarray, s: float) -> np.ndarray:
    logp = np.log(a) - np.log(a.sum(axis=-1, keepdims=True))
    h = logsumexp(s * logp, axis=-1) / (1.0 - s)
    return h - logsumexp(_log_moments(a, s), axis=-1) / (1.0 - s)


def _clamp(raw: np.ndarray, stats: ClampCounter | None) -> np.ndarray:
    raw = np.asarray(raw)
    if np.any(raw < -NEGATIVE_TOLERANCE):
        worst = float(np.min(raw))
        raise NegativeUncertaintyError(
            f"domain uncertainty {worst:.3e} is below -{NEGATIVE_TOLERANCE:g}"
        )
    neg = raw < 0
    if stats is not None:
        stats.add(int(np.count_nonzero(neg)), raw.size)
    return np.where(neg, 0.0, raw)


def u_dom(d, s, stats: ClampCounter | None = None):
    """Rényi mutual information between the label and μ ~ Dir(α).

    Values in [-1e-8, 0) are rounding noise and are clamped to 0 (counted in
    ``stats`` when given); anything more negative raises.
    """
    s = _order(s)
    a = _alpha(d)
    return _scalar(_clamp(_u_dom_raw(a, s), stats))


def u_total(d, s, lambda_dom: float, lambda_pred: float, stats=None):
    if lambda_dom < 0 or lambda_pred < 0:
        raise ValueError("uncertainty weights must be non-negative")
    dom = u_dom(d, s, stats)
    pred = u_pred(d, s)
    total = lambda_dom * np.asarray(dom) + lambda_pred * np.asarray(pred)
    if np.ndim(total) == 0:
        return UncertaintyScore(float(dom), float(pred), float(total))
    return [UncertaintyScore(float(a), float(b), float(c))
            for a, b, c in zip(dom, pred, total)]


def combine(u_dom_value: float, u_pred_value: float, lambda_dom: float,
            lambda_pred: float) -> UncertaintyScore:
    return UncertaintyScore(
        float(u_dom_value), float(u_pred_value),
        float(lambda_dom * u_dom_value + lambda_pred * u_pred_value),
    )


# Shannon analogues (the s -> 1 limits), used by the "w/o Renyi" baseline.

def shannon_u_pred(d):
    """Expected entropy E_μ[H(μ)] = -Σ p_c (ψ(α_c+1) - ψ(α_0+1))."""
    a = _alpha(d)
    a0 = a.sum(axis=-1, keepdims=True)
    p = a / a0
    return _scalar(-(p * (digamma(a + 1.0) - digamma(a0 + 1.0))).sum(axis=-1))


def shannon_u_dom(d, stats: ClampCounter | None = None):
    """Shannon mutual information H(E[μ]) - E[H(μ)]."""
    a = _alpha(d)
    raw = shannon_entropy(posterior_predictive(a)) - np.asarray(shannon_u_pred(a))
    return _scalar(_clamp(raw, stats))


# ---------------------------------------------------------------------------
# Gradients with respect to the logits z (α = exp z) and the order s
# ---------------------------------------------------------------------------


def uncertainty_grads(alpha, s):
    """Values and gradients of u_dom and u_pred for a batch.

    Returns ``(u_dom, u_pred, du_dom_dz, du_pred_dz, du_dom_ds, du_pred_ds)``
    where z = log α. The gradient of the clamped u_dom is zero wherever the
    clamp is active.
    """
    s = _order(s)
    a = np.atleast_2d(_alpha(alpha))
    a0 = a.sum(axis=-1, keepdims=True)
    inv = 1.0 / (1.0 - s)

    lm = _log_moments(a, s)
    lse = logsumexp(lm, axis=-1, keepdims=True)
    w = np.exp(lm - lse)
    pred = inv * lse[:, 0]
    # d lm_c / dα_k = ψ(α0) - ψ(α0+s) + [c = k] (ψ(α_k+s) - ψ(α_k))
    dpred_da = inv * (-digamma_diff(a0, s) + w * digamma_diff(a, s))
    dpred_dz = dpred_da * a
    # d lm_c / ds = ψ(α_c+s) - ψ(α0+s)
    dlm_ds = digamma(a + s) - digamma(a0 + s)
    dpred_ds = inv * pred + inv * (w * dlm_ds).sum(axis=-1)

    logp = np.log(a) - np.log(a0)
    sl = s * logp
    lse_r = logsumexp(sl, axis=-1, keepdims=True)
    q = np.exp(sl - lse_r)
    p = a / a0
    renyi = inv * lse_r[:, 0]
    drenyi_dz = s * inv * (q - p)
    drenyi_ds = inv * renyi + inv * (q * logp).sum(axis=-1)

    raw = renyi - pred
    dom = _clamp(raw, None)
    live = (raw >= 0)[:, None]
    ddom_dz = np.where(live, drenyi_dz - dpred_dz, 0.0)
    ddom_ds = np.where(live[:, 0], drenyi_ds - dpred_ds, 0.0)
    return dom, pred, ddom_dz, dpred_dz, ddom_ds, dpred_ds


# ---------------------------------------------------------------------------
# Monte-Carlo oracle
# ---------------------------------------------------------------------------

MC_MIN_SAMPLES = 10_000
_MC_CHUNK = 200_000


def mc_conditional_entropy(d, s, n: int, seed: int) -> tuple[float, float]:
    """Monte-Carlo estimate of the conditional entropy integral.

    Draws ``n`` vectors μ ~ Dir(α) from ``numpy.random.Generator(PCG64(seed))``
    (per-component ``standard_gamma`` draws normalised to the simplex, in
    chunks of 200k rows) and returns ``(estimate, std_error)`` where

        estimate = (1/(1-s)) log mean_k Σ_c μ_kc^s

    and the standard error comes from the delta method. Only used to verify
    the closed form of :func:`u_pred`.
    """
    s = _order(s)
    a = _alpha(d)
    if a.ndim != 1:
        raise ValueError("mc_conditional_entropy takes a single concentration vector")
    n = int(n)
    if n < MC_MIN_SAMPLES:
        raise ValueError(f"need n >= {MC_MIN_SAMPLES}, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n:
        m = min(_MC_CHUNK, n - done)
        g = rng.standard_gamma(a, size=(m, a.size))
        mu = g / g.sum(axis=1, keepdims=True)
        v = (mu ** s).sum(axis=1)
        total += float(v.sum())
        total_sq += float((v * v).sum())
        done += m
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / (n - 1)
    se_mean = np.sqrt(var / n)
    inv = 1.0 / (1.0 - s)
    return inv * float(np.log(mean)), inv * float(se_mean / mean)
