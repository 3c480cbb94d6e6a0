"""Small evidential classifier: tanh MLP extractor, linear head, α = exp(logits).

Checkpoint layout (JSON, UTF-8, keys sorted)::

    {"format": "renyi-ada-checkpoint", "version": 1,
     "dims": {"d_in": .., "hidden": .., "d_feat": .., "classes": ..},
     "params": {"w1": [[..]], "b1": [..], "w2": .., "b2": .., "wh": .., "bh": ..},
     "s": <float>, "step": <int>}

Floats are written with ``repr`` precision so a save/load round trip is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .entropy import DirichletParams

LOGIT_CLAMP = 30.0
S_BOUNDS = (0.01, 0.99)
PARAM_NAMES = ("w1", "b1", "w2", "b2", "wh", "bh")
EXTRACTOR_PARAMS = ("w1", "b1", "w2", "b2")
CHECKPOINT_FORMAT = "renyi-ada-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class EvidentialModel:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    wh: np.ndarray
    bh: np.ndarray
    s: float = 0.5
    clamp_events: int = field(default=0, compare=False)

    @property
    def d_in(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def d_feat(self) -> int:
        return self.w2.shape[1]

    @property
    def num_classes(self) -> int:
        return self.wh.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "EvidentialModel":
        return EvidentialModel(**{k: v.copy() for k, v in self.params().items()},
                               s=self.s)

    def equals(self, other: "EvidentialModel") -> bool:
        """Bit-exact comparison of all parameters and s."""
        return self.s == other.s and all(
            a.shape == b.shape and np.array_equal(a, b)
            for a, b in zip(self.params().values(), other.params().values())
        )


@dataclass
class ForwardResult:
    features: np.ndarray
    logits: np.ndarray
    alpha: np.ndarray
    # intermediates kept for backprop
    x: np.ndarray = field(repr=False)
    h1: np.ndarray = field(repr=False)
    clamped: np.ndarray = field(repr=False)

    @property
    def dirichlet(self) -> DirichletParams:
        if self.alpha.ndim != 1:
            raise ValueError("dirichlet is only defined for a single sample; use .alpha")
        return DirichletParams(self.alpha)


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=(fan_in, fan_out))


def init_model(d_in: int, d_feat: int, c: int, seed: int,
               hidden: int | None = None) -> EvidentialModel:
    """Xavier-normal weights from ``Generator(PCG64(seed))``, drawn in the order
    w1, w2, wh; zero biases; s = 0.5."""
    hidden = d_feat if hidden is None else hidden
    for name, v in (("d_in", d_in), ("d_feat", d_feat), ("classes", c), ("hidden", hidden)):
        if int(v) < 1:
            raise ValueError(f"{name} must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    w1 = _xavier(rng, d_in, hidden)
    w2 = _xavier(rng, hidden, d_feat)
    wh = _xavier(rng, d_feat, c)
    return EvidentialModel(w1=w1, b1=np.zeros(hidden), w2=w2, b2=np.zeros(d_feat),
                           wh=wh, bh=np.zeros(c), s=0.5)


def forward(m: EvidentialModel, x) -> ForwardResult:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[-1] != m.d_in:
        raise ValueError(f"expected input dimension {m.d_in}, got {x2.shape[-1]}")
    if not np.all(np.isfinite(x2)):
        raise ValueError("input contains non-finite values")
    h1 = np.tanh(x2 @ m.w1 + m.b1)
    feats = np.tanh(h1 @ m.w2 + m.b2)
    logits = feats @ m.wh + m.bh
    clamped = np.abs(logits) > LOGIT_CLAMP
    if clamped.any():
        m.clamp_events += int(clamped.sum())
    alpha = np.exp(np.clip(logits, -LOGIT_CLAMP, LOGIT_CLAMP))
    if single:
        return ForwardResult(feats[0], logits[0], alpha[0], x2, h1, clamped)
    return ForwardResult(feats, logits, alpha, x2, h1, clamped)


def backprop(m: EvidentialModel, fr: ForwardResult, d_logits: np.ndarray,
             d_features: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Parameter gradients given upstream gradients on logits and features."""
    d_logits = np.where(fr.clamped, 0.0, np.atleast_2d(d_logits))
    feats = np.atleast_2d(fr.features)
    grads = {"wh": feats.T @ d_logits, "bh": d_logits.sum(axis=0)}
    d_f = d_logits @ m.wh.T
    if d_features is not None:
        d_f = d_f + np.atleast_2d(d_features)
    d_z2 = d_f * (1.0 - feats * feats)
    grads["w2"] = fr.h1.T @ d_z2
    grads["b2"] = d_z2.sum(axis=0)
    d_h1 = d_z2 @ m.w2.T
    d_z1 = d_h1 * (1.0 - fr.h1 * fr.h1)
    grads["w1"] = fr.x.T @ d_z1
    grads["b1"] = d_z1.sum(axis=0)
    return grads


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def checkpoint_dict(m: EvidentialModel, step: int = 0) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": {"d_in": m.d_in, "hidden": m.hidden, "d_feat": m.d_feat,
                 "classes": m.num_classes},
        "params": {k: v.tolist() for k, v in m.params().items()},
        "s": float(m.s),
        "step": int(step),
    }


def save_checkpoint(path, m: EvidentialModel, step: int = 0) -> None:
    text = json.dumps(checkpoint_dict(m, step), sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[EvidentialModel, int]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {data.get('version')!r}")
    dims = data["dims"]
    p = {k: np.asarray(data["params"][k], dtype=np.float64) for k in PARAM_NAMES}
    expected = {
        "w1": (dims["d_in"], dims["hidden"]), "b1": (dims["hidden"],),
        "w2": (dims["hidden"], dims["d_feat"]), "b2": (dims["d_feat"],),
        "wh": (dims["d_feat"], dims["classes"]), "bh": (dims["classes"],),
    }
    for k, shape in expected.items():
        if p[k].shape != shape:
            raise ValueError(f"{path}: parameter {k} has shape {p[k].shape}, expected {shape}")
    return EvidentialModel(**p, s=float(data["s"])), int(data["step"])
