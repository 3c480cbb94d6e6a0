"""Run configuration: strict JSON schema, semantic checks and named seed streams."""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from .data import DomainSpec

OUTPUT_ROOT_ENV = "RENYI_ADA_OUTPUT_ROOT"
SEED_STREAMS = ("data", "init", "subsets", "shuffle", "oracle", "select")


def benchmark_spec(seed: int = 0) -> DomainSpec:
    """Default benchmark: 6 classes in 8 dims, 60 samples per class and domain.

    Ten samples per class and domain are held out for testing, which leaves
    300 unlabelled target training samples so that 1% per round is exactly 3.
    Class centres sit 8 units from the origin with unit source noise.
    """
    return DomainSpec(num_classes=6, dim=8, per_class=60, radius=8.0, noise=1.0,
                      rotation_deg=35.0, scale=1.3, noise_ratio=1.5,
                      test_fraction=1.0 / 6.0, seed=seed)


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_FRACTION = {"type": "number", "exclusiveMinimum": 0, "maximum": 1}
_COUNT = {"type": "integer", "minimum": 1}

DATASET_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "num_classes": {"type": "integer", "minimum": 2},
        "dim": {"type": "integer", "minimum": 2},
        "per_class": {"type": "integer", "minimum": 4},
        "radius": _POS,
        "noise": {"type": "number", "minimum": 0},
        "rotation_deg": _NUM,
        "translation": {"type": "array", "items": _NUM},
        "scale": _POS,
        "noise_ratio": {"type": "number", "minimum": 0},
        "test_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "seed": {"type": ["integer", "null"], "minimum": 0},
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "dataset": {"oneOf": [DATASET_SCHEMA, {"type": "null"}]},
        "dataset_path": {"type": ["string", "null"]},
        "num_classes": {"type": ["integer", "null"], "minimum": 2},
        "d_in": {"type": ["integer", "null"], "minimum": 1},
        "d_feat": _COUNT,
        "hidden": _COUNT,
        "rounds": {"type": "integer", "minimum": 0},
        "budget_fraction": _FRACTION,
        "per_round_fraction": _FRACTION,
        "lambda_dom": {"type": "number", "minimum": 0},
        "lambda_pred": {"type": "number", "minimum": 0},
        "lambda_c": {"type": "number", "minimum": 0},
        "k": _COUNT,
        "batch_size": _COUNT,
        "s_init": {"type": "number", "minimum": 0.01, "maximum": 0.99},
        "lr_extractor": _POS,
        "lr_head": _POS,
        "momentum": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "epochs_pretrain": {"type": "integer", "minimum": 0},
        "epochs_round": {"type": "integer", "minimum": 0},
        "subset_size": _COUNT,
        "strategy": {"enum": ["renyi", "shannon", "random"]},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": ["string", "null"]},
    },
}


class ConfigError(ValueError):
    """All problems found in a configuration, listed together."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass
class RunConfig:
    dataset: dict | None = field(default_factory=lambda: {**benchmark_spec().to_dict(),
                                                          "seed": None})
    dataset_path: str | None = None
    num_classes: int | None = None
    d_in: int | None = None
    d_feat: int = 32
    hidden: int = 32
    rounds: int = 5
    budget_fraction: float = 0.05
    per_round_fraction: float = 0.01
    lambda_dom: float = 7.0
    lambda_pred: float = 0.5
    lambda_c: float = 1.0
    k: int = 5
    batch_size: int = 16
    s_init: float = 0.5
    lr_extractor: float = 5e-4
    lr_head: float = 5e-3
    momentum: float = 0.9
    epochs_pretrain: int = 100
    epochs_round: int = 30
    subset_size: int = 8
    strategy: str = "renyi"
    seed: int = 0
    output_dir: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        problems = validate_config_dict(raw)
        if problems:
            raise ConfigError(problems)
        raw = dict(raw)
        if raw.get("dataset_path") is not None and "dataset" not in raw:
            raw["dataset"] = None
        return cls(**raw)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"not valid JSON: {exc}"]) from None
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def replace(self, **changes) -> "RunConfig":
        return RunConfig.from_dict({**self.to_dict(), **changes})

    def domain_spec(self) -> DomainSpec:
        """The generator spec, with a missing seed derived from the root seed."""
        if self.dataset is None:
            raise ValueError("configuration uses dataset_path, not a generated dataset")
        base = {**benchmark_spec().to_dict(), **self.dataset}
        if base.get("seed") is None:
            base["seed"] = derive_seed(self.seed, "data")
        return DomainSpec.from_dict(base)

    def output_path(self) -> Path | None:
        if self.output_dir is None:
            return None
        p = Path(self.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        return p if p.is_absolute() or not root else Path(root) / p


def validate_config_dict(raw) -> list[str]:
    """Every schema and consistency problem in ``raw`` (empty list when valid)."""
    if not isinstance(raw, dict):
        return ["configuration must be a JSON object"]
    validator = Draft202012Validator(CONFIG_SCHEMA)
    problems = []
    for err in sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path))):
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        problems.append(f"{where}: {err.message}")
    if problems:
        return problems
    merged = {f.name: getattr(RunConfig(), f.name) for f in fields(RunConfig)}
    merged.update(raw)
    if merged["dataset_path"] is not None and "dataset" not in raw:
        merged["dataset"] = None
    if merged["dataset"] is None and merged["dataset_path"] is None:
        problems.append("one of dataset or dataset_path is required")
    if merged["dataset"] is not None and merged["dataset_path"] is not None:
        problems.append("dataset and dataset_path are mutually exclusive")
    if merged["rounds"] > 0:
        spent = merged["rounds"] * merged["per_round_fraction"]
        if abs(spent - merged["budget_fraction"]) > 1e-9:
            problems.append(
                f"rounds * per_round_fraction = {spent:g} does not equal budget_fraction "
                f"{merged['budget_fraction']:g}")
    if merged["dataset"] is not None and merged["dataset_path"] is None:
        spec = DomainSpec.from_dict({**benchmark_spec().to_dict(), **merged["dataset"],
                                     "seed": 0})
        try:
            spec.validate()
        except ValueError as exc:
            problems.append(f"dataset: {exc}")
        for key, want in (("num_classes", spec.num_classes), ("d_in", spec.dim)):
            if merged[key] is not None and merged[key] != want:
                problems.append(f"{key} = {merged[key]} disagrees with dataset ({want})")
    return problems


def derive_seed(root: int, name: str) -> int:
    """Independent 64-bit seed for a named stream of the root seed."""
    ss = np.random.SeedSequence(int(root), spawn_key=(zlib.crc32(name.encode("utf-8")),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stream(root: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(root, name)))
