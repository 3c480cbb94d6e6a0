"""Synthetic two-domain classification data and its CSV persistence.

Class ``c`` is centred on a circle of radius ``radius`` in the (f0, f1) plane
(remaining dimensions zero). The target domain draws with inflated noise and
then applies ``x -> scale * R(rotation) x + translation``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

DOMAINS = ("source", "target")
SPLITS = ("train", "test")
_META_PREFIX = "# renyi-ada-dataset "


@dataclass(frozen=True)
class DomainSpec:
    num_classes: int = 6
    dim: int = 8
    per_class: int = 60
    radius: float = 3.0
    noise: float = 1.0
    rotation_deg: float = 35.0
    translation: tuple = ()
    scale: float = 1.3
    noise_ratio: float = 1.5
    test_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "translation", tuple(float(t) for t in self.translation))

    @property
    def n_test(self) -> int:
        return int(round(self.per_class * self.test_fraction))

    @property
    def shift_vector(self) -> np.ndarray:
        t = np.zeros(self.dim)
        t[:len(self.translation)] = self.translation
        return t

    def validate(self) -> None:
        errors = []
        if self.num_classes < 2:
            errors.append(f"num_classes must be >= 2 (got {self.num_classes})")
        if self.dim < 2:
            errors.append(f"dim must be >= 2 (got {self.dim})")
        if self.per_class < 4:
            errors.append(f"per_class must be >= 4 (got {self.per_class})")
        if not self.scale > 0:
            errors.append(f"scale must be > 0 (got {self.scale})")
        if not self.noise >= 0:
            errors.append(f"noise must be >= 0 (got {self.noise})")
        if not self.noise_ratio >= 0:
            errors.append(f"noise_ratio must be >= 0 (got {self.noise_ratio})")
        if not self.radius > 0:
            errors.append(f"radius must be > 0 (got {self.radius})")
        if len(self.translation) not in (0, self.dim):
            errors.append(f"translation must have {self.dim} entries (got {len(self.translation)})")
        if self.per_class >= 4 and not 1 <= self.n_test <= self.per_class - 1:
            errors.append(f"test_fraction {self.test_fraction} leaves no train or no test samples")
        if errors:
            raise ValueError("invalid DomainSpec: " + "; ".join(errors))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["translation"] = list(self.translation)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        return cls(**{**d, "translation": tuple(d.get("translation", ()))})


@dataclass(frozen=True)
class Sample:
    id: int
    features_raw: np.ndarray
    domain: str
    true_label: int


@dataclass
class DatasetBundle:
    ids: np.ndarray
    features: np.ndarray
    domains: np.ndarray
    splits: np.ndarray
    labels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.features = np.asarray(self.features, dtype=np.float64)
        self.domains = np.asarray(self.domains, dtype=object)
        self.splits = np.asarray(self.splits, dtype=object)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = len(self.ids)
        if not (len(self.features) == len(self.domains) == len(self.splits) == len(self.labels) == n):
            raise ValueError("bundle columns have different lengths")
        if len(np.unique(self.ids)) != n:
            raise ValueError("sample ids are not unique")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.meta.get("num_classes", int(self.labels.max()) + 1))

    @property
    def samples(self) -> list[Sample]:
        return [Sample(int(i), f, str(d), int(y))
                for i, f, d, y in zip(self.ids, self.features, self.domains, self.labels)]

    @property
    def split_map(self) -> dict[int, str]:
        return {int(i): str(s) for i, s in zip(self.ids, self.splits)}

    def mask(self, domain: str | None = None, split: str | None = None) -> np.ndarray:
        m = np.ones(len(self), dtype=bool)
        if domain is not None:
            m &= self.domains == domain
        if split is not None:
            m &= self.splits == split
        return m

    def equals(self, other: "DatasetBundle") -> bool:
        return (np.array_equal(self.ids, other.ids)
                and self.features.shape == other.features.shape
                and np.array_equal(self.features, other.features)
                and list(self.domains) == list(other.domains)
                and list(self.splits) == list(other.splits)
                and np.array_equal(self.labels, other.labels)
                and self.meta == other.meta)


def _rotation(dim: int, degrees: float) -> np.ndarray:
    r = np.eye(dim)
    t = math.radians(degrees)
    r[:2, :2] = [[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]]
    return r


def generate(spec: DomainSpec) -> DatasetBundle:
    """Deterministic two-domain dataset with a class- and domain-stratified split."""
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    c, d, n = spec.num_classes, spec.dim, spec.per_class
    angles = 2.0 * np.pi * np.arange(c) / c
    centers = np.zeros((c, d))
    centers[:, 0] = spec.radius * np.cos(angles)
    centers[:, 1] = spec.radius * np.sin(angles)
    affine = spec.scale * _rotation(d, spec.rotation_deg)
    shift = spec.shift_vector

    feats, doms, splits, labels = [], [], [], []
    for domain in DOMAINS:
        sigma = spec.noise if domain == "source" else spec.noise * spec.noise_ratio
        y = np.repeat(np.arange(c), n)
        x = centers[y] + sigma * rng.standard_normal((c * n, d))
        if domain == "target":
            x = x @ affine.T + shift
        split = np.empty(c * n, dtype=object)
        for k in range(c):
            rows = np.flatnonzero(y == k)
            test = rng.permutation(rows)[:spec.n_test]
            split[rows] = "train"
            split[test] = "test"
        # interleave classes so ids carry no class order
        order = rng.permutation(c * n)
        feats.append(x[order])
        doms.extend([domain] * (c * n))
        splits.extend(split[order])
        labels.append(y[order])
    features = np.concatenate(feats)
    meta = {"num_classes": c, "dim": d, "spec": spec.to_dict()}
    return DatasetBundle(np.arange(len(features)), features, doms, splits,
                         np.concatenate(labels), meta)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _header(dim: int) -> list[str]:
    return ["id", "domain", "split", "label"] + [f"f{j}" for j in range(dim)]


def to_csv_text(bundle: DatasetBundle) -> str:
    buf = io.StringIO()
    buf.write(_META_PREFIX + json.dumps(bundle.meta, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_header(bundle.dim))
    for i in range(len(bundle)):
        w.writerow([int(bundle.ids[i]), bundle.domains[i], bundle.splits[i], int(bundle.labels[i])]
                   + [repr(float(v)) for v in bundle.features[i]])
    return buf.getvalue()


def save_csv(bundle: DatasetBundle, path) -> None:
    Path(path).write_text(to_csv_text(bundle), encoding="utf-8")


class DatasetParseError(ValueError):
    pass


def load_csv(path) -> DatasetBundle:
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        raise DatasetParseError(f"{path}: empty file")
    lines = text.splitlines()
    meta: dict = {}
    start = 0
    if lines[0].startswith(_META_PREFIX):
        try:
            meta = json.loads(lines[0][len(_META_PREFIX):])
        except json.JSONDecodeError as exc:
            raise DatasetParseError(f"{path}:1: bad metadata header: {exc}") from None
        start = 1
    rows = list(csv.reader(lines[start:]))
    if not rows:
        raise DatasetParseError(f"{path}: missing column header")
    header = rows[0]
    hline = start + 1
    dim = len(header) - 4
    if dim < 1:
        raise DatasetParseError(f"{path}:{hline}: header needs id,domain,split,label and features")
    for j, (got, want) in enumerate(zip(header, _header(dim))):
        if got.strip() != want:
            raise DatasetParseError(
                f"{path}:{hline}: column {j + 1} is '{got}', expected '{want}'")
    if len(rows) == 1:
        raise DatasetParseError(f"{path}: no data rows")

    ids, doms, splits, labels, feats = [], [], [], [], []
    for offset, row in enumerate(rows[1:]):
        line = hline + 1 + offset
        if len(row) != len(header):
            raise DatasetParseError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
        try:
            ids.append(int(row[0]))
            label = int(row[3])
            vec = [float(v) for v in row[4:]]
        except ValueError as exc:
            raise DatasetParseError(f"{path}:{line}: {exc}") from None
        if row[1] not in DOMAINS:
            raise DatasetParseError(f"{path}:{line}: domain '{row[1]}' not in {DOMAINS}")
        if row[2] not in SPLITS:
            raise DatasetParseError(f"{path}:{line}: split '{row[2]}' not in {SPLITS}")
        if label < 0:
            raise DatasetParseError(f"{path}:{line}: negative label {label}")
        if not all(math.isfinite(v) for v in vec):
            raise DatasetParseError(f"{path}:{line}: non-finite feature value")
        doms.append(row[1])
        splits.append(row[2])
        labels.append(label)
        feats.append(vec)
    if len(set(ids)) != len(ids):
        raise DatasetParseError(f"{path}: duplicate sample ids")
    if "num_classes" not in meta:
        meta = {**meta, "num_classes": max(labels) + 1, "dim": dim}
    return DatasetBundle(ids, np.array(feats), doms, splits, labels, meta)
