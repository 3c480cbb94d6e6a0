"""The multi-round active domain adaptation loop.

Learner-visible labels live in ``AdaState.known``: source training labels
from the start, target labels only once the oracle has revealed them. The
bundle's target labels are read by the oracle and by evaluation, nowhere else.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .config import RunConfig, stream
from .data import DatasetBundle, generate, load_csv
from .entropy import ClampCounter, u_dom
from .geometry import draw_subsets, pseudo_label_set, similarity_scores
from .losses import LossBreakdown
from .metrics import MetricsRecord, evaluate
from .model import EvidentialModel, forward, init_model
from .selection import (diversity_filter, random_selection, score_unlabeled,
                        select_candidates)
from .training import ALL_TERMS, EDL_ONLY, LossConfig, OptimizerState, TrainBatch, backward, sgd_step


class OracleError(KeyError):
    pass


class LabelOracle:
    """Reveals target labels on request; unknown ids abort the run."""

    def __init__(self, labels: Mapping[int, int]):
        self._labels = {int(k): int(v) for k, v in labels.items()}
        self.queries = 0

    def reveal(self, ids) -> dict[int, int]:
        out = {}
        for i in ids:
            if int(i) not in self._labels:
                raise OracleError(f"oracle has no label for sample id {int(i)}")
            out[int(i)] = self._labels[int(i)]
        self.queries += len(out)
        return out


@dataclass(frozen=True)
class PoolState:
    source_labeled: frozenset
    target_labeled: frozenset
    target_unlabeled: frozenset

    def __post_init__(self):
        s, tl, tu = self.source_labeled, self.target_labeled, self.target_unlabeled
        if (s & tl) or (s & tu) or (tl & tu):
            raise ValueError("pools D_S, D_Tl, D_Tu must be pairwise disjoint")

    def label(self, ids) -> "PoolState":
        ids = frozenset(int(i) for i in ids)
        if not ids <= self.target_unlabeled:
            raise ValueError("only unlabelled target samples can be labelled")
        return PoolState(self.source_labeled, self.target_labeled | ids,
                         self.target_unlabeled - ids)


@dataclass
class AdaState:
    pools: PoolState
    known: dict  # id -> label, learner-visible


@dataclass
class Workspace:
    """Static per-run arrays: the training context D_S ∪ D_T and the test splits."""
    bundle: DatasetBundle
    num_classes: int
    ctx_ids: np.ndarray
    ctx_x: np.ndarray
    pos: dict
    test_source: np.ndarray
    test_target: np.ndarray

    @classmethod
    def build(cls, bundle: DatasetBundle) -> "Workspace":
        train = bundle.mask(split="train")
        order = np.argsort(bundle.ids[train], kind="stable")
        rows = np.flatnonzero(train)[order]
        ids = bundle.ids[rows]
        return cls(bundle, bundle.num_classes, ids, bundle.features[rows],
                   {int(i): p for p, i in enumerate(ids)},
                   bundle.mask("source", "test"), bundle.mask("target", "test"))

    def rows(self, ids) -> np.ndarray:
        return np.array([self.pos[int(i)] for i in ids], dtype=np.int64)


@dataclass
class RoundReport:
    round: int
    strategy: str
    budget: int
    candidates: list
    selected: list
    selected_scores: list
    selected_label_counts: list
    target_labeled_counts: list
    pls_nonempty_before: int
    pls_nonempty_train: int
    pls_hit_rate: float | None
    s: float
    loss_curve: list
    evaluation: dict

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _label_array(ws: Workspace, known: Mapping[int, int]) -> np.ndarray:
    lab = np.full(len(ws.ctx_ids), -1, dtype=np.int64)
    for i, y in known.items():
        lab[ws.pos[i]] = y
    return lab


def _masks(ws: Workspace, pools: PoolState) -> tuple[np.ndarray, np.ndarray]:
    in_s = np.zeros(len(ws.ctx_ids), dtype=bool)
    in_tl = np.zeros(len(ws.ctx_ids), dtype=bool)
    in_s[ws.rows(sorted(pools.source_labeled))] = True
    if pools.target_labeled:
        in_tl[ws.rows(sorted(pools.target_labeled))] = True
    return in_s, in_tl


def pseudo_label_sets(model: EvidentialModel, ws: Workspace, state: AdaState,
                      k: int) -> dict[int, frozenset]:
    """Fresh PLS for every D_Tu member from the current latent features."""
    feats = forward(model, ws.ctx_x).features
    in_s, in_tl = _masks(ws, state.pools)
    sim = similarity_scores(feats, _label_array(ws, state.known), in_s, in_tl,
                            ws.num_classes, k)
    return {i: pseudo_label_set(sim.scores[ws.pos[i]]) for i in sorted(state.pools.target_unlabeled)}


def _mean_breakdown(parts: list[LossBreakdown]) -> dict:
    keys = ("nll", "kl", "edl", "align", "contrastive", "s_reg", "total")
    return {k: float(np.mean([getattr(p, k) for p in parts])) for k in keys}


def train_phase(model: EvidentialModel, ws: Workspace, state: AdaState,
                pls: Mapping[int, frozenset], epochs: int, cfg: RunConfig,
                shuffle_rng: np.random.Generator, subset_rng: np.random.Generator,
                terms: frozenset = ALL_TERMS) -> list[dict]:
    """Train for ``epochs`` passes with a fresh cosine schedule; returns the loss curve."""
    pools = state.pools
    labelled = sorted(pools.source_labeled | pools.target_labeled)
    pseudo = [i for i in sorted(pools.target_unlabeled) if pls.get(i)]
    sup_ids = np.array(sorted(labelled + pseudo), dtype=np.int64)
    if epochs == 0 or sup_ids.size == 0:
        return []
    targets = {i: state.known[i] for i in labelled}
    targets.update({i: pls[i] for i in pseudo})
    use_align = "align" in terms and bool(pools.target_unlabeled)
    unl_ids = np.array(sorted(pools.target_unlabeled), dtype=np.int64)
    use_ctx = "contrastive" in terms
    if use_ctx:
        ctx_ids = np.array(labelled, dtype=np.int64)
        ctx_rows = ws.rows(ctx_ids)
        ctx_x = ws.ctx_x[ctx_rows]
        ctx_labels = np.array([state.known[int(i)] for i in ctx_ids], dtype=np.int64)
        ctx_source = np.isin(ctx_ids, list(pools.source_labeled))
        ctx_tl = ~ctx_source
        ctx_pos = {int(i): p for p, i in enumerate(ctx_ids)}

    bs = cfg.batch_size
    steps = math.ceil(sup_ids.size / bs)
    opt = OptimizerState(epochs * steps, cfg.lr_extractor, cfg.lr_head, cfg.momentum)
    loss_cfg = LossConfig(cfg.lambda_dom, cfg.lambda_pred, cfg.lambda_c, terms)
    unl_queue: list[int] = []
    curve = []
    for epoch in range(epochs):
        perm = sup_ids[shuffle_rng.permutation(sup_ids.size)]
        parts = []
        for b in range(steps):
            ids = perm[b * bs:(b + 1) * bs]
            batch = TrainBatch(ws.ctx_x[ws.rows(ids)], [targets[int(i)] for i in ids],
                               np.empty((0, ws.ctx_x.shape[1])))
            if use_align:
                take = []
                while len(take) < bs:
                    if not unl_queue:
                        unl_queue = list(unl_ids[shuffle_rng.permutation(unl_ids.size)])
                    need = min(bs - len(take), len(unl_queue))
                    take += unl_queue[:need]
                    unl_queue = unl_queue[need:]
                    if len(take) >= unl_ids.size:
                        break
                batch.x_unl = ws.ctx_x[ws.rows(take)]
            if use_ctx:
                anchors = np.array([ctx_pos[int(i)] for i in ids if int(i) in ctx_pos],
                                   dtype=np.int64)
                batch.x_ctx = ctx_x
                batch.ctx_labels = ctx_labels
                batch.ctx_source = ctx_source
                batch.ctx_tl = ctx_tl
                batch.anchors = anchors
                batch.subsets_source = draw_subsets(subset_rng, ctx_labels, ctx_source,
                                                    cfg.subset_size)
                batch.subsets_tl = draw_subsets(subset_rng, ctx_labels, ctx_tl, cfg.subset_size)
            breakdown, grads = backward(model, batch, loss_cfg)
            sgd_step(model, grads, opt)
            parts.append(breakdown)
        curve.append({"epoch": epoch + 1, **_mean_breakdown(parts)})
    return curve


def evaluate_model(model: EvidentialModel, ws: Workspace) -> dict:
    """Test-split accuracy metrics and mean domain uncertainty per domain."""
    b = ws.bundle
    out = {"s": float(model.s)}
    for name, mask in (("source_test", ws.test_source), ("target_test", ws.test_target)):
        alpha = forward(model, b.features[mask]).alpha
        pred = np.argmax(alpha, axis=1)
        rec = evaluate(zip(b.labels[mask].tolist(), pred.tolist()), ws.num_classes)
        dom = np.atleast_1d(u_dom(alpha, model.s))
        out[name] = {**rec.as_dict(), "mean_u_dom": float(dom.mean())}
    return out


def metrics_from(ev: dict, split: str = "target_test") -> MetricsRecord:
    d = ev[split]
    return MetricsRecord(d["accuracy"], d["macro_precision"], d["macro_recall"],
                         d["macro_f1"], np.asarray(d["confusion"], dtype=np.int64))


# ---------------------------------------------------------------------------
# Round and run
# ---------------------------------------------------------------------------


def run_round(state: AdaState, model: EvidentialModel, ws: Workspace, round_index: int,
              budget: int, cfg: RunConfig, oracle: LabelOracle,
              strategy: str | None = None) -> tuple[AdaState, EvidentialModel, RoundReport]:
    strategy = cfg.strategy if strategy is None else strategy
    pools = state.pools
    if budget <= 0 or not pools.target_unlabeled:
        report = RoundReport(round_index, strategy, 0, [], [], [], [0] * ws.num_classes,
                             _class_counts(state, ws), 0, 0, None, float(model.s), [],
                             evaluate_model(model, ws))
        return state, model, report

    # (1) features and PLS for D_Tu
    pls_before = pseudo_label_sets(model, ws, state, cfg.k)
    # (2) scores
    unl = sorted(pools.target_unlabeled)
    stats = ClampCounter()
    scores = score_unlabeled(model, unl, ws.ctx_x[ws.rows(unl)], cfg.lambda_dom,
                             cfg.lambda_pred, strategy, stats)
    score_map = dict(scores)
    budget = min(budget, len(unl))
    if strategy == "random":
        candidates: list[int] = []
        selected = random_selection(stream(cfg.seed, f"select/round{round_index}"), unl, budget)
    else:
        # (3) candidates, (4) diversity
        candidates = select_candidates(scores, round_index, budget)
        feats = forward(model, ws.ctx_x[ws.rows(candidates)]).features
        selected = diversity_filter(candidates, feats, score_map, budget)
    # (5) move and reveal
    revealed = oracle.reveal(selected)
    state = AdaState(pools.label(selected), {**state.known, **revealed})
    # (6) fresh PLS, then train
    pls = pseudo_label_sets(model, ws, state, cfg.k)
    curve = train_phase(model, ws, state, pls, cfg.epochs_round, cfg,
                        stream(cfg.seed, f"shuffle/round{round_index}"),
                        stream(cfg.seed, f"subsets/round{round_index}"))
    nonempty = [i for i, p in pls.items() if p]
    truth = dict(zip(ws.bundle.ids.tolist(), ws.bundle.labels.tolist()))
    hit = (float(np.mean([truth[i] in pls[i] for i in nonempty])) if nonempty else None)
    sel_counts = np.bincount([revealed[i] for i in selected], minlength=ws.num_classes)
    report = RoundReport(
        round=round_index, strategy=strategy, budget=budget, candidates=candidates,
        selected=list(selected),
        selected_scores=[{"id": i, "u_dom": score_map[i].u_dom, "u_pred": score_map[i].u_pred,
                          "u_total": score_map[i].u_total} for i in selected],
        selected_label_counts=sel_counts.tolist(),
        target_labeled_counts=_class_counts(state, ws),
        pls_nonempty_before=sum(1 for p in pls_before.values() if p),
        pls_nonempty_train=len(nonempty), pls_hit_rate=hit, s=float(model.s),
        loss_curve=curve, evaluation=evaluate_model(model, ws))
    return state, model, report


def _class_counts(state: AdaState, ws: Workspace) -> list:
    labs = [state.known[i] for i in state.pools.target_labeled]
    return np.bincount(np.array(labs, dtype=np.int64), minlength=ws.num_classes).tolist()


@dataclass
class Prepared:
    """A dataset and a source-pretrained model, shareable across strategies."""
    workspace: Workspace
    model: EvidentialModel
    pretrain_curve: list
    pretrain_eval: dict
    initial_state: AdaState
    oracle_labels: dict
    target_pool_size: int


@dataclass
class RunResult:
    config: RunConfig
    model: EvidentialModel
    state: AdaState
    per_round_budget: int
    target_pool_size: int
    pretrain_curve: list
    pretrain_eval: dict
    workspace: Workspace | None = None
    rounds: list = field(default_factory=list)
    final_eval: dict = field(default_factory=dict)

    def report_dict(self) -> dict:
        return {
            "strategy": self.config.strategy,
            "seed": self.config.seed,
            "target_pool_size": self.target_pool_size,
            "per_round_budget": self.per_round_budget,
            "total_budget": self.per_round_budget * self.config.rounds,
            "target_labeled": len(self.state.pools.target_labeled),
            "pretrain": {"loss_curve": self.pretrain_curve, "evaluation": self.pretrain_eval},
            "rounds": [r.to_dict() for r in self.rounds],
            "final": self.final_eval,
        }

    def report_json(self) -> str:
        return json.dumps(self.report_dict(), sort_keys=True, indent=1) + "\n"


def load_bundle(cfg: RunConfig) -> DatasetBundle:
    if cfg.dataset_path is not None:
        return load_csv(cfg.dataset_path)
    return generate(cfg.domain_spec())


def per_round_budget(cfg: RunConfig, target_pool: int) -> int:
    return int(round(cfg.per_round_fraction * target_pool))


def check_consistency(cfg: RunConfig, bundle: DatasetBundle) -> list[str]:
    problems = []
    if cfg.num_classes is not None and cfg.num_classes != bundle.num_classes:
        problems.append(f"num_classes {cfg.num_classes} != dataset classes {bundle.num_classes}")
    if cfg.d_in is not None and cfg.d_in != bundle.dim:
        problems.append(f"d_in {cfg.d_in} != dataset dimension {bundle.dim}")
    for dom in ("source", "target"):
        for split in ("train", "test"):
            if not bundle.mask(dom, split).any():
                problems.append(f"dataset has no {dom}/{split} samples")
    n_tu = int(bundle.mask("target", "train").sum())
    if cfg.rounds > 0 and per_round_budget(cfg, n_tu) < 1:
        problems.append(f"per_round_fraction {cfg.per_round_fraction} of {n_tu} target samples "
                        "rounds to a zero budget")
    if cfg.rounds * per_round_budget(cfg, n_tu) > n_tu:
        problems.append("total budget exceeds the unlabelled target pool")
    return problems


def prepare(cfg: RunConfig, bundle: DatasetBundle | None = None) -> Prepared:
    """Load or generate data, validate it against the config and pretrain on D_S."""
    from .config import ConfigError

    bundle = load_bundle(cfg) if bundle is None else bundle
    problems = check_consistency(cfg, bundle)
    if problems:
        raise ConfigError(problems)
    ws = Workspace.build(bundle)
    src = bundle.mask("source", "train")
    tgt = bundle.mask("target", "train")
    known = dict(zip(bundle.ids[src].tolist(), bundle.labels[src].tolist()))
    pools = PoolState(frozenset(known), frozenset(), frozenset(bundle.ids[tgt].tolist()))
    state = AdaState(pools, known)
    seed = int(stream(cfg.seed, "init").integers(0, 2**63 - 1))
    model = init_model(bundle.dim, cfg.d_feat, bundle.num_classes, seed, cfg.hidden)
    model.s = float(cfg.s_init)
    curve = train_phase(model, ws, state, {}, cfg.epochs_pretrain, cfg,
                        stream(cfg.seed, "shuffle/pretrain"), stream(cfg.seed, "subsets/pretrain"),
                        terms=EDL_ONLY)
    oracle = dict(zip(bundle.ids[tgt].tolist(), bundle.labels[tgt].tolist()))
    return Prepared(ws, model, curve, evaluate_model(model, ws), state, oracle, int(tgt.sum()))


def run_ada(cfg: RunConfig, prepared: Prepared | None = None,
            oracle: LabelOracle | None = None) -> RunResult:
    """Pretrain (or reuse ``prepared``), run every round, evaluate on the held-out split."""
    prepared = prepare(cfg) if prepared is None else prepared
    model = prepared.model.copy()
    state = AdaState(prepared.initial_state.pools, dict(prepared.initial_state.known))
    oracle = LabelOracle(prepared.oracle_labels) if oracle is None else oracle
    n_b = per_round_budget(cfg, prepared.target_pool_size) if cfg.rounds else 0
    result = RunResult(cfg, model, state, n_b, prepared.target_pool_size,
                       prepared.pretrain_curve, prepared.pretrain_eval, prepared.workspace)
    for r in range(1, cfg.rounds + 1):
        state, model, report = run_round(state, model, prepared.workspace, r, n_b, cfg, oracle)
        result.rounds.append(report)
    result.state = state
    result.model = model
    result.final_eval = evaluate_model(model, prepared.workspace)
    return result
