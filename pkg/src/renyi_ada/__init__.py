"""Rényi-entropy evidential active domain adaptation on synthetic benchmarks."""

from .ada import PoolState, RoundReport, RunResult, prepare, run_ada, run_round
from .config import RunConfig
from .data import DatasetBundle, DomainSpec, generate, load_csv, save_csv
from .entropy import (DirichletParams, ProbVector, RenyiOrder, UncertaintyScore,
                      mc_conditional_entropy, renyi_entropy, shannon_entropy, u_dom,
                      u_pred, u_total)
from .metrics import MetricsRecord, evaluate, kde_export
from .model import EvidentialModel, forward, init_model, load_checkpoint, save_checkpoint

__all__ = [
    "DatasetBundle", "DirichletParams", "DomainSpec", "EvidentialModel", "MetricsRecord",
    "PoolState", "ProbVector", "RenyiOrder", "RoundReport", "RunConfig", "RunResult",
    "UncertaintyScore", "evaluate", "forward", "generate", "init_model", "kde_export",
    "load_checkpoint", "load_csv", "mc_conditional_entropy", "prepare", "renyi_entropy",
    "run_ada", "run_round", "save_checkpoint", "save_csv", "shannon_entropy", "u_dom",
    "u_pred", "u_total",
]
