"""Command-line entry point: ``renyi-ada {gen-data,run,score,selftest}``.

Exit codes: 0 success, 1 failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from .ada import OracleError, metrics_from, run_ada
from .config import ConfigError, RunConfig, benchmark_spec
from .data import DatasetParseError, DomainSpec, generate, load_csv, save_csv
from .entropy import ClampCounter, u_dom
from .metrics import kde_csv, kde_export, metrics_csv
from .model import forward, load_checkpoint, save_checkpoint
from .selection import score_alphas

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="renyi-ada", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = benchmark_spec()
    g = sub.add_parser("gen-data", help="generate a synthetic two-domain dataset CSV")
    g.add_argument("--out", required=True, help="output CSV path")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--classes", type=int, default=b.num_classes)
    g.add_argument("--dim", type=int, default=b.dim)
    g.add_argument("--per-class", type=int, default=b.per_class)
    g.add_argument("--radius", type=float, default=b.radius)
    g.add_argument("--noise", type=float, default=b.noise)
    g.add_argument("--rotation", type=float, default=b.rotation_deg, help="degrees")
    g.add_argument("--scale", type=float, default=b.scale)
    g.add_argument("--noise-ratio", type=float, default=b.noise_ratio)
    g.add_argument("--translation", type=_floats, default=b.translation)
    g.add_argument("--test-fraction", type=float, default=b.test_fraction)

    r = sub.add_parser("run", help="run active domain adaptation from a JSON config")
    r.add_argument("config", help="JSON configuration file")
    r.add_argument("--output-dir", help="override the configured output directory")

    s = sub.add_parser("score", help="score every dataset row with a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("dataset")
    s.add_argument("--out", help="output CSV (default: stdout)")
    s.add_argument("--lambda-dom", type=float, default=7.0)
    s.add_argument("--lambda-pred", type=float, default=0.5)
    s.add_argument("--entropy", choices=("renyi", "shannon"), default="renyi")

    t = sub.add_parser("selftest", help="run the oracle suites at reduced size")
    t.add_argument("--deep", action="store_true", help="Monte-Carlo n = 1e6")
    return p


def cmd_gen_data(args) -> int:
    spec = DomainSpec(num_classes=args.classes, dim=args.dim, per_class=args.per_class,
                      radius=args.radius, noise=args.noise, rotation_deg=args.rotation,
                      translation=args.translation, scale=args.scale,
                      noise_ratio=args.noise_ratio, test_fraction=args.test_fraction,
                      seed=args.seed)
    try:
        spec.validate()
    except ValueError as exc:
        print(f"renyi-ada gen-data: {exc}", file=sys.stderr)
        return EXIT_USAGE
    bundle = generate(spec)
    save_csv(bundle, args.out)
    for dom in ("source", "target"):
        print(f"{dom}: {int(bundle.mask(dom, 'train').sum())} train / "
              f"{int(bundle.mask(dom, 'test').sum())} test")
    print(f"total {len(bundle)} samples, {spec.num_classes} classes, dim {spec.dim} -> {args.out}")
    return EXIT_OK


def _default_run_dir(cfg: RunConfig) -> Path:
    name = Path("runs") / f"{cfg.strategy}-seed{cfg.seed}"
    return RunConfig(output_dir=str(name)).output_path()


def write_run(result, out_dir: Path) -> None:
    """Config snapshot, report, metrics and KDE CSVs, and the checkpoint."""
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    (out_dir / "config.json").write_text(cfg.to_json(), encoding="utf-8")
    (out_dir / "report.json").write_text(result.report_json(), encoding="utf-8")
    stages = [("pretrain", result.pretrain_eval)]
    stages += [(f"round{r.round}", r.evaluation) for r in result.rounds]
    stages += [("final", result.final_eval)]
    (out_dir / "metrics.csv").write_text(
        metrics_csv([(name, metrics_from(ev)) for name, ev in stages]), encoding="utf-8")
    bundle = result.workspace.bundle
    for dom in ("source", "target"):
        mask = bundle.mask(dom, "test")
        alpha = forward(result.model, bundle.features[mask]).alpha
        vals = np.atleast_1d(u_dom(alpha, result.model.s))
        (out_dir / f"kde_u_dom_{dom}_test.csv").write_text(kde_csv(kde_export(vals)),
                                                            encoding="utf-8")
    save_checkpoint(out_dir / "checkpoint.json", result.model,
                    step=len(result.rounds))


def cmd_run(args) -> int:
    try:
        cfg = RunConfig.load(args.config)
        if args.output_dir:
            cfg = cfg.replace(output_dir=args.output_dir)
        result = run_ada(cfg)
    except ConfigError as exc:
        print(f"renyi-ada run: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (OSError, DatasetParseError, OracleError) as exc:
        print(f"renyi-ada run: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = cfg.output_path() or _default_run_dir(cfg)
    write_run(result, out)
    f = result.final_eval["target_test"]
    print(f"{cfg.strategy} seed {cfg.seed}: {len(result.rounds)} rounds, "
          f"{len(result.state.pools.target_labeled)} target labels, "
          f"target-test accuracy {f['accuracy']:.4f} -> {out}")
    return EXIT_OK


def cmd_score(args) -> int:
    try:
        model, _ = load_checkpoint(args.checkpoint)
        bundle = load_csv(args.dataset)
    except (OSError, ValueError, KeyError) as exc:
        print(f"renyi-ada score: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if bundle.dim != model.d_in:
        print(f"renyi-ada score: dimension mismatch: dataset has {bundle.dim} features, "
              f"checkpoint expects {model.d_in}", file=sys.stderr)
        return EXIT_FAIL
    order = np.argsort(bundle.ids, kind="stable")
    alpha = forward(model, bundle.features[order]).alpha
    stats = ClampCounter()
    dom, pred, total = score_alphas(alpha, model.s, args.lambda_dom, args.lambda_pred,
                                    args.entropy, stats)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "u_dom", "u_pred", "u_total"])
    for i, a, b, c in zip(bundle.ids[order], dom, pred, total):
        w.writerow([int(i), repr(float(a)), repr(float(b)), repr(float(c))])
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest(deep=args.deep)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"selftest FAILED: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    print("selftest passed")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"gen-data": cmd_gen_data, "run": cmd_run, "score": cmd_score,
               "selftest": cmd_selftest}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
