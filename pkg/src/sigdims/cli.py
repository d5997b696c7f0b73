"""Command-line entry point: train, capture, analyze, plan, sweep, pipeline, prunelab.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import analyzer, filterlab, ingest, net, profiler
from .arch import ArchConfig
from .data import DEFAULT_MEAN, DEFAULT_STD, load_cifar_binary
from .errors import NumericalError, TrainingError

DEFAULT_THRESHOLD = 0.999


@dataclass
class RunConfig:
    """Resolved settings of one command invocation, recorded alongside outputs."""

    data: str | None = None
    test_data: str | None = None
    subset: int | None = None
    config: str | None = None
    hyper: dict = field(default_factory=lambda: net.Hyper().to_dict())
    seed: int | None = None
    thresholds: list = field(default_factory=lambda: [DEFAULT_THRESHOLD])
    out: str = "."
    rule: str = analyzer.RULE_TOLERANT
    tap: str = net.TAP_POST_BN
    normalization: dict = field(
        default_factory=lambda: {"mean": list(DEFAULT_MEAN), "std": list(DEFAULT_STD)}
    )

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        hyper = net.Hyper()
        if getattr(args, "hyper", None):
            hyper = net.Hyper.from_dict(json.loads(Path(args.hyper).read_text()))
        thresholds = getattr(args, "threshold", None) or [DEFAULT_THRESHOLD]
        return cls(
            data=getattr(args, "data", None),
            test_data=getattr(args, "test_data", None),
            subset=getattr(args, "subset", None),
            config=getattr(args, "config", None),
            hyper=hyper.to_dict(),
            seed=getattr(args, "seed", None),
            thresholds=list(thresholds),
            out=getattr(args, "out", "."),
            rule=getattr(args, "rule", analyzer.RULE_TOLERANT),
            tap=getattr(args, "tap", net.TAP_POST_BN),
        )

    def hyper_obj(self) -> net.Hyper:
        return net.Hyper.from_dict(self.hyper)

    def load_dataset(self, path, subset=None):
        return load_cifar_binary(
            path,
            subset=subset if subset is not None else self.subset,
            mean=tuple(self.normalization["mean"]),
            std=tuple(self.normalization["std"]),
        )


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _load_arch(path) -> ArchConfig:
    return ArchConfig.from_json(Path(path).read_text())


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- commands ---

def cmd_train(args) -> int:
    run = RunConfig.from_args(args)
    out = _outdir(args)
    config = _load_arch(args.config)
    train_ds = run.load_dataset(args.data)
    test_ds = run.load_dataset(args.test_data) if args.test_data else None
    params = net.build(config, seed=args.seed)
    params, history = net.train(params, train_ds, run.hyper_obj(), seed=args.seed, test=test_ds)
    net.save_checkpoint(params, out / "model.netp")
    _write_json(out / "history.json", history)
    _write_json(out / "runconfig.json", asdict(run))
    print(f"trained {len(history)} epochs -> {out / 'model.netp'}")
    return 0


def _capture(params, dataset, batch_size, tap, acts_dir: Path) -> dict:
    if len(dataset) == 0:
        raise ValueError("capture dataset is empty")
    acts_dir.mkdir(parents=True, exist_ok=True)
    n_total = len(dataset)
    needed: dict[int, int] = {}
    manifest_layers = []
    k = 0
    while True:
        idx = (np.arange(batch_size) + k * batch_size) % n_total
        _, taps = net.forward_with_taps(params, dataset.images[idx], tap=tap)
        if k == 0:
            for t in taps:
                n, h, w, c = t.dims
                needed[t.layer_id] = ingest.required_batches(c, h, w, n)
                manifest_layers.append(
                    {
                        "layer": t.layer_id,
                        "channels": c,
                        "height": h,
                        "width": w,
                        "batches": needed[t.layer_id],
                    }
                )
        for t in taps:
            if k < needed[t.layer_id]:
                ingest.write_activations(
                    t, acts_dir / ingest.capture_filename(t.layer_id, k)
                )
        k += 1
        if k >= max(needed.values()):
            break
    return {"tap": tap, "batch_size": batch_size, "layers": manifest_layers}


def cmd_capture(args) -> int:
    run = RunConfig.from_args(args)
    out = _outdir(args)
    params = net.load_checkpoint(args.checkpoint)
    dataset = run.load_dataset(args.data)
    manifest = _capture(params, dataset, args.batch_size, args.tap, out)
    _write_json(out / "capture.json", manifest)
    n_files = sum(l["batches"] for l in manifest["layers"])
    print(f"captured {n_files} activation files -> {out}")
    return 0


def _read_captures(acts_dir: Path) -> dict:
    paths = sorted(Path(acts_dir).glob("*.act"))
    if not paths:
        raise ValueError(f"no .act files in {acts_dir}")
    by_layer: dict[int, list] = {}
    for path in paths:
        try:
            t = ingest.read_activations(path)
        except Exception as exc:
            raise type(exc)(f"{path}: {exc}") from exc
        by_layer.setdefault(t.layer_id, []).append(t)
    return by_layer


def _analysis_report(na: analyzer.NetworkAnalysis, config: ArchConfig | None) -> dict:
    report = na.to_dict()
    report["config"] = json.loads(config.to_json()) if config else None
    report["planned"] = None
    report["cost"] = None
    report["ratios"] = None
    if config is not None:
        planned = {
            rule: analyzer.plan_depth(na.s_list, config, rule)
            for rule in (analyzer.RULE_STRICT, analyzer.RULE_TOLERANT)
        }
        original = profiler.count(config)
        costs = {rule: profiler.count(cfg) for rule, cfg in planned.items()}
        report["planned"] = {
            rule: json.loads(cfg.to_json()) for rule, cfg in planned.items()
        }
        report["cost"] = {"original": original.to_dict()} | {
            rule: c.to_dict() for rule, c in costs.items()
        }
        report["ratios"] = {
            rule: dict(zip(("macs", "params"), profiler.ratio(c, original)))
            for rule, c in costs.items()
        }
    return report


def cmd_analyze(args) -> int:
    out = _outdir(args)
    threshold = args.threshold[0] if args.threshold else DEFAULT_THRESHOLD
    captures = _read_captures(args.acts)
    na = analyzer.analyze_network(captures, threshold)
    config = _load_arch(args.config) if args.config else None
    report = _analysis_report(na, config)
    _write_json(out / "report.json", report)
    widths = {la.layer_id: la.s for la in na.layers}
    print(f"analyzed {len(na.layers)} layers at threshold {threshold}: {widths}")
    return 0


def cmd_plan(args) -> int:
    out = _outdir(args)
    report = json.loads(Path(args.report).read_text())
    if "s" in report:
        s_list = [int(v) for v in report["s"]]
    elif "layers" in report:
        s_list = [int(la["s"]) for la in report["layers"]]
    else:
        raise ValueError(f"{args.report}: no significant-dimension vector found")
    if args.config:
        config = _load_arch(args.config)
    elif report.get("config"):
        config = ArchConfig.from_dict(report["config"])
    else:
        raise ValueError(f"{args.report}: no architecture config given or embedded")

    planned = {
        rule: analyzer.plan_depth(s_list, config, rule)
        for rule in (analyzer.RULE_STRICT, analyzer.RULE_TOLERANT)
    }
    original = profiler.count(config)
    plan_obj = {
        "config": json.loads(config.to_json()),
        "s": s_list,
        "planned": {},
        "cost": {"original": original.to_dict()},
        "ratios": {},
    }
    for rule, cfg in planned.items():
        cost = profiler.count(cfg)
        plan_obj["planned"][rule] = json.loads(cfg.to_json())
        plan_obj["cost"][rule] = cost.to_dict()
        plan_obj["ratios"][rule] = dict(
            zip(("macs", "params"), profiler.ratio(cost, original))
        )
        Path(out / f"planned_{rule}.json").write_text(cfg.to_json() + "\n")
    _write_json(out / "plan.json", plan_obj)
    for rule in (analyzer.RULE_STRICT, analyzer.RULE_TOLERANT):
        r = plan_obj["ratios"][rule]
        print(
            f"{rule}: {planned[rule].tokens} "
            f"macs {r['macs']:.2f}x params {r['params']:.2f}x"
        )
    return 0


def cmd_sweep(args) -> int:
    out = _outdir(args)
    if not args.threshold:
        raise ValueError("sweep needs at least one --threshold")
    captures = _read_captures(args.acts)
    config = _load_arch(args.config) if args.config else None
    points = analyzer.sweep(captures, args.threshold, config=config, rule=args.rule)
    csv_text = analyzer.sweep_csv(points)
    (out / "sweep.csv").write_text(csv_text)
    print(f"swept {len(points)} thresholds -> {out / 'sweep.csv'}")
    return 0


def cmd_pipeline(args) -> int:
    run = RunConfig.from_args(args)
    out = _outdir(args)
    threshold = run.thresholds[0]
    config = _load_arch(args.config)
    hyper = run.hyper_obj()
    train_ds = run.load_dataset(args.data)
    test_ds = run.load_dataset(args.test_data) if args.test_data else None
    eval_ds = test_ds if test_ds is not None else train_ds

    parent = net.build(config, seed=args.seed)
    parent, parent_history = net.train(parent, train_ds, hyper, seed=args.seed, test=test_ds)
    parent_acc = net.evaluate(parent, eval_ds)
    net.save_checkpoint(parent, out / "parent.netp")

    acts_dir = out / "acts"
    capture_manifest = _capture(parent, train_ds, hyper.batch_size, run.tap, acts_dir)

    captures = _read_captures(acts_dir)
    na = analyzer.analyze_network(captures, threshold)
    report = _analysis_report(na, config)

    selected = ArchConfig.from_dict(report["planned"][run.rule])
    retrain_seed = args.seed + 1
    slim = net.build(selected, seed=retrain_seed)
    slim, slim_history = net.train(slim, train_ds, hyper, seed=retrain_seed, test=test_ds)
    slim_acc = net.evaluate(slim, eval_ds)
    net.save_checkpoint(slim, out / "slim.netp")

    report["capture"] = capture_manifest
    report["rule"] = run.rule
    report["parent"] = {
        "accuracy": parent_acc,
        "history": parent_history,
        "params": parent.param_count(),
    }
    report["retrained"] = {
        "accuracy": slim_acc,
        "history": slim_history,
        "params": slim.param_count(),
        "seed": retrain_seed,
    }
    _write_json(out / "report.json", report)
    _write_json(out / "runconfig.json", asdict(run))
    drop = parent_acc - slim_acc
    print(
        f"parent {parent_acc:.4f} -> slim {slim_acc:.4f} (drop {drop:+.4f}), "
        f"params {parent.param_count()} -> {slim.param_count()}"
    )
    return 0


def cmd_prunelab(args) -> int:
    run = RunConfig.from_args(args)
    out = _outdir(args)
    config = _load_arch(args.config)
    dataset = run.load_dataset(args.data)
    hyper = run.hyper_obj()

    params = net.build(config, seed=args.seed)
    params, _ = net.train(params, dataset, hyper, seed=args.seed)
    bank_before = params.filter_bank(args.layer)
    filterlab.dump_filter_bank(bank_before, out / "bank_before.pgm")

    retrain = net.Hyper(
        epochs=args.candidate_epochs,
        lr=hyper.lr,
        momentum=hyper.momentum,
        batch_size=hyper.batch_size,
    )
    step = filterlab.exhaustive_prune_step(
        params, args.layer, dataset, retrain, seed=args.seed + 1
    )
    trace = filterlab.predict_and_verify(
        before_bank=bank_before,
        pruned_id=step.best_id,
        after_bank=step.retrained.filter_bank(args.layer),
        accuracy=step.accuracy_table[step.best_id],
        iteration=0,
        layer=args.layer,
    )
    filterlab.dump_filter_bank(
        step.retrained.filter_bank(args.layer), out / "bank_after.pgm"
    )
    (out / "prune_trace.json").write_text(trace.to_json() + "\n")
    _write_json(out / "accuracy_table.json", {str(k): v for k, v in step.accuracy_table.items()})
    _write_json(out / "runconfig.json", asdict(run))
    print(
        f"pruned filter {step.best_id} (acc {trace.accuracy:.4f}); "
        f"predicted absorber {trace.predicted_id}, moved most {trace.actual_id}, "
        f"match={trace.match}"
    )
    return 0


# -------------------------------------------------------------------- main ---

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sigdims",
        description="PCA width/depth analysis and one-shot slimming of trained CNNs",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, *, data=False, seed=False, out=True):
        if data:
            sp.add_argument("--data", required=True, help="binary image record file")
            sp.add_argument("--test-data", help="held-out record file")
            sp.add_argument("--subset", type=int, help="use only the first N records")
        if seed:
            sp.add_argument("--seed", type=int, required=True, help="RNG seed")
        if out:
            sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("train", help="train a network from an architecture config")
    sp.add_argument("--config", required=True, help="architecture config JSON")
    sp.add_argument("--hyper", help="hyperparameter JSON file")
    add_common(sp, data=True, seed=True)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("capture", help="write per-layer activation files")
    sp.add_argument("--checkpoint", required=True, help="trained model checkpoint")
    sp.add_argument("--tap", choices=[net.TAP_POST_BN, net.TAP_PRE_BN],
                    default=net.TAP_POST_BN)
    sp.add_argument("--batch-size", type=int, default=64)
    add_common(sp, data=True)
    sp.set_defaults(fn=cmd_capture)

    sp = sub.add_parser("analyze", help="PCA-analyze captured activations")
    sp.add_argument("acts", help="directory of .act files")
    sp.add_argument("--threshold", type=float, action="append",
                    help=f"variance threshold (default {DEFAULT_THRESHOLD})")
    sp.add_argument("--config", help="architecture config JSON (enables planning)")
    add_common(sp)
    sp.set_defaults(fn=cmd_analyze)

    sp = sub.add_parser("plan", help="derive slimmed architectures from a report")
    sp.add_argument("report", help="analyze report or {'s': [...], 'config': ...} fixture")
    sp.add_argument("--config", help="architecture config JSON (overrides report)")
    add_common(sp)
    sp.set_defaults(fn=cmd_plan)

    sp = sub.add_parser("sweep", help="replay several variance thresholds")
    sp.add_argument("acts", help="directory of .act files")
    sp.add_argument("--threshold", type=float, action="append", required=True,
                    help="repeatable, strictly descending")
    sp.add_argument("--config", help="architecture config JSON")
    sp.add_argument("--rule", choices=[analyzer.RULE_STRICT, analyzer.RULE_TOLERANT],
                    default=analyzer.RULE_TOLERANT)
    add_common(sp)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("pipeline", help="train, capture, analyze, plan, retrain")
    sp.add_argument("--config", required=True, help="architecture config JSON")
    sp.add_argument("--hyper", help="hyperparameter JSON file")
    sp.add_argument("--threshold", type=float, action="append")
    sp.add_argument("--rule", choices=[analyzer.RULE_STRICT, analyzer.RULE_TOLERANT],
                    default=analyzer.RULE_TOLERANT)
    sp.add_argument("--tap", choices=[net.TAP_POST_BN, net.TAP_PRE_BN],
                    default=net.TAP_POST_BN)
    add_common(sp, data=True, seed=True)
    sp.set_defaults(fn=cmd_pipeline)

    sp = sub.add_parser("prunelab", help="exhaustive filter-pruning experiment")
    sp.add_argument("--config", required=True, help="architecture config JSON")
    sp.add_argument("--hyper", help="hyperparameter JSON file")
    sp.add_argument("--layer", type=int, default=0, help="conv layer to search")
    sp.add_argument("--candidate-epochs", type=int, default=2,
                    help="retrain budget per pruning candidate")
    add_common(sp, data=True, seed=True)
    sp.set_defaults(fn=cmd_prunelab)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, TrainingError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
