"""Command-line entry point.

Each subcommand is one stage of ``run`` and reads or writes its artifacts in
the output directory, so stages can be chained across invocations::

    gate synth    --config exp.toml --out out/
    gate pretrain --config exp.toml --out out/ --cohort out/cohort/manifest.json
    gate finetune --config exp.toml --out out/ --checkpoint out/pretrained.npz
    gate run      --config exp.toml --out out/

Every output file carries the resolved config hash and the seed.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .acceptance import run_criteria
from .augment import open_audit
from .config import RunConfig, bundled_config, config_hash, load_config, write_snapshot
from .errors import ConfigError, GateError
from .evaluation import (binary_metrics, diagnostic_embedding, run_experiment, singular_value_profile,
                         write_reports)
from .model import GateModel, load_checkpoint, save_checkpoint
from .signal import BoldRecording, all_window_features, read_manifest, write_manifest
from .synth import generate_cohort
from .trainer import decide, expand_windows, fine_tune, predict_windows, split_labels, ssl_pretrain, substream


class Stage:
    """Shared state of one invocation: resolved config, output directory, stamp."""

    def __init__(self, config: RunConfig, out: Path, cohort_path: str | None = None):
        self.config = config
        self.out = out
        self.cohort_path = cohort_path
        self.hash = config_hash(config)
        self.stamp = {"config_hash": self.hash, "seed": config.seed}
        out.mkdir(parents=True, exist_ok=True)
        write_snapshot(config, out / "config.resolved.toml")
        self._cohort: list[BoldRecording] | None = None

    def cohort(self) -> list[BoldRecording]:
        if self._cohort is None:
            if self.cohort_path:
                path = Path(self.cohort_path)
                self._cohort = read_manifest(path / "manifest.json" if path.is_dir() else path)
            else:
                self._cohort = generate_cohort(self.config.synth)
        return self._cohort

    def write_csv(self, name: str, header: Sequence[str], rows) -> Path:
        path = self.out / name
        with path.open("w", newline="") as fh:
            for k, v in self.stamp.items():
                fh.write(f"# {k}={v}\n")
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        return path

    def write_json(self, name: str, payload: dict) -> Path:
        path = self.out / name
        path.write_text(json.dumps({**self.stamp, **payload}, indent=2, sort_keys=True) + "\n")
        return path


def _fmt(x) -> str:
    return repr(float(x))


# -- stages -------------------------------------------------------------------------

def stage_synth(st: Stage) -> Path:
    path = write_manifest(st.cohort(), st.out / "cohort")
    doc = json.loads(path.read_text())
    path.write_text(json.dumps({**doc, **st.stamp}, indent=2))
    print(f"wrote {len(st.cohort())} subjects to {path}")
    return path


def stage_pretrain(st: Stage) -> Path:
    cohort = st.cohort()
    cfg = st.config.train
    d = all_window_features(cohort[:1], cfg.augment.window).shape[2]
    model = GateModel.init(d, cfg.hidden, rng=substream(cfg.seed, "init"))
    with open_audit(st.out / "augment_audit.jsonl") as audit:
        audit.write(json.dumps(st.stamp, sort_keys=True) + "\n")
        model, trace = ssl_pretrain(cohort, model, cfg, rng=substream(cfg.seed, "augment"), audit=audit)
    trace.write_csv(st.out / "pretrain_trace.csv", st.stamp)
    path = save_checkpoint(model, st.out / "pretrained.npz", st.hash, {"seed": st.config.seed, "stage": "pretrain"})
    if trace.ssl_loss:
        print(f"pretrained {cfg.ssl_epochs} epochs: loss {trace.ssl_loss[0]:.4f} -> {trace.ssl_loss[-1]:.4f}")
    return path


def stage_finetune(st: Stage, checkpoint: str | Path) -> dict:
    model, _ = load_checkpoint(checkpoint, st.hash)
    cohort = st.cohort()
    cfg = st.config.train
    labeled_ids, _ = split_labels(cohort, cfg.label_rate, cfg.seed)
    labeled = set(labeled_ids)
    labels = np.array([r.meta.label for r in cohort])
    mask = np.array([r.subject_id in labeled for r in cohort])
    window_feats = all_window_features(cohort, cfg.augment.window)
    rows, _, row_labels = expand_windows(window_feats[:, mask], labels[mask])
    model, trace = fine_tune(model, rows, row_labels, cfg)
    trace.write_csv(st.out / "finetune_trace.csv", st.stamp)
    save_checkpoint(model, st.out / "finetuned.npz", st.hash, {"seed": st.config.seed, "stage": "finetune"})

    held = ~mask
    probs = predict_windows(model, window_feats[:, held])
    pred = decide(probs)
    ids = [r.subject_id for r, h in zip(cohort, held) if h]
    st.write_csv("predictions.csv", ["subject_id", "label", "p_class1", "predicted"],
                 [(i, int(y), _fmt(p), int(c)) for i, y, p, c in zip(ids, labels[held], probs[:, 1], pred)])
    metrics = binary_metrics(probs[:, 1], pred, labels[held])
    st.write_csv("finetune_metrics.csv", ["metric", "value"], [(k, _fmt(v)) for k, v in metrics.items()])
    print("fine-tuned on %d labeled subjects; held-out accuracy %.3f" % (mask.sum(), metrics["accuracy"]))
    return metrics


def stage_experiment(st: Stage, rates: Sequence[float], name: str) -> Path:
    exp = st.config.experiment
    result = run_experiment(st.cohort(), st.config.train, rates, exp.methods, exp.n_folds, exp.n_repeats,
                            exp.ssl_scope)
    write_reports(result, st.out / name, st.stamp)
    for _, rep in sorted(result.reports.items()):
        print(rep)
    return st.out / name


def stage_svd(st: Stage, checkpoint: str | Path) -> Path:
    model, _ = load_checkpoint(checkpoint, st.hash)
    values = singular_value_profile(diagnostic_embedding(model, st.cohort(), st.config.train))
    path = st.write_csv("singular_values.csv", ["index", "singular_value"],
                        [(i, _fmt(v)) for i, v in enumerate(values)])
    print(f"wrote {values.size} singular values to {path}")
    return path


def stage_acceptance(st: Stage) -> bool:
    acc = st.config.acceptance
    results = run_criteria(acc.criteria, st.config.train, st.config.synth, acc.n_seeds, log=print)
    lines = [r.line() for r in results]
    (st.out / "acceptance.txt").write_text(
        "".join(f"# {k}={v}\n" for k, v in st.stamp.items()) + "\n".join(lines) + "\n")
    st.write_json("acceptance.json", {"criteria": [
        {"number": r.number, "name": r.name, "passed": r.passed, "detail": r.detail} for r in results]})
    return all(r.passed for r in results)


def stage_run(st: Stage) -> int:
    stage_synth(st)
    st.cohort_path = str(st.out / "cohort" / "manifest.json")
    st._cohort = None
    ckpt = stage_pretrain(st)
    stage_finetune(st, ckpt)
    stage_svd(st, ckpt)
    if st.config.experiment.rates:
        stage_experiment(st, st.config.experiment.rates, "sweep")
    if st.config.acceptance.criteria:
        return 0 if stage_acceptance(st) else 1
    return 0


# -- argument parsing ------------------------------------------------------------------

def _rates(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"rates must be comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gate", description="Pretrain, fine-tune and evaluate the population-graph model.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file (defaults when omitted)")
    common.add_argument("--seed", type=int, help="root seed; overrides the config file")
    common.add_argument("--out", default="gate-out", help="output directory (default: gate-out)")
    common.add_argument("--threads", type=int, help="BLAS thread limit")
    cohort = argparse.ArgumentParser(add_help=False)
    cohort.add_argument("--cohort", help="cohort manifest (file or directory); generated from [synth] if omitted")
    ckpt = argparse.ArgumentParser(add_help=False)
    ckpt.add_argument("--checkpoint", required=True, help="checkpoint written by pretrain")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate a synthetic cohort")
    sub.add_parser("pretrain", parents=[common, cohort], help="self-supervised pretraining")
    sub.add_parser("finetune", parents=[common, cohort, ckpt], help="fine-tune a pretrained checkpoint")
    sub.add_parser("evaluate", parents=[common, cohort], help="cross-validate at train.label_rate")
    sweep = sub.add_parser("sweep", parents=[common, cohort], help="cross-validate over label rates")
    sweep.add_argument("--rates", type=_rates, help="comma-separated label rates (default: experiment.rates)")
    sub.add_parser("svd-diag", parents=[common, cohort, ckpt], help="singular values of an embedding")
    run = sub.add_parser("run", parents=[common], help="every stage in order")
    run.add_argument("--acceptance", action="store_true", help="use the bundled acceptance config")
    return parser


def dispatch(args: argparse.Namespace) -> int:
    path = args.config
    if args.command == "run" and args.acceptance:
        if path:
            raise ConfigError("--acceptance and --config are mutually exclusive")
        path = bundled_config()
    config = load_config(path, args.seed)
    st = Stage(config, Path(args.out), getattr(args, "cohort", None))
    if args.command == "synth":
        stage_synth(st)
    elif args.command == "pretrain":
        stage_pretrain(st)
    elif args.command == "finetune":
        stage_finetune(st, args.checkpoint)
    elif args.command == "evaluate":
        stage_experiment(st, (config.train.label_rate,), "evaluate")
    elif args.command == "sweep":
        stage_experiment(st, args.rates or config.experiment.rates, "sweep")
    elif args.command == "svd-diag":
        stage_svd(st, args.checkpoint)
    elif args.command == "run":
        return stage_run(st)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with threadpool_limits(limits=args.threads):
            return dispatch(args)
    except ConfigError as exc:
        print(f"gate: config error: {exc}", file=sys.stderr)
        return 2
    except (GateError, OSError) as exc:
        print(f"gate: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
