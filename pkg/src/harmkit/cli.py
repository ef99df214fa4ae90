"""Command-line surface: split, train, predict, evaluate, ensemble, gradcheck, gen-synth.

Every command is deterministic given its inputs, config, and seeds; no
command mutates its input files. Exit codes: 0 success, 1 check failure,
2 usage or config error, 3 training divergence.

The training config is a strict flat key-value file (``key = value``, ``#``
comments). Unknown keys are rejected. Keys:

  train_file, val_file, checkpoint   paths (report is optional)
  max_tokens, hash_bits, ngram       featurizer
  embed_dim, hidden_dim, num_classes, num_targets   model
  epochs, batch_size, learning_rate, optimizer, seed, task   training
  tau, lambda                        contrastive loss

The single ``seed`` drives both parameter initialization and batch
shuffling; the model vocabulary size is always 2**hash_bits.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import corpus, ensembles, metrics, synth
from .featurizer import FeatureConfig, batch_encode
from .losses import ContrastiveConfig, NonFiniteLossError
from .model import (
    ModelConfig,
    forward_batch,
    load_params,
    sigmoid,
    softmax,
)
from .trainer import TrainConfig, grad_check, train

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3


class ConfigError(ValueError):
    """A config file or command precondition was violated."""


_PATH_KEYS = ("train_file", "val_file", "checkpoint", "report")
_INT_KEYS = ("max_tokens", "hash_bits", "ngram", "embed_dim", "hidden_dim",
             "num_classes", "num_targets", "epochs", "batch_size", "seed")
_FLOAT_KEYS = ("learning_rate", "tau", "lambda")
_STR_KEYS = ("optimizer", "task")
_REQUIRED_KEYS = ("train_file", "val_file", "checkpoint")


@dataclass
class RunConfig:
    feature: FeatureConfig
    model: ModelConfig
    train: TrainConfig
    train_file: Path
    val_file: Path
    checkpoint: Path
    report: Path | None


def parse_run_config(path: str | Path) -> RunConfig:
    """Parse and validate the strict flat key-value training config."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    raw: dict[str, str] = {}
    for line_no, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{p}:{line_no}: expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in _PATH_KEYS + _INT_KEYS + _FLOAT_KEYS + _STR_KEYS:
            raise ConfigError(f"{p}:{line_no}: unknown config key '{key}'")
        if key in raw:
            raise ConfigError(f"{p}:{line_no}: duplicate config key '{key}'")
        raw[key] = value

    for key in _REQUIRED_KEYS:
        if key not in raw:
            raise ConfigError(f"{p}: missing required config key '{key}'")

    def get_int(key: str, default: int) -> int:
        if key not in raw:
            return default
        try:
            return int(raw[key])
        except ValueError as exc:
            raise ConfigError(f"{p}: key '{key}' needs an integer, got {raw[key]!r}") from exc

    def get_float(key: str, default: float) -> float:
        if key not in raw:
            return default
        try:
            return float(raw[key])
        except ValueError as exc:
            raise ConfigError(f"{p}: key '{key}' needs a number, got {raw[key]!r}") from exc

    try:
        feature = FeatureConfig(
            max_tokens=get_int("max_tokens", 512),
            hash_bits=get_int("hash_bits", 15),
            ngram=get_int("ngram", 1),
        )
        seed = get_int("seed", 0)
        model_cfg = ModelConfig(
            vocab_size=feature.vocab_size,
            embed_dim=get_int("embed_dim", 64),
            hidden_dim=get_int("hidden_dim", 64),
            num_classes=get_int("num_classes", 4),
            num_targets=get_int("num_targets", 5),
            seed=seed,
        )
        contrastive = ContrastiveConfig(tau=get_float("tau", 0.1), lam=get_float("lambda", 0.5))
        train_cfg = TrainConfig(
            epochs=get_int("epochs", 20),
            batch_size=get_int("batch_size", 32),
            learning_rate=get_float("learning_rate", 0.05),
            optimizer=raw.get("optimizer", "adam"),
            seed=seed,
            contrastive=contrastive,
            task=raw.get("task", "harm"),
        )
    except ValueError as exc:
        raise ConfigError(f"{p}: {exc}") from exc

    train_file = Path(raw["train_file"])
    val_file = Path(raw["val_file"])
    for key, file_path in (("train_file", train_file), ("val_file", val_file)):
        if not file_path.exists():
            raise ConfigError(f"{p}: {key} does not exist: {file_path}")
    return RunConfig(
        feature=feature,
        model=model_cfg,
        train=train_cfg,
        train_file=train_file,
        val_file=val_file,
        checkpoint=Path(raw["checkpoint"]),
        report=Path(raw["report"]) if "report" in raw else None,
    )


def _cmd_split(args: argparse.Namespace) -> int:
    ratio_parts = args.ratio.split(":")
    if len(ratio_parts) != 2 or not all(part.isdigit() for part in ratio_parts):
        raise ConfigError(f"ratio must look like '4:1', got {args.ratio!r}")
    ratio = (int(ratio_parts[0]), int(ratio_parts[1]))
    data = corpus.load_jsonl(args.input, task=args.task)
    split = corpus.split_train_val(data, ratio=ratio, seed=args.seed, stratify=args.stratify)

    stem = Path(args.input)
    stem = stem.with_name(stem.name.removesuffix(".jsonl"))
    train_path = stem.with_name(stem.name + ".train.jsonl")
    val_path = stem.with_name(stem.name + ".val.jsonl")
    sidecar = stem.with_name(stem.name + ".split.json")
    corpus.save_jsonl(split.train, train_path)
    corpus.save_jsonl(split.val, val_path)
    sidecar.write_text(
        json.dumps(
            {"seed": split.seed, "ratio": list(split.ratio), "stratify": split.stratify},
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    print(json.dumps({"train": str(train_path), "val": str(val_path),
                      "n_train": len(split.train), "n_val": len(split.val)}, sort_keys=True))
    return EXIT_OK


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = parse_run_config(args.config)
    train_set = corpus.load_jsonl(cfg.train_file, task=cfg.train.task)
    val_set = corpus.load_jsonl(cfg.val_file, task=cfg.train.task)

    def progress(epoch: int, loss: float, val_f1: float) -> None:
        print(f"epoch {epoch + 1}/{cfg.train.epochs} loss={loss:.6f} val_f1={val_f1:.4f}", file=sys.stderr)

    _, report = train(
        train_set,
        val_set,
        cfg.model,
        cfg.feature,
        cfg.train,
        checkpoint_path=cfg.checkpoint,
        progress=progress,
    )
    report_json = report.to_json()
    if cfg.report is not None:
        cfg.report.write_text(report_json + "\n", encoding="utf-8")
    print(report_json)
    return EXIT_OK


def _cmd_predict(args: argparse.Namespace) -> int:
    params, _, feature_cfg = load_params(args.checkpoint)
    data = corpus.load_jsonl(args.input, task=args.task, require_labels=False)
    docs = batch_encode([ex.text for ex in data], feature_cfg)
    acts = forward_batch(params, docs)
    with Path(args.output).open("w", encoding="utf-8") as fh:
        if args.task == "harm":
            probs = softmax(acts.class_logits)
            for ex, row in zip(data, probs):
                rec = {"id": ex.id, "probs": [float(x) for x in row], "label": int(np.argmax(row))}
                fh.write(json.dumps(rec) + "\n")
        else:
            sigmas = sigmoid(acts.target_logits)
            for ex, row in zip(data, sigmas):
                flags = (row >= args.eta).astype(int)
                if flags.sum() == 0:
                    flags[int(np.argmax(row))] = 1
                rec = {
                    "id": ex.id,
                    "sigmas": [float(x) for x in row],
                    "targets": [int(f) for f in flags],
                }
                fh.write(json.dumps(rec) + "\n")
    print(json.dumps({"predictions": args.output, "n": len(data)}, sort_keys=True))
    return EXIT_OK


def _load_gold(path: str, task: str) -> dict[str, object]:
    gold = corpus.load_jsonl(path, task=task)
    if task == "harm":
        return {ex.id: ex.harm for ex in gold}
    return {ex.id: ex.targets for ex in gold}


def _report_for_labels(doc_ids: list[str], labels: list[int], gold_path: str) -> metrics.MetricsReport:
    gold_by_id = _load_gold(gold_path, "harm")
    missing = [d for d in doc_ids if d not in gold_by_id]
    if missing:
        raise ConfigError(f"gold file lacks ids {missing}")
    gold = [gold_by_id[d] for d in doc_ids]
    return metrics.classification_report(metrics.confusion(gold, labels))


def _cmd_evaluate(args: argparse.Namespace) -> int:
    pred_path = Path(args.pred)
    if not pred_path.exists():
        raise ConfigError(f"prediction file not found: {pred_path}")
    if args.task == "harm":
        doc_ids: list[str] = []
        labels: list[int] = []
        with pred_path.open("r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if "id" not in rec or "label" not in rec:
                    raise ConfigError(f"{pred_path}:{line_no}: record needs 'id' and 'label'")
                doc_ids.append(str(rec["id"]))
                labels.append(int(rec["label"]))
        report = _report_for_labels(doc_ids, labels, args.gold)
    else:
        gold_by_id = _load_gold(args.gold, "targets")
        doc_ids = []
        sigma_rows = []
        with pred_path.open("r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if "id" not in rec or "sigmas" not in rec:
                    raise ConfigError(f"{pred_path}:{line_no}: record needs 'id' and 'sigmas'")
                doc_ids.append(str(rec["id"]))
                sigma_rows.append([float(x) for x in rec["sigmas"]])
        missing = [d for d in doc_ids if d not in gold_by_id]
        if missing:
            raise ConfigError(f"gold file lacks ids {missing}")
        gold_rows = [gold_by_id[d] for d in doc_ids]
        report = metrics.multilabel_report(gold_rows, np.asarray(sigma_rows), eta=args.eta)

    report_json = report.to_json()
    if args.report:
        Path(args.report).write_text(report_json + "\n", encoding="utf-8")
    print(report_json)
    return EXIT_OK


def _cmd_ensemble(args: argparse.Namespace) -> int:
    if len(args.members) < 2:
        raise ConfigError(f"ensembling needs at least 2 member files, got {len(args.members)}")
    members = [ensembles.load_member_file(path) for path in args.members]

    if args.strategy == "vote":
        doc_ids, labels = ensembles.majority_vote(members)
        # A vote has no combined distribution; emit the member mean so the
        # output format stays uniform across strategies.
        _, probs, _ = ensembles.average_ensemble(members)
    elif args.strategy == "avg":
        doc_ids, probs, labels = ensembles.average_ensemble(members)
    else:
        if args.weights is None:
            raise ConfigError("strategy w-avg requires --weights")
        weights = [float(x) for x in args.weights.split(",")]
        doc_ids, probs, labels = ensembles.weighted_average_ensemble(members, weights)

    ensembles.write_prediction_file(args.output, doc_ids, probs, labels)
    summary = {"predictions": args.output, "strategy": args.strategy, "n": len(doc_ids)}
    if args.gold:
        report = _report_for_labels(doc_ids, labels, args.gold)
        if args.report:
            Path(args.report).write_text(report.to_json() + "\n", encoding="utf-8")
        summary["macro_f1"] = report.macro_f1
        summary["micro_f1"] = report.micro_f1
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    if args.trials < 1:
        raise ConfigError(f"trials must be >= 1, got {args.trials}")
    report = grad_check(trials=args.trials, seed=args.seed)
    print(json.dumps({
        "max_rel_error": report.max_rel_error,
        "worst_param": report.worst_param,
        "worst_index": list(report.worst_index),
        "worst_combo": report.worst_combo,
        "analytic": report.analytic,
        "numeric": report.numeric,
        "trials": report.trials,
        "passed": report.passed,
    }, sort_keys=True))
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _cmd_gen_synth(args: argparse.Namespace) -> int:
    examples = synth.generate_corpus(
        classes=args.classes,
        docs_per_class=args.docs_per_class,
        overlap=args.overlap,
        seed=args.seed,
        with_targets=args.targets,
    )
    corpus.save_jsonl(examples, args.output)
    print(json.dumps({"output": args.output, "n": len(examples)}, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harmkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="deterministic stratified train/validation split")
    p.add_argument("--input", required=True)
    p.add_argument("--ratio", default="4:1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stratify", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--task", choices=["harm", "targets", "both"], default="harm")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="write per-document predictions for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--task", choices=["harm", "targets"], default="harm")
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="score a prediction file against gold labels")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--task", choices=["harm", "targets"], default="harm")
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ensemble", help="aggregate member prediction files")
    p.add_argument("--members", nargs="+", required=True)
    p.add_argument("--strategy", choices=["vote", "avg", "w-avg"], required=True)
    p.add_argument("--weights", default=None, help="comma-separated, w-avg only")
    p.add_argument("--gold", default=None)
    p.add_argument("--output", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_ensemble)

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("gen-synth", help="generate a seeded synthetic corpus")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--docs-per-class", type=int, default=500)
    p.add_argument("--overlap", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--targets", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_gen_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NonFiniteLossError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
