"""Deterministic mini-batch training with validation-F1 model selection.

All randomness flows from explicit seeds: parameter init from the model
seed, per-epoch shuffles from (train seed, epoch). Two runs with identical
configs and data produce identical reports. The checkpoint kept is the one
from the epoch with the best validation F1 (macro-F1 for the harm task,
micro-F1 over thresholded decisions for the targets task); ties keep the
earliest epoch.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import LabeledExample, NUM_CLASSES
from .featurizer import EncodedDoc, FeatureConfig, batch_encode
from .losses import ContrastiveConfig, GradientSet, gradients
from .metrics import confusion, classification_report, multilabel_report
from .model import ModelConfig, ModelParams, forward_batch, init_params, save_params, sigmoid

_EVAL_CHUNK = 256
_GRAD_TOL = 1e-4
# Floor for the relative-error denominator: partials smaller than this are
# compared absolutely, which keeps finite-difference roundoff from
# registering as disagreement on near-zero gradients.
_REL_FLOOR = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 0.05
    optimizer: str = "adam"
    seed: int = 0
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    task: str = "harm"

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.contrastive.lam > 0.0 and self.task == "harm" and self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 when the contrastive weight is positive")
        if not self.learning_rate > 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.task not in ("harm", "targets"):
            raise ValueError(f"task must be 'harm' or 'targets', got {self.task!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


@dataclass
class TrainReport:
    task: str
    train_loss: list[float]
    val_f1: list[float]
    best_epoch: int
    best_val_f1: float
    checkpoint: str | None

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "epochs": len(self.train_loss),
            "train_loss": self.train_loss,
            "val_f1": self.val_f1,
            "best_epoch": self.best_epoch,
            "best_val_f1": self.best_val_f1,
            "checkpoint": self.checkpoint,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class SgdOptimizer:
    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: ModelParams, grads: GradientSet) -> None:
        for name, arr in params.arrays():
            arr -= self.learning_rate * getattr(grads, name)


class AdamOptimizer:
    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: ModelParams, grads: GradientSet) -> None:
        self.t += 1
        for name, arr in params.arrays():
            g = getattr(grads, name)
            m = self._m.setdefault(name, np.zeros_like(arr))
            v = self._v.setdefault(name, np.zeros_like(arr))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            arr -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def _make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "sgd":
        return SgdOptimizer(cfg.learning_rate)
    return AdamOptimizer(cfg.learning_rate)


def make_batches(
    data: Sequence,
    batch_size: int,
    seed: int,
    epoch: int,
    drop_singleton: bool = False,
) -> list[list]:
    """Shuffle deterministically by (seed, epoch) and chunk into batches.

    The trailing batch may be short; with drop_singleton a trailing batch of
    one element is dropped (a single document has no contrastive pairs).
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(len(data))
    batches = [
        [data[i] for i in order[start : start + batch_size]]
        for start in range(0, len(data), batch_size)
    ]
    if drop_singleton and batches and len(batches[-1]) < 2:
        batches.pop()
    return batches


def _labels_array(batch_labels: list, task: str) -> np.ndarray:
    if task == "harm":
        return np.asarray(batch_labels, dtype=np.int64)
    return np.asarray(batch_labels, dtype=np.float64)


def train_epoch(
    params: ModelParams,
    batches: list[list[tuple[EncodedDoc, object]]],
    cfg: TrainConfig,
    optimizer,
) -> float:
    """Run one optimizer pass over the prepared batches; returns mean batch loss."""
    if not batches:
        raise ValueError("no batches to train on")
    losses = []
    for batch in batches:
        docs = [doc for doc, _ in batch]
        labels = _labels_array([label for _, label in batch], cfg.task)
        loss, grads = gradients(params, docs, labels, cfg.contrastive, task=cfg.task)
        optimizer.step(params, grads)
        losses.append(loss)
    return float(np.mean(losses))


def _extract_labels(examples: Sequence[LabeledExample], task: str) -> list:
    labels = []
    for ex in examples:
        if task == "harm":
            if ex.harm is None:
                raise ValueError(f"example {ex.id!r} lacks the harm label required for training")
            labels.append(ex.harm)
        else:
            if ex.targets is None:
                raise ValueError(f"example {ex.id!r} lacks the target flags required for training")
            labels.append(ex.targets)
    return labels


def evaluate_params(
    params: ModelParams,
    docs: list[EncodedDoc],
    labels: list,
    task: str,
    eta: float = 0.5,
) -> float:
    """Validation score: macro-F1 (harm) or micro-F1 over decisions (targets)."""
    if task == "harm":
        preds: list[int] = []
        for start in range(0, len(docs), _EVAL_CHUNK):
            acts = forward_batch(params, docs[start : start + _EVAL_CHUNK])
            preds.extend(int(i) for i in np.argmax(acts.class_logits, axis=1))
        cm = confusion(labels, preds, num_classes=params.bc.shape[0])
        return classification_report(cm).macro_f1
    sig_rows = []
    for start in range(0, len(docs), _EVAL_CHUNK):
        acts = forward_batch(params, docs[start : start + _EVAL_CHUNK])
        sig_rows.append(sigmoid(acts.target_logits))
    return multilabel_report(labels, np.vstack(sig_rows), eta=eta).micro_f1


def train(
    train_set: Sequence[LabeledExample],
    val_set: Sequence[LabeledExample],
    model_cfg: ModelConfig,
    feature_cfg: FeatureConfig,
    train_cfg: TrainConfig,
    checkpoint_path: str | Path | None = None,
    progress=None,
) -> tuple[ModelParams, TrainReport]:
    """Fine-tune from scratch, keeping the epoch with the best validation F1."""
    if not train_set or not val_set:
        raise ValueError("train and validation sets must be nonempty")

    enc_train = batch_encode([ex.text for ex in train_set], feature_cfg)
    enc_val = batch_encode([ex.text for ex in val_set], feature_cfg)
    train_labels = _extract_labels(train_set, train_cfg.task)
    val_labels = _extract_labels(val_set, train_cfg.task)

    contrastive_on = train_cfg.task == "harm" and train_cfg.contrastive.lam > 0.0
    if contrastive_on:
        present = set(train_labels)
        missing = sorted(set(range(NUM_CLASSES)) - present)
        if missing:
            warnings.warn(
                f"classes {missing} absent from the training set; their contrastive anchors are skipped",
                stacklevel=2,
            )
    if train_cfg.task == "targets" and train_cfg.contrastive.lam > 0.0:
        warnings.warn("the contrastive term does not apply to the targets task; ignoring lambda", stacklevel=2)

    items = list(zip(enc_train, train_labels))
    params = init_params(model_cfg)
    optimizer = _make_optimizer(train_cfg)

    loss_series: list[float] = []
    f1_series: list[float] = []
    best_epoch = -1
    best_f1 = -1.0
    best_params = params.copy()
    for epoch in range(train_cfg.epochs):
        batches = make_batches(
            items, train_cfg.batch_size, train_cfg.seed, epoch, drop_singleton=contrastive_on
        )
        mean_loss = train_epoch(params, batches, train_cfg, optimizer)
        val_f1 = evaluate_params(params, enc_val, val_labels, train_cfg.task)
        loss_series.append(mean_loss)
        f1_series.append(val_f1)
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_epoch = epoch
            best_params = params.copy()
        if progress is not None:
            progress(epoch, mean_loss, val_f1)

    if checkpoint_path is not None:
        save_params(best_params, model_cfg, feature_cfg, checkpoint_path)
    report = TrainReport(
        task=train_cfg.task,
        train_loss=loss_series,
        val_f1=f1_series,
        best_epoch=best_epoch,
        best_val_f1=best_f1,
        checkpoint=str(checkpoint_path) if checkpoint_path is not None else None,
    )
    return best_params, report


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: tuple[int, ...]
    worst_combo: str
    analytic: float
    numeric: float
    trials: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < _GRAD_TOL


# (tau, lam, task) combinations cycled by grad_check; the targets row checks
# the BCE backward path, where the contrastive term plays no part.
_CHECK_COMBOS = [
    (0.05, 0.0, "harm"),
    (0.05, 0.5, "harm"),
    (0.05, 1.0, "harm"),
    (0.1, 0.0, "harm"),
    (0.1, 0.5, "harm"),
    (0.1, 1.0, "harm"),
    (1.0, 0.0, "harm"),
    (1.0, 0.5, "harm"),
    (1.0, 1.0, "harm"),
    (0.1, 0.0, "targets"),
]


def grad_check(trials: int = 30, seed: int = 0, step: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    Each trial draws a small random model (vocab 64, dims 8) and a batch of
    6 random documents, then perturbs every single parameter by +/-step. The
    relative error uses max(|analytic|, |numeric|, 1e-6) as denominator (see
    _REL_FLOOR).
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    vocab_size, embed_dim, hidden_dim = 64, 8, 8
    worst = GradCheckReport(
        max_rel_error=0.0, worst_param="", worst_index=(), worst_combo="", analytic=0.0, numeric=0.0, trials=trials
    )
    for trial in range(trials):
        tau, lam, task = _CHECK_COMBOS[trial % len(_CHECK_COMBOS)]
        cfg = ContrastiveConfig(tau=tau, lam=lam)
        rng = np.random.default_rng([seed, trial])
        params = ModelParams(
            embed=rng.normal(0.0, 0.5, (vocab_size, embed_dim)),
            w1=rng.normal(0.0, 0.5, (embed_dim, hidden_dim)),
            b1=rng.normal(0.0, 0.5, hidden_dim),
            wc=rng.normal(0.0, 0.5, (hidden_dim, NUM_CLASSES)),
            bc=rng.normal(0.0, 0.5, NUM_CLASSES),
            wt=rng.normal(0.0, 0.5, (hidden_dim, 5)),
            bt=rng.normal(0.0, 0.5, 5),
        )
        docs = []
        for _ in range(6):
            ids = rng.integers(0, vocab_size, size=int(rng.integers(1, 9)))
            docs.append(EncodedDoc(ids=ids, length=len(ids)))
        if task == "harm":
            # 6 draws from 3 classes guarantee at least one positive pair.
            labels = rng.integers(0, 3, size=6)
        else:
            labels = rng.integers(0, 2, size=(6, 5)).astype(np.float64)

        _, analytic = gradients(params, docs, labels, cfg, task=task)
        for name, arr in params.arrays():
            grad_arr = getattr(analytic, name)
            for index in np.ndindex(arr.shape):
                original = arr[index]
                arr[index] = original + step
                loss_plus, _ = gradients(params, docs, labels, cfg, task=task)
                arr[index] = original - step
                loss_minus, _ = gradients(params, docs, labels, cfg, task=task)
                arr[index] = original
                numeric = (loss_plus - loss_minus) / (2.0 * step)
                a = float(grad_arr[index])
                rel = abs(a - numeric) / max(abs(a), abs(numeric), _REL_FLOOR)
                if rel > worst.max_rel_error:
                    worst = GradCheckReport(
                        max_rel_error=rel,
                        worst_param=name,
                        worst_index=index,
                        worst_combo=f"trial={trial} tau={tau} lam={lam} task={task}",
                        analytic=a,
                        numeric=numeric,
                        trials=trials,
                    )
    return worst
