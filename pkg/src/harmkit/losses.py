"""Training objectives and their exact analytic gradients.

Covers softmax cross-entropy (harm head), mean binary cross-entropy
(targets head), the supervised in-batch InfoNCE contrastive loss, and the
combined objective ce + lambda * nce. The backward pass is hand-derived;
`harmkit.trainer.grad_check` verifies every partial against central finite
differences.

InfoNCE convention: for anchor i the positives are the other batch members
sharing its class label; the denominator runs over all j != i; anchors
without positives are skipped; the loss is the mean over contributing
anchors (0.0 when there are none). Similarities are cosine, computed as dot
products of the L2-normalized representations, so every exponent is bounded
by 1/tau. A zero representation stays zero under normalization and
contributes zero similarity and zero gradient (degenerate empty-document
case).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .featurizer import EncodedDoc
from .model import BatchActivations, ModelParams, forward_batch, sigmoid, softmax

_LOG_CLAMP = 1e-12


class NonFiniteLossError(RuntimeError):
    """Raised when a loss term evaluates to NaN or infinity."""


@dataclass(frozen=True)
class ContrastiveConfig:
    """Temperature tau and weight lam of the contrastive term."""

    tau: float = 0.1
    lam: float = 0.5

    def __post_init__(self) -> None:
        if not self.tau > 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.lam < 0.0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")


@dataclass
class GradientSet:
    """Partial derivatives of the batch loss, shape-matched to ModelParams."""

    embed: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    wc: np.ndarray
    bc: np.ndarray
    wt: np.ndarray
    bt: np.ndarray

    FIELDS = ModelParams.FIELDS

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in self.FIELDS]

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "GradientSet":
        return cls(**{name: np.zeros_like(arr) for name, arr in params.arrays()})


def cosine_sim(x: np.ndarray, y: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector has zero norm."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(x @ y / (nx * ny))


def cross_entropy(probs: np.ndarray, true_class: int) -> float:
    """Negative log probability of the true class, clamped at 1e-12."""
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= true_class < probs.shape[-1]:
        raise ValueError(f"true_class {true_class} out of range for {probs.shape[-1]} classes")
    return float(-np.log(max(probs[true_class], _LOG_CLAMP)))


def binary_cross_entropy(sigmas: np.ndarray, targets: tuple[int, ...] | np.ndarray) -> float:
    """Mean over targets of the per-flag binary cross-entropy."""
    sigmas = np.clip(np.asarray(sigmas, dtype=np.float64), _LOG_CLAMP, 1.0 - _LOG_CLAMP)
    t = np.asarray(targets, dtype=np.float64)
    if sigmas.shape != t.shape:
        raise ValueError(f"shape mismatch: {sigmas.shape} vs {t.shape}")
    return float(np.mean(-(t * np.log(sigmas) + (1.0 - t) * np.log(1.0 - sigmas))))


def _normalize_rows(reps: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(reps, axis=1)
    out = np.zeros_like(reps)
    nonzero = norms > 0.0
    out[nonzero] = reps[nonzero] / norms[nonzero, None]
    return out


def info_nce(reps: np.ndarray, labels: np.ndarray, tau: float) -> float:
    """Supervised in-batch InfoNCE over cosine similarities (see module docstring)."""
    reps = np.asarray(reps, dtype=np.float64)
    labels = np.asarray(labels)
    if reps.ndim != 2 or reps.shape[0] != labels.shape[0]:
        raise ValueError(f"reps {reps.shape} and labels {labels.shape} are misaligned")
    n = reps.shape[0]
    if n < 2:
        raise ValueError(f"contrastive batch needs at least 2 members, got {n}")
    if not tau > 0.0:
        raise ValueError(f"tau must be positive, got {tau}")

    z_hat = _normalize_rows(reps)
    sims = z_hat @ z_hat.T
    pos_mask = (labels[:, None] == labels[None, :]) & ~np.eye(n, dtype=bool)

    per_anchor = []
    for i in range(n):
        positives = np.flatnonzero(pos_mask[i])
        if positives.size == 0:
            continue
        others = np.concatenate([np.arange(i), np.arange(i + 1, n)])
        log_denom = _logsumexp(sims[i, others] / tau)
        per_anchor.append(float(np.mean(log_denom - sims[i, positives] / tau)))
    if not per_anchor:
        return 0.0
    return float(np.mean(per_anchor))


def _logsumexp(x: np.ndarray) -> float:
    m = x.max()
    return float(m + np.log(np.exp(x - m).sum()))


def combined_loss(ce: float, nce: float, cfg: ContrastiveConfig) -> float:
    return ce + cfg.lam * nce


def _check_finite(value: float, term: str) -> None:
    if not np.isfinite(value):
        raise NonFiniteLossError(f"{term} term diverged (value {value})")


def gradients(
    params: ModelParams,
    docs: list[EncodedDoc],
    labels: np.ndarray,
    cfg: ContrastiveConfig,
    task: str = "harm",
) -> tuple[float, GradientSet]:
    """Batch-mean combined loss and its exact gradient for every parameter.

    For task='harm', labels is a (B,) array of class indices and the loss is
    mean cross-entropy plus lam * InfoNCE over the normalized hidden vectors.
    For task='targets', labels is a (B, num_targets) 0/1 matrix and the loss
    is the batch mean of the per-document BCE (the contrastive term does not
    apply to multi-label sets).
    """
    if task not in ("harm", "targets"):
        raise ValueError(f"unknown task {task!r}")
    batch = len(docs)
    if batch == 0:
        raise ValueError("empty batch")
    labels = np.asarray(labels)
    if labels.shape[0] != batch:
        raise ValueError(f"{batch} docs but {labels.shape[0]} label rows")

    acts = forward_batch(params, docs)
    grads = GradientSet.zeros_like(params)

    if task == "harm":
        if cfg.lam > 0.0 and batch < 2:
            raise ValueError("contrastive loss needs batch size >= 2")
        loss, g_z = _harm_backward(params, acts, labels, cfg, grads)
    else:
        loss, g_z = _targets_backward(params, acts, labels, grads)

    # Shared trunk: tanh hidden layer, then mean pooling into embedding rows.
    g_a = g_z * (1.0 - acts.z**2)
    grads.w1 += acts.h0.T @ g_a
    grads.b1 += g_a.sum(axis=0)
    g_h0 = g_a @ params.w1.T
    for i, doc in enumerate(docs):
        if doc.length:
            np.add.at(grads.embed, doc.ids, g_h0[i] / doc.length)
    return loss, grads


def _harm_backward(
    params: ModelParams,
    acts: BatchActivations,
    classes: np.ndarray,
    cfg: ContrastiveConfig,
    grads: GradientSet,
) -> tuple[float, np.ndarray]:
    batch = acts.z.shape[0]
    num_classes = acts.class_logits.shape[1]
    classes = classes.astype(np.int64)
    if classes.min() < 0 or classes.max() >= num_classes:
        raise ValueError(f"class labels must be in 0..{num_classes - 1}")
    probs = softmax(acts.class_logits)
    picked = probs[np.arange(batch), classes]
    mean_ce = float(np.mean(-np.log(np.maximum(picked, _LOG_CLAMP))))
    _check_finite(mean_ce, "cross-entropy")

    d_logits = probs.copy()
    d_logits[np.arange(batch), classes] -= 1.0
    d_logits /= batch
    grads.wc += acts.z.T @ d_logits
    grads.bc += d_logits.sum(axis=0)
    g_z = d_logits @ params.wc.T

    nce = 0.0
    if cfg.lam > 0.0:
        nce, g_zhat = _info_nce_backward(acts.z_hat, classes, cfg.tau)
        _check_finite(nce, "contrastive")
        # Through the normalization z_hat = z / |z|: project out the radial
        # component. Zero-norm rows stay zero (documented degenerate case).
        nonzero = acts.z_norm > 0.0
        radial = (g_zhat[nonzero] * acts.z_hat[nonzero]).sum(axis=1, keepdims=True)
        g_z[nonzero] += cfg.lam * (g_zhat[nonzero] - radial * acts.z_hat[nonzero]) / acts.z_norm[nonzero, None]

    return combined_loss(mean_ce, nce, cfg), g_z


def _info_nce_backward(z_hat: np.ndarray, classes: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    """InfoNCE value plus its gradient with respect to the normalized reps."""
    n = z_hat.shape[0]
    sims = z_hat @ z_hat.T
    eye = np.eye(n, dtype=bool)
    pos_mask = (classes[:, None] == classes[None, :]) & ~eye
    pos_counts = pos_mask.sum(axis=1)
    anchors = pos_counts > 0
    n_anchors = int(anchors.sum())
    if n_anchors == 0:
        return 0.0, np.zeros_like(z_hat)

    scaled = sims / tau
    scaled[eye] = -np.inf  # excludes the diagonal from every denominator
    row_max = scaled.max(axis=1, keepdims=True)
    exp = np.exp(scaled - row_max)
    denom = exp.sum(axis=1, keepdims=True)
    log_denom = np.log(denom) + row_max  # (n, 1) logsumexp over j != i

    per_anchor = np.zeros(n)
    per_anchor[anchors] = (
        log_denom[anchors, 0]
        - (sims * pos_mask).sum(axis=1)[anchors] / tau / pos_counts[anchors]
    )
    nce = float(per_anchor[anchors].mean())

    # dL/d sims[i, j] for contributing anchors: softmax weight minus the
    # positive indicator, averaged over anchors and scaled by 1/tau.
    softmax_w = exp / denom
    g_sims = np.zeros((n, n))
    g_sims[anchors] = (
        softmax_w[anchors] - pos_mask[anchors] / pos_counts[anchors, None]
    ) / (tau * n_anchors)
    g_sims[eye] = 0.0
    g_zhat = g_sims @ z_hat + g_sims.T @ z_hat
    return nce, g_zhat


def _targets_backward(
    params: ModelParams,
    acts: BatchActivations,
    target_rows: np.ndarray,
    grads: GradientSet,
) -> tuple[float, np.ndarray]:
    batch, n_targets = acts.target_logits.shape
    if target_rows.shape != (batch, n_targets):
        raise ValueError(f"target labels must be ({batch}, {n_targets}), got {target_rows.shape}")
    sigmas = sigmoid(acts.target_logits)
    t = target_rows.astype(np.float64)
    clamped = np.clip(sigmas, _LOG_CLAMP, 1.0 - _LOG_CLAMP)
    loss = float(np.mean(
        -(t * np.log(clamped) + (1.0 - t) * np.log(1.0 - clamped)).mean(axis=1)
    ))
    _check_finite(loss, "binary cross-entropy")

    d_logits = (sigmas - t) / (n_targets * batch)
    grads.wt += acts.z.T @ d_logits
    grads.bt += d_logits.sum(axis=0)
    return loss, d_logits @ params.wt.T
