"""Combine per-document probability distributions from several trained models.

Three strategies: hard majority vote, elementwise averaging, and weighted
averaging with a convex weight vector. Vote ties are broken by the highest
summed probability among the tied labels, then by the smallest label index;
argmax ties in the soft strategies also resolve to the smallest index.

Member prediction files are UTF-8 JSONL: {"id": ..., "probs": [p0..p3]},
optionally with a "label" field (ignored on read, emitted on write).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .metrics import MetricsReport

_ROW_SUM_TOL = 1e-6
_WEIGHT_SUM_TOL = 1e-9


@dataclass
class MemberPrediction:
    """One model's probability rows, aligned with its document ids."""

    member_id: str
    doc_ids: list[str]
    probs: np.ndarray  # (N, num_classes)

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2 or self.probs.shape[0] != len(self.doc_ids):
            raise ValueError(
                f"member {self.member_id!r}: {len(self.doc_ids)} ids but probs shape {self.probs.shape}"
            )
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise ValueError(f"member {self.member_id!r}: duplicate document ids")
        if np.any(self.probs < -_ROW_SUM_TOL) or np.any(
            np.abs(self.probs.sum(axis=1) - 1.0) > _ROW_SUM_TOL
        ):
            raise ValueError(f"member {self.member_id!r}: rows are not probability distributions")


def load_member_file(path: str | Path) -> MemberPrediction:
    p = Path(path)
    doc_ids: list[str] = []
    rows: list[list[float]] = []
    with p.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{p}:{line_no}: malformed JSON: {exc.msg}") from exc
            if "id" not in rec or "probs" not in rec:
                raise ValueError(f"{p}:{line_no}: record needs 'id' and 'probs'")
            doc_ids.append(str(rec["id"]))
            rows.append([float(x) for x in rec["probs"]])
    if not rows:
        raise ValueError(f"{p}: no predictions found")
    return MemberPrediction(member_id=p.name, doc_ids=doc_ids, probs=np.asarray(rows))


def write_prediction_file(
    path: str | Path,
    doc_ids: Sequence[str],
    probs: np.ndarray,
    labels: Sequence[int] | None = None,
) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for i, doc_id in enumerate(doc_ids):
            rec: dict = {"id": doc_id, "probs": [float(x) for x in probs[i]]}
            if labels is not None:
                rec["label"] = int(labels[i])
            fh.write(json.dumps(rec) + "\n")


def _aligned_stack(members: Sequence[MemberPrediction]) -> tuple[list[str], np.ndarray]:
    """Reindex every member to the first member's document order."""
    if len(members) < 2:
        raise ValueError(f"ensembling needs at least 2 members, got {len(members)}")
    reference = members[0].doc_ids
    ref_set = set(reference)
    stacks = [members[0].probs]
    for member in members[1:]:
        member_set = set(member.doc_ids)
        if member_set != ref_set:
            missing = sorted(ref_set - member_set)
            extra = sorted(member_set - ref_set)
            parts = []
            if missing:
                parts.append(f"missing ids {missing}")
            if extra:
                parts.append(f"unexpected ids {extra}")
            raise ValueError(f"member {member.member_id!r} misaligned: " + "; ".join(parts))
        index = {doc_id: row for row, doc_id in enumerate(member.doc_ids)}
        stacks.append(member.probs[[index[d] for d in reference]])
    return list(reference), np.stack(stacks)  # (M, N, C)


def _argmax_smallest(row: np.ndarray) -> int:
    return int(np.argmax(row))  # np.argmax returns the first (smallest) index on ties


def majority_vote(members: Sequence[MemberPrediction]) -> tuple[list[str], list[int]]:
    """Hard vote over member argmax labels, per document."""
    doc_ids, stack = _aligned_stack(members)
    n_docs = stack.shape[1]
    labels: list[int] = []
    for d in range(n_docs):
        votes = Counter(_argmax_smallest(stack[m, d]) for m in range(stack.shape[0]))
        top = max(votes.values())
        tied = [label for label, count in votes.items() if count == top]
        if len(tied) > 1:
            summed = stack[:, d, :].sum(axis=0)
            best = max(summed[label] for label in tied)
            tied = [label for label in tied if summed[label] == best]
        labels.append(min(tied))
    return doc_ids, labels


def average_ensemble(members: Sequence[MemberPrediction]) -> tuple[list[str], np.ndarray, list[int]]:
    """Elementwise mean of member distributions, then argmax."""
    doc_ids, stack = _aligned_stack(members)
    mean = stack.sum(axis=0) / stack.shape[0]
    labels = [_argmax_smallest(row) for row in mean]
    return doc_ids, mean, labels


def weighted_average_ensemble(
    members: Sequence[MemberPrediction],
    weights: Sequence[float],
) -> tuple[list[str], np.ndarray, list[int]]:
    """Convex combination of member distributions, then argmax."""
    doc_ids, stack = _aligned_stack(members)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (stack.shape[0],):
        raise ValueError(f"{stack.shape[0]} members but {w.size} weights")
    if np.any(w < 0.0):
        raise ValueError("weights must be nonnegative")
    if abs(w.sum() - 1.0) > _WEIGHT_SUM_TOL:
        raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
    combined = np.zeros(stack.shape[1:])
    for m in range(stack.shape[0]):
        combined += w[m] * stack[m]
    labels = [_argmax_smallest(row) for row in combined]
    return doc_ids, combined, labels


def derive_weights(val_reports: Sequence[MetricsReport | float]) -> list[float]:
    """Validation-F1-proportional weights; uniform when every F1 is zero."""
    if len(val_reports) < 2:
        raise ValueError(f"need at least 2 members, got {len(val_reports)}")
    f1s = [r.macro_f1 if isinstance(r, MetricsReport) else float(r) for r in val_reports]
    if any(f1 < 0.0 for f1 in f1s):
        raise ValueError("macro-F1 values must be nonnegative")
    total = sum(f1s)
    if total == 0.0:
        return [1.0 / len(f1s)] * len(f1s)
    return [f1 / total for f1 in f1s]
