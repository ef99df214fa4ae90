"""Labeled-document ingestion, text normalization, and train/validation splitting.

Input format: UTF-8 JSONL, one record per line with fields
  id       string, nonempty, unique within a file
  text     string
  label    optional integer in 0..3 (harm-potential level)
  targets  optional array of 5 integers in {0,1} (target-identity flags)

Normalization applied on load: Unicode NFC, URLs and @-mentions replaced by
the placeholder tokens ``<url>`` / ``<user>``, lowercasing, whitespace
collapsed to single spaces.
"""

from __future__ import annotations

import json
import random
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

NUM_CLASSES = 4
NUM_TARGETS = 5
DEFAULT_TARGET_NAMES = ("T0", "T1", "T2", "T3", "T4")

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")


def normalize_text(text: str) -> str:
    """Apply the documented normalization pipeline. Idempotent."""
    text = unicodedata.normalize("NFC", text)
    text = _URL_RE.sub("<url>", text)
    text = _MENTION_RE.sub("<user>", text)
    text = text.lower()
    return " ".join(text.split())


@dataclass(frozen=True)
class LabeledExample:
    """One document with its optional harm level and/or target-identity flags."""

    id: str
    text: str
    harm: int | None = None
    targets: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("example id must be nonempty")
        if self.harm is not None and not 0 <= self.harm < NUM_CLASSES:
            raise ValueError(f"harm label {self.harm} outside 0..{NUM_CLASSES - 1}")
        if self.targets is not None:
            if len(self.targets) != NUM_TARGETS:
                raise ValueError(f"targets must have {NUM_TARGETS} entries, got {len(self.targets)}")
            if any(t not in (0, 1) for t in self.targets):
                raise ValueError(f"target flags must be 0 or 1, got {self.targets}")


@dataclass
class DatasetSplit:
    """A disjoint, exhaustive train/validation partition plus its provenance."""

    train: list[LabeledExample]
    val: list[LabeledExample]
    seed: int
    ratio: tuple[int, int] = (4, 1)
    stratify: bool = field(default=True)


def _parse_record(raw: dict, line_no: int, path: Path, task: str, require_labels: bool) -> LabeledExample:
    for key in ("id", "text"):
        if key not in raw:
            raise ValueError(f"{path}:{line_no}: missing required field '{key}'")
    rec_id = str(raw["id"])
    text = normalize_text(str(raw["text"]))

    harm = None
    if raw.get("label") is not None:
        label = raw["label"]
        if not isinstance(label, int) or isinstance(label, bool) or not 0 <= label < NUM_CLASSES:
            raise ValueError(f"{path}:{line_no}: label {label!r} outside {{0..{NUM_CLASSES - 1}}}")
        harm = label

    targets = None
    if raw.get("targets") is not None:
        flags = raw["targets"]
        if not isinstance(flags, list) or len(flags) != NUM_TARGETS or any(t not in (0, 1) for t in flags):
            raise ValueError(f"{path}:{line_no}: targets must be an array of {NUM_TARGETS} 0/1 flags")
        targets = tuple(int(t) for t in flags)

    if require_labels:
        if task == "harm" and harm is None:
            raise ValueError(f"{path}:{line_no}: record lacks 'label' required by task=harm")
        if task == "targets" and targets is None:
            raise ValueError(f"{path}:{line_no}: record lacks 'targets' required by task=targets")
        if task == "both" and harm is None and targets is None:
            raise ValueError(f"{path}:{line_no}: record carries neither 'label' nor 'targets'")

    return LabeledExample(id=rec_id, text=text, harm=harm, targets=targets)


def load_jsonl(path: str | Path, task: str = "both", require_labels: bool = True) -> list[LabeledExample]:
    """Load labeled examples in file order, validating labels per task.

    task selects which label fields are mandatory: 'harm' requires ``label``,
    'targets' requires ``targets``, 'both' requires at least one of the two.
    ``require_labels=False`` relaxes all label requirements (prediction-time
    inputs). Blank lines are skipped.
    """
    if task not in ("harm", "targets", "both"):
        raise ValueError(f"unknown task {task!r}")
    p = Path(path)
    examples: list[LabeledExample] = []
    seen: set[str] = set()
    with p.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{p}:{line_no}: malformed JSON: {exc.msg}") from exc
            if not isinstance(raw, dict):
                raise ValueError(f"{p}:{line_no}: record is not a JSON object")
            example = _parse_record(raw, line_no, p, task, require_labels)
            if example.id in seen:
                raise ValueError(f"{p}:{line_no}: duplicate id {example.id!r}")
            seen.add(example.id)
            examples.append(example)
    return examples


def save_jsonl(examples: Iterable[LabeledExample], path: str | Path) -> None:
    """Write examples one JSON object per line, omitting absent label fields."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for ex in examples:
            rec: dict = {"id": ex.id, "text": ex.text}
            if ex.harm is not None:
                rec["label"] = ex.harm
            if ex.targets is not None:
                rec["targets"] = list(ex.targets)
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def class_distribution(data: Sequence[LabeledExample]) -> dict[int, int]:
    """Count harm labels; every class 0..3 is keyed even when absent."""
    counts = {c: 0 for c in range(NUM_CLASSES)}
    for ex in data:
        if ex.harm is None:
            raise ValueError(f"example {ex.id!r} has no harm label")
        counts[ex.harm] += 1
    return counts


def _train_count(n: int, train_frac: float) -> int:
    # Clamp keeps both sides nonempty for the smallest legal strata.
    return min(max(round(n * train_frac), 1), n - 1)


def split_train_val(
    data: Sequence[LabeledExample],
    ratio: tuple[int, int] = (4, 1),
    seed: int = 0,
    stratify: bool = True,
) -> DatasetSplit:
    """Deterministic train/validation split at ratio train:val (default 4:1).

    With stratify=True the per-class train fraction is within one example of
    ratio[0]/(ratio[0]+ratio[1]); every class must then have at least two
    members and every record must carry a harm label.
    """
    if len(data) < 5:
        raise ValueError(f"need at least 5 examples to split, got {len(data)}")
    if ratio[0] < 1 or ratio[1] < 1:
        raise ValueError(f"ratio parts must be positive, got {ratio}")
    train_frac = ratio[0] / (ratio[0] + ratio[1])
    rng = random.Random(seed)

    train: list[LabeledExample] = []
    val: list[LabeledExample] = []
    if stratify:
        by_class: dict[int, list[LabeledExample]] = {}
        for ex in data:
            if ex.harm is None:
                raise ValueError(f"stratified split requires harm labels; {ex.id!r} has none")
            by_class.setdefault(ex.harm, []).append(ex)
        for label in sorted(by_class):
            members = by_class[label]
            if len(members) < 2:
                raise ValueError(f"class {label} has a single member; cannot stratify")
            rng.shuffle(members)
            n_train = _train_count(len(members), train_frac)
            train.extend(members[:n_train])
            val.extend(members[n_train:])
    else:
        shuffled = list(data)
        rng.shuffle(shuffled)
        n_train = _train_count(len(shuffled), train_frac)
        train = shuffled[:n_train]
        val = shuffled[n_train:]

    return DatasetSplit(train=train, val=val, seed=seed, ratio=ratio, stratify=stratify)
