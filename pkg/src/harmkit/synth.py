"""Seeded synthetic corpora for end-to-end checks and experiments.

Each class owns a small disjoint keyword set; a shared pool provides
class-independent filler. `overlap` is the probability that a token is
drawn from the shared pool instead of the class keywords, so overlap=0
yields a trivially separable corpus and higher values make the classes
increasingly confusable. Optional target-identity flags are made learnable
by injecting a dedicated trigger token for every active flag.
"""

from __future__ import annotations

import numpy as np

from .corpus import LabeledExample, NUM_CLASSES, NUM_TARGETS


def generate_corpus(
    classes: int = 4,
    docs_per_class: int = 500,
    overlap: float = 0.0,
    seed: int = 0,
    words_per_class: int = 5,
    shared_pool: int = 40,
    doc_len: tuple[int, int] = (8, 20),
    with_targets: bool = True,
) -> list[LabeledExample]:
    if not 2 <= classes <= NUM_CLASSES:
        raise ValueError(f"classes must be in 2..{NUM_CLASSES}, got {classes}")
    if docs_per_class < 1:
        raise ValueError(f"docs_per_class must be >= 1, got {docs_per_class}")
    if not 0.0 <= overlap <= 1.0:
        raise ValueError(f"overlap must be in [0, 1], got {overlap}")
    if doc_len[0] < 1 or doc_len[1] < doc_len[0]:
        raise ValueError(f"invalid doc_len range {doc_len}")

    rng = np.random.default_rng(seed)
    class_words = [[f"c{c}w{k}" for k in range(words_per_class)] for c in range(classes)]
    shared_words = [f"s{k}" for k in range(shared_pool)]

    examples: list[LabeledExample] = []
    doc_id = 0
    for c in range(classes):
        for _ in range(docs_per_class):
            length = int(rng.integers(doc_len[0], doc_len[1] + 1))
            tokens = []
            for _ in range(length):
                if shared_pool and rng.random() < overlap:
                    tokens.append(shared_words[int(rng.integers(0, shared_pool))])
                else:
                    tokens.append(class_words[c][int(rng.integers(0, words_per_class))])
            targets = None
            if with_targets:
                flags = [int(rng.random() < 0.5) for _ in range(NUM_TARGETS)]
                tokens.extend(f"t{k}" for k, on in enumerate(flags) if on)
                targets = tuple(flags)
            perm = rng.permutation(len(tokens))
            text = " ".join(tokens[i] for i in perm)
            examples.append(
                LabeledExample(id=f"d{doc_id:05d}", text=text, harm=c, targets=targets)
            )
            doc_id += 1
    return examples
