"""Loading, normalization, and splitting behavior."""

import json
from collections import Counter

import numpy as np
import pytest

from harmkit.corpus import (
    LabeledExample,
    class_distribution,
    load_jsonl,
    normalize_text,
    save_jsonl,
    split_train_val,
)


def write_lines(path, records):
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


class TestNormalize:
    def test_url_and_mention_placeholders(self):
        assert normalize_text("see HTTPS://ex.com/x?q=1 by @Alice") == "see <url> by <user>"

    def test_www_url(self):
        assert normalize_text("www.example.org/path rest") == "<url> rest"

    def test_lowercase_and_whitespace_collapse(self):
        assert normalize_text("  A  \t B\nC ") == "a b c"

    def test_nfc_normalization(self):
        # e + combining acute composes to a single code point
        assert normalize_text("é") == "é"

    def test_caseless_scripts_untouched(self):
        assert normalize_text("नमस्ते दुनिया") == "नमस्ते दुनिया"

    def test_idempotent(self):
        text = "Visit https://a.b @you   now É"
        once = normalize_text(text)
        assert normalize_text(once) == once


class TestLoadJsonl:
    def test_field_mapping(self, tmp_path):
        path = tmp_path / "data.jsonl"
        write_lines(path, [{"id": "a", "text": "x", "label": 2}])
        examples = load_jsonl(path, task="harm")
        assert examples[0].id == "a"
        assert examples[0].harm == 2
        assert examples[0].targets is None

    def test_order_preserved(self, tmp_path):
        path = tmp_path / "data.jsonl"
        write_lines(path, [{"id": f"r{i}", "text": "t", "label": i % 4} for i in range(3)])
        examples = load_jsonl(path, task="harm")
        assert [ex.id for ex in examples] == ["r0", "r1", "r2"]

    def test_label_out_of_range(self, tmp_path):
        path = tmp_path / "data.jsonl"
        write_lines(path, [{"id": "b", "text": "y", "label": 7}])
        with pytest.raises(ValueError, match="label"):
            load_jsonl(path, task="harm")

    def test_malformed_line_names_line_number(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text('{"id": "a", "text": "x", "label": 1}\n{"broken\n', encoding="utf-8")
        with pytest.raises(ValueError, match=":2"):
            load_jsonl(path, task="harm")

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "data.jsonl"
        write_lines(path, [{"id": "a", "text": "x", "label": 1}, {"id": "a", "text": "y", "label": 2}])
        with pytest.raises(ValueError, match="duplicate"):
            load_jsonl(path, task="harm")

    def test_targets_parsing(self, tmp_path):
        path = tmp_path / "data.jsonl"
        write_lines(path, [{"id": "a", "text": "x", "targets": [1, 0, 0, 1, 0]}])
        examples = load_jsonl(path, task="targets")
        assert examples[0].targets == (1, 0, 0, 1, 0)

    def test_targets_wrong_arity(self, tmp_path):
        path = tmp_path / "data.jsonl"
        write_lines(path, [{"id": "a", "text": "x", "targets": [1, 0]}])
        with pytest.raises(ValueError, match="targets"):
            load_jsonl(path, task="targets")

    def test_task_requirements(self, tmp_path):
        path = tmp_path / "data.jsonl"
        write_lines(path, [{"id": "a", "text": "x", "label": 1}])
        with pytest.raises(ValueError, match="targets"):
            load_jsonl(path, task="targets")
        assert load_jsonl(path, task="both")[0].harm == 1

    def test_unlabeled_allowed_when_not_required(self, tmp_path):
        path = tmp_path / "data.jsonl"
        write_lines(path, [{"id": "a", "text": "x"}])
        examples = load_jsonl(path, task="harm", require_labels=False)
        assert examples[0].harm is None

    def test_save_load_idempotent(self, tmp_path):
        path = tmp_path / "data.jsonl"
        write_lines(path, [
            {"id": "a", "text": "Hello @Bob HTTP://x.y", "label": 1, "targets": [0, 1, 0, 0, 1]},
            {"id": "b", "text": "plain", "label": 0},
        ])
        first = load_jsonl(path, task="both")
        out = tmp_path / "round.jsonl"
        save_jsonl(first, out)
        assert load_jsonl(out, task="both") == first


class TestClassDistribution:
    def test_counting(self):
        data = [LabeledExample(id=str(i), text="t", harm=h) for i, h in enumerate([0, 0, 1, 3])]
        assert class_distribution(data) == {0: 2, 1: 1, 2: 0, 3: 1}

    def test_empty(self):
        assert class_distribution([]) == {0: 0, 1: 0, 2: 0, 3: 0}

    def test_missing_label(self):
        with pytest.raises(ValueError, match="no harm label"):
            class_distribution([LabeledExample(id="a", text="t")])

    def test_seeded_uniform_counts_match_independent_tally(self):
        rng = np.random.default_rng(123)
        labels = [int(x) for x in rng.integers(0, 4, size=1000)]
        data = [LabeledExample(id=str(i), text="t", harm=h) for i, h in enumerate(labels)]
        counts = class_distribution(data)
        assert counts == dict(sorted(Counter(labels).items()))
        assert sum(counts.values()) == 1000
        assert all(200 <= counts[c] <= 300 for c in range(4))


def make_examples(labels):
    return [LabeledExample(id=f"e{i}", text="t", harm=h) for i, h in enumerate(labels)]


class TestSplit:
    def test_ratio_80_20(self):
        data = make_examples([i % 4 for i in range(100)])
        split = split_train_val(data, ratio=(4, 1), seed=3, stratify=False)
        assert len(split.train) == 80
        assert len(split.val) == 20

    def test_deterministic(self):
        data = make_examples([i % 4 for i in range(37)])
        a = split_train_val(data, seed=9)
        b = split_train_val(data, seed=9)
        assert [ex.id for ex in a.train] == [ex.id for ex in b.train]
        assert [ex.id for ex in a.val] == [ex.id for ex in b.val]

    def test_stratified_counts_two_even_classes(self):
        # 50 of class 0 and 50 of class 1: per-stratum counts enumerate to 40/10.
        data = make_examples([0] * 50 + [1] * 50)
        split = split_train_val(data, ratio=(4, 1), seed=0, stratify=True)
        train_counts = Counter(ex.harm for ex in split.train)
        val_counts = Counter(ex.harm for ex in split.val)
        assert train_counts == {0: 40, 1: 40}
        assert val_counts == {0: 10, 1: 10}

    def test_too_small(self):
        with pytest.raises(ValueError, match="at least 5"):
            split_train_val(make_examples([0, 1, 2, 3]), seed=0)

    def test_singleton_stratum(self):
        data = make_examples([0, 0, 0, 0, 1])
        with pytest.raises(ValueError, match="single member"):
            split_train_val(data, seed=0, stratify=True)

    def test_stratify_requires_harm_labels(self):
        data = [LabeledExample(id=str(i), text="t", targets=(1, 0, 0, 0, 0)) for i in range(6)]
        with pytest.raises(ValueError, match="harm"):
            split_train_val(data, seed=0, stratify=True)

    def test_property_disjoint_exhaustive_proportional(self):
        # Invariants over random datasets: disjoint by id, exhaustive, per-class
        # train fraction within one example of 4/5, deterministic.
        rng = np.random.default_rng(2718)
        for trial in range(60):
            n = int(rng.integers(8, 120))
            labels = [int(x) for x in rng.integers(0, 4, size=n)]
            counts = Counter(labels)
            if any(c < 2 for c in counts.values()):
                continue
            data = make_examples(labels)
            seed = int(rng.integers(0, 2**32))
            split = split_train_val(data, ratio=(4, 1), seed=seed, stratify=True)
            train_ids = {ex.id for ex in split.train}
            val_ids = {ex.id for ex in split.val}
            assert not train_ids & val_ids
            assert train_ids | val_ids == {ex.id for ex in data}
            train_counts = Counter(ex.harm for ex in split.train)
            for label, total in counts.items():
                assert abs(train_counts.get(label, 0) - 0.8 * total) <= 1.0
            again = split_train_val(data, ratio=(4, 1), seed=seed, stratify=True)
            assert [ex.id for ex in again.train] == [ex.id for ex in split.train]
