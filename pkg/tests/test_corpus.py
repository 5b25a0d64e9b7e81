import json

import pytest

from labelloop.corpus import (
    FORMAT_LINE_RECORDS,
    Instance,
    Pool,
    load_manifest,
    load_pool,
    load_split,
    subsample,
)
from labelloop.errors import (
    EmptyPoolError,
    LabelDomainError,
    PoolSizeError,
    SchemaError,
)


def write_csv(path, rows, header="text,label"):
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")
    return path


def test_load_preserves_file_order_without_shuffle(tmp_path):
    path = write_csv(tmp_path / "data.csv", ["alpha,a", "beta,b", "gamma,a"])
    pool = load_pool(path, label_column="label")
    assert [inst.index for inst in pool.instances] == [0, 1, 2]
    assert [inst.text for inst in pool.instances] == ["alpha", "beta", "gamma"]
    assert pool.source_rows == (0, 1, 2)


def test_shuffle_seed_is_deterministic(tmp_path):
    rows = [f"text number {i},a" for i in range(20)]
    path = write_csv(tmp_path / "data.csv", rows)
    first = load_pool(path, label_column="label", shuffle_seed=7)
    second = load_pool(path, label_column="label", shuffle_seed=7)
    assert [i.text for i in first.instances] == [i.text for i in second.instances]
    assert first.source_rows == second.source_rows
    unshuffled = load_pool(path, label_column="label")
    assert sorted(i.text for i in first.instances) == sorted(i.text for i in unshuffled.instances)
    assert [i.text for i in first.instances] != [i.text for i in unshuffled.instances]


def test_reload_is_reproducible(tmp_path):
    rows = [f"line {i},b" for i in range(10)]
    path = write_csv(tmp_path / "data.csv", rows)
    a = load_pool(path, label_column="label", shuffle_seed=3)
    b = load_pool(path, label_column="label", shuffle_seed=3)
    assert a == b


def test_empty_text_cell_names_the_row(tmp_path):
    path = write_csv(tmp_path / "data.csv", ["alpha,a", "   ,b", "gamma,a"])
    with pytest.raises(SchemaError, match="row 3"):
        load_pool(path, label_column="label")


def test_missing_column_is_schema_error(tmp_path):
    path = write_csv(tmp_path / "data.csv", ["alpha,a"])
    with pytest.raises(SchemaError, match="body"):
        load_pool(path, text_column="body")


def test_empty_file_is_empty_pool_error(tmp_path):
    path = write_csv(tmp_path / "data.csv", [])
    with pytest.raises(EmptyPoolError):
        load_pool(path)


def test_label_outside_declared_space(tmp_path):
    path = write_csv(tmp_path / "data.csv", ["alpha,a", "beta,weird"])
    with pytest.raises(LabelDomainError, match="weird"):
        load_pool(path, label_column="label", label_space=["a", "b"])


def test_line_records_with_pairs(tmp_path):
    path = tmp_path / "data.jsonl"
    records = [
        {"text": "first sentence", "text_pair": "second sentence", "label": "dup"},
        {"text": "other sentence", "text_pair": "unrelated", "label": "nodup"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
    pool = load_pool(path, format=FORMAT_LINE_RECORDS,
                     text_pair_column="text_pair", label_column="label")
    assert pool[0].text_pair == "second sentence"
    assert pool[0].rendered_text() == "first sentence ||| second sentence"
    assert pool[1].gold_label == "nodup"


def test_max_chars_truncates(tmp_path):
    path = write_csv(tmp_path / "data.csv", ["  " + "x" * 50 + ",a"])
    pool = load_pool(path, label_column="label", max_chars=10)
    assert pool[0].text == "x" * 10


def test_whitespace_trim_only():
    inst = Instance(index=0, text="MiXeD Case Text")
    assert inst.text == "MiXeD Case Text"  # no folding or lowercasing


def test_subsample_full_size_is_permutation(tmp_path):
    path = write_csv(tmp_path / "data.csv", [f"t{i},a" for i in range(8)])
    pool = load_pool(path, label_column="label")
    sub = subsample(pool, len(pool), seed=1)
    assert sorted(i.text for i in sub.instances) == sorted(i.text for i in pool.instances)
    assert [i.index for i in sub.instances] == list(range(8))


def test_subsample_determinism_and_validity(tmp_path):
    path = write_csv(tmp_path / "data.csv", [f"t{i},a" for i in range(100)])
    pool = load_pool(path, label_column="label")
    once = subsample(pool, 5, seed=11)
    again = subsample(pool, 5, seed=11)
    assert [i.text for i in once.instances] == [i.text for i in again.instances]
    other = subsample(pool, 5, seed=12)
    pool_texts = {i.text for i in pool.instances}
    for candidate in (once, other):
        texts = [i.text for i in candidate.instances]
        assert len(texts) == 5
        assert len(set(texts)) == 5
        assert set(texts) <= pool_texts
    assert [i.text for i in once.instances] != [i.text for i in other.instances]


def test_subsample_preserves_gold_label_subset(tmp_path):
    path = write_csv(tmp_path / "data.csv", [f"t{i},{'a' if i % 2 else 'b'}" for i in range(30)])
    pool = load_pool(path, label_column="label", label_space=["a", "b"])
    sub = subsample(pool, 10, seed=5)
    from collections import Counter
    pool_counts = Counter(i.gold_label for i in pool.instances)
    sub_counts = Counter(i.gold_label for i in sub.instances)
    assert all(sub_counts[k] <= pool_counts[k] for k in sub_counts)


def test_subsample_too_large(tmp_path):
    path = write_csv(tmp_path / "data.csv", ["a,a"])
    pool = load_pool(path, label_column="label")
    with pytest.raises(PoolSizeError):
        subsample(pool, 2, seed=0)


def test_manifest_round_trip(dataset_dir):
    manifest = load_manifest(dataset_dir)
    assert manifest.task_name == "synthetic-topics"
    pool = load_split(manifest, "train")
    assert len(pool) == 600
    assert pool.guidelines and "topic label" in pool.guidelines
    test_pool = load_split(manifest, "test")
    assert len(test_pool) == 120
    assert all(inst.gold_label in manifest.label_space for inst in pool.instances)


def test_manifest_missing_key(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"task_name": "x"}), encoding="utf-8")
    with pytest.raises(SchemaError):
        load_manifest(path)


def test_pool_invariants_reject_bad_indices():
    with pytest.raises(SchemaError):
        Pool(instances=(Instance(index=1, text="x"),), label_space=(), task_name="bad")
