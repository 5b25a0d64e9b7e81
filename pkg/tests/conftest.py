import json
from pathlib import Path

import numpy as np
import pytest

from labelloop.corpus import Instance, Pool
from labelloop.embeddings import EmbeddingMatrix, save_embeddings

FIXTURE_TEXTS = [
    "The quarterly report shows record growth across all regions.",
    "Server outage affected two availability zones overnight.",
    "New espresso machine arrived in the kitchen today!",
    "Patch released for the authentication service vulnerability.",
    "Team offsite is scheduled for the second week of next month.",
]
FIXTURE_LABELS = ["KEEP", "KEEP", "DROP", "KEEP", "DROP"]


@pytest.fixture
def tiny_pool() -> Pool:
    instances = tuple(
        Instance(index=i, text=text, gold_label=label)
        for i, (text, label) in enumerate(zip(FIXTURE_TEXTS, FIXTURE_LABELS))
    )
    return Pool(
        instances=instances,
        label_space=("KEEP", "DROP"),
        task_name="incident-triage",
        guidelines=(
            "Mark a post as worth keeping when it describes an operational "
            "incident or a security issue; discard social chatter."
        ),
    )


def build_pool(n: int, n_classes: int = 2, task_name: str = "generated") -> Pool:
    labels = [f"cls{c}" for c in range(n_classes)]
    instances = tuple(
        Instance(index=i, text=f"instance number {i} with some filler words",
                 gold_label=labels[i % n_classes])
        for i in range(n)
    )
    return Pool(instances=instances, label_space=tuple(labels), task_name=task_name)


def inline_source(pool: Pool) -> dict:
    """Pool serialized as an inline session pool source."""
    return {
        "kind": "inline",
        "pool": {
            "task_name": pool.task_name,
            "label_space": list(pool.label_space),
            "guidelines": pool.guidelines,
            "instances": [
                {"text": inst.text, "text_pair": inst.text_pair,
                 "gold_label": inst.gold_label}
                for inst in pool.instances
            ],
        },
    }


def write_dataset(root: Path, n_train: int = 600, n_test: int = 120,
                  n_classes: int = 3, dim: int = 8, seed: int = 13) -> Path:
    """Synthetic classification dataset: manifest + csv splits + embeddings.

    Embeddings are class-centered Gaussians so the proxy classifier has real
    signal; keys follow source-row order as the embedding format requires.
    """
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 4.0, size=(n_classes, dim))
    root.mkdir(parents=True, exist_ok=True)

    def make_split(name: str, count: int):
        labels = [f"cls{i % n_classes}" for i in range(count)]
        rows = []
        vectors = np.empty((count, dim))
        for i, label in enumerate(labels):
            cls = int(label[3:])
            rows.append({"text": f"{name} document {i} discussing topic {cls}",
                         "label": label})
            vectors[i] = centers[cls] + rng.normal(0.0, 1.0, size=dim)
        with (root / f"{name}.csv").open("w", encoding="utf-8") as fh:
            fh.write("text,label\n")
            for row in rows:
                fh.write(f"\"{row['text']}\",{row['label']}\n")
        matrix = EmbeddingMatrix(vectors=vectors,
                                 row_index_map=tuple(range(count)),
                                 source_tag=f"synthetic-{name}")
        save_embeddings(root / f"{name}.emb", matrix)

    make_split("train", n_train)
    make_split("test", n_test)
    (root / "guidelines.txt").write_text(
        "Assign the topic label that matches the document's subject.\n",
        encoding="utf-8",
    )
    manifest = {
        "task_name": "synthetic-topics",
        "format": "delimited-table",
        "delimiter": ",",
        "text_column": "text",
        "label_column": "label",
        "label_space": [f"cls{i}" for i in range(n_classes)],
        "train_file": "train.csv",
        "test_file": "test.csv",
        "train_embeddings": "train.emb",
        "test_embeddings": "test.emb",
        "guidelines_file": "guidelines.txt",
    }
    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return manifest_path


@pytest.fixture
def dataset_dir(tmp_path) -> Path:
    return write_dataset(tmp_path / "dataset")
