"""Regenerate the demo dataset, pool, scripted responses, and plan.

Everything is seeded, so re-running reproduces the checked-in files exactly.
"""

import json
from pathlib import Path

import numpy as np

HERE = Path(__file__).parent
N_TRAIN, N_TEST, N_CLASSES, DIM, SEED = 80, 30, 2, 6, 1234

TOPICS = {
    "cls0": ["database migration", "cache eviction", "queue backlog",
             "api latency", "disk pressure"],
    "cls1": ["team lunch", "office plants", "badge photos",
             "parking garage", "coffee tasting"],
}


def make_split(rng, name: str, count: int, dataset_dir: Path, centers):
    rows, vectors = [], np.empty((count, DIM))
    for i in range(count):
        label = f"cls{i % N_CLASSES}"
        topic = TOPICS[label][i % len(TOPICS[label])]
        rows.append((f"{name} note {i}: update about the {topic}", label))
        # overlapping classes so the learning curves have room to move
        vectors[i] = centers[i % N_CLASSES] + rng.normal(0, 2.5, size=DIM)
    with (dataset_dir / f"{name}.csv").open("w", encoding="utf-8") as fh:
        fh.write("text,label\n")
        for text, label in rows:
            fh.write(f'"{text}",{label}\n')
    lines = [f"count={count} dim={DIM} source=demo-{name}"]
    for key, row in enumerate(vectors):
        lines.append(f"{key} " + " ".join(repr(float(v)) for v in row))
    (dataset_dir / f"{name}.emb").write_text("\n".join(lines) + "\n",
                                             encoding="utf-8")
    return rows


def main():
    rng = np.random.default_rng(SEED)
    centers = rng.normal(0, 4, size=(N_CLASSES, DIM))
    dataset_dir = HERE / "dataset"
    dataset_dir.mkdir(exist_ok=True)

    train_rows = make_split(rng, "train", N_TRAIN, dataset_dir, centers)
    make_split(rng, "test", N_TEST, dataset_dir, centers)
    (dataset_dir / "guidelines.txt").write_text(
        "Label a note cls0 when it concerns production infrastructure; "
        "label it cls1 when it is social or office chatter.\n",
        encoding="utf-8",
    )
    (dataset_dir / "manifest.json").write_text(json.dumps({
        "task_name": "ops-vs-chatter",
        "format": "delimited-table",
        "delimiter": ",",
        "text_column": "text",
        "label_column": "label",
        "label_space": ["cls0", "cls1"],
        "train_file": "train.csv",
        "test_file": "test.csv",
        "train_embeddings": "train.emb",
        "test_embeddings": "test.emb",
        "guidelines_file": "guidelines.txt",
    }, indent=2) + "\n", encoding="utf-8")

    (HERE / "pool.json").write_text(json.dumps({
        "task_name": "ops-vs-chatter",
        "label_space": ["cls0", "cls1"],
        "guidelines": "Label a note cls0 when it concerns production "
                      "infrastructure; cls1 when it is social chatter.",
        "instances": [
            {"text": text, "gold_label": label} for text, label in train_rows[:40]
        ],
    }, indent=2) + "\n", encoding="utf-8")

    # The second response must land inside the follow-up window, which starts
    # right after the highest labeled index (18).
    (HERE / "responses.json").write_text(json.dumps([
        "Thinking step by step, the most informative picks are: 0, 3, 7, 12, 18",
        "Final selection: [19, 22, 25, 28, 31]",
    ]) + "\n", encoding="utf-8")

    (HERE / "plan.json").write_text(json.dumps({
        "manifest_path": "dataset/manifest.json",
        "strategies": [
            {"id": "random", "params": {}},
            {"id": "least_confidence", "params": {}},
            {"id": "embedding_kmeans", "params": {}},
            {"id": "active_llm", "params": {}},
        ],
        "budget": 20,
        "step": 10,
        "output_dir": "out",
        "num_data_randomizations": 2,
        "num_model_seeds": 3,
        "metric": "accuracy",
        "base_seed": 7,
        "prompt_config": {"selection_size": 10, "presented_batch_size": 200},
        "endpoint_spec": {
            "kind": "scripted",
            "responses": [
                "0, 2, 4, 6, 8, 10, 12, 14, 16, 18",
                "1, 3, 5, 7, 9, 11, 13, 15, 17, 19",
            ],
        },
    }, indent=2) + "\n", encoding="utf-8")
    print("demo assets written under", HERE)


if __name__ == "__main__":
    main()
