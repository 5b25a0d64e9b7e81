"""Unlabeled pools: data-file loading, dataset manifests, seeded shuffle/subsample.

A pool is an immutable, contiguously indexed sequence of text instances plus the
declared label space. Gold labels, when present, are hidden from query
strategies and only read by the simulated oracle.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyPoolError, LabelDomainError, PoolSizeError, SchemaError

FORMAT_DELIMITED = "delimited-table"
FORMAT_LINE_RECORDS = "line-records"

# Separator used when a sentence pair is rendered as a single prompt line.
PAIR_SEPARATOR = " ||| "


@dataclass(frozen=True)
class Instance:
    """One unlabeled text item; ``index`` equals its position in the pool."""

    index: int
    text: str
    text_pair: str | None = None
    gold_label: str | None = None

    def rendered_text(self, separator: str = PAIR_SEPARATOR) -> str:
        if self.text_pair is None:
            return self.text
        return f"{self.text}{separator}{self.text_pair}"


@dataclass(frozen=True)
class Pool:
    """Ordered collection of instances forming the sampling pool.

    ``source_rows`` records, per instance, the 0-based data-row position in the
    originating file before any shuffle/subsample, so externally computed
    per-row artifacts (embeddings) can be re-aligned to the pool.
    """

    instances: tuple[Instance, ...]
    label_space: tuple[str, ...]
    task_name: str
    guidelines: str | None = None
    source_rows: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.instances) < 1:
            raise EmptyPoolError(f"pool {self.task_name!r} has no instances")
        for position, inst in enumerate(self.instances):
            if inst.index != position:
                raise SchemaError(
                    f"pool {self.task_name!r}: instance at position {position} "
                    f"carries index {inst.index}"
                )
            if not inst.text.strip():
                raise SchemaError(
                    f"pool {self.task_name!r}: instance {position} has empty text"
                )
            if inst.gold_label is not None and self.label_space:
                if inst.gold_label not in self.label_space:
                    raise LabelDomainError(
                        f"pool {self.task_name!r}: instance {position} label "
                        f"{inst.gold_label!r} outside label space {list(self.label_space)}"
                    )
        if self.source_rows and len(self.source_rows) != len(self.instances):
            raise SchemaError("source_rows length does not match instance count")

    def __len__(self) -> int:
        return len(self.instances)

    def __getitem__(self, index: int) -> Instance:
        return self.instances[index]

    def indices(self) -> range:
        return range(len(self.instances))


def _clean_text(value: str, max_chars: int | None) -> str:
    value = value.strip()
    if max_chars is not None:
        value = value[:max_chars]
    return value


def _read_delimited(path: Path, delimiter: str, text_column: str,
                    text_pair_column: str | None, label_column: str | None):
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        for column in filter(None, (text_column, text_pair_column, label_column)):
            if column not in header:
                raise SchemaError(f"{path}: column {column!r} not in header {header}")
        rows = []
        for row_number, row in enumerate(reader, start=2):  # header is line 1
            text = row.get(text_column) or ""
            pair = row.get(text_pair_column) if text_pair_column else None
            label = row.get(label_column) if label_column else None
            rows.append((row_number, text, pair, label))
    return rows


def _read_line_records(path: Path, text_column: str,
                       text_pair_column: str | None, label_column: str | None):
    rows = []
    with path.open(encoding="utf-8") as fh:
        for row_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}: row {row_number}: invalid record ({exc})")
            if text_column not in record:
                raise SchemaError(f"{path}: row {row_number}: missing field {text_column!r}")
            pair = record.get(text_pair_column) if text_pair_column else None
            label = record.get(label_column) if label_column else None
            rows.append((row_number, record[text_column], pair, label))
    return rows


def load_pool(
    source: str | Path,
    format: str = FORMAT_DELIMITED,
    text_column: str = "text",
    text_pair_column: str | None = None,
    label_column: str | None = None,
    label_space: list[str] | tuple[str, ...] | None = None,
    delimiter: str = ",",
    task_name: str | None = None,
    guidelines: str | None = None,
    shuffle_seed: int | None = None,
    max_chars: int | None = None,
) -> Pool:
    """Load a pool from a delimited table or line-record file.

    With ``shuffle_seed`` set, rows are deterministically permuted before
    indexing, so pool indices reflect the shuffled order. Labels are validated
    against ``label_space`` when one is declared. Raises :class:`SchemaError`
    for missing columns or empty texts (naming the offending row),
    :class:`EmptyPoolError` for files with no data rows, and
    :class:`LabelDomainError` for out-of-domain labels.
    """
    path = Path(source)
    if not path.exists():
        raise SchemaError(f"data file not found: {path}")
    if format == FORMAT_DELIMITED:
        raw_rows = _read_delimited(path, delimiter, text_column, text_pair_column, label_column)
    elif format == FORMAT_LINE_RECORDS:
        raw_rows = _read_line_records(path, text_column, text_pair_column, label_column)
    else:
        raise SchemaError(f"unknown pool format {format!r}")
    if not raw_rows:
        raise EmptyPoolError(f"{path}: no data rows")

    space = tuple(label_space) if label_space else ()
    cleaned = []
    for source_row, (row_number, text, pair, label) in enumerate(raw_rows):
        text = _clean_text(text, max_chars)
        if not text:
            raise SchemaError(f"{path}: row {row_number}: empty text")
        if pair is not None:
            pair = _clean_text(str(pair), max_chars) or None
        if label is not None:
            label = str(label)
            if space and label not in space:
                raise LabelDomainError(
                    f"{path}: row {row_number}: label {label!r} outside "
                    f"label space {list(space)}"
                )
        cleaned.append((source_row, text, pair, label))

    if shuffle_seed is not None:
        random.Random(shuffle_seed).shuffle(cleaned)

    instances = tuple(
        Instance(index=i, text=text, text_pair=pair, gold_label=label)
        for i, (_, text, pair, label) in enumerate(cleaned)
    )
    return Pool(
        instances=instances,
        label_space=space,
        task_name=task_name or path.stem,
        guidelines=guidelines,
        source_rows=tuple(row for row, _, _, _ in cleaned),
    )


def subsample(pool: Pool, n: int, seed: int) -> Pool:
    """Deterministic seeded sample of ``n`` instances, re-indexed 0..n-1."""
    if n < 1:
        raise PoolSizeError(f"subsample size must be positive, got {n}")
    if n > len(pool):
        raise PoolSizeError(f"subsample size {n} exceeds pool size {len(pool)}")
    picked = random.Random(seed).sample(range(len(pool)), n)
    instances = tuple(
        Instance(index=i, text=pool[j].text, text_pair=pool[j].text_pair,
                 gold_label=pool[j].gold_label)
        for i, j in enumerate(picked)
    )
    source_rows = tuple(
        pool.source_rows[j] if pool.source_rows else j for j in picked
    )
    return Pool(
        instances=instances,
        label_space=pool.label_space,
        task_name=pool.task_name,
        guidelines=pool.guidelines,
        source_rows=source_rows,
    )


@dataclass(frozen=True)
class DatasetManifest:
    """Declares a dataset: files, format, columns, label space, guidelines."""

    task_name: str
    format: str
    label_space: tuple[str, ...]
    train_file: str
    test_file: str | None = None
    delimiter: str = ","
    text_column: str = "text"
    text_pair_column: str | None = None
    label_column: str | None = None
    guidelines_file: str | None = None
    train_embeddings: str | None = None
    test_embeddings: str | None = None
    max_chars: int | None = None
    base_dir: Path = Path(".")

    def resolve(self, name: str | None) -> Path | None:
        return self.base_dir / name if name else None


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a dataset manifest (JSON) and anchor its file paths."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"manifest not found: {path}")
    with path.open(encoding="utf-8") as fh:
        raw = json.load(fh)
    for key in ("task_name", "format", "label_space", "train_file"):
        if key not in raw:
            raise SchemaError(f"{path}: manifest missing key {key!r}")
    if raw["format"] not in (FORMAT_DELIMITED, FORMAT_LINE_RECORDS):
        raise SchemaError(f"{path}: unknown format {raw['format']!r}")
    if not raw["label_space"]:
        raise SchemaError(f"{path}: label_space must be non-empty")
    return DatasetManifest(
        task_name=raw["task_name"],
        format=raw["format"],
        label_space=tuple(raw["label_space"]),
        train_file=raw["train_file"],
        test_file=raw.get("test_file"),
        delimiter=raw.get("delimiter", ","),
        text_column=raw.get("text_column", "text"),
        text_pair_column=raw.get("text_pair_column"),
        label_column=raw.get("label_column", "label"),
        guidelines_file=raw.get("guidelines_file"),
        train_embeddings=raw.get("train_embeddings"),
        test_embeddings=raw.get("test_embeddings"),
        max_chars=raw.get("max_chars"),
        base_dir=path.parent,
    )


def load_split(manifest: DatasetManifest, split: str = "train",
               shuffle_seed: int | None = None) -> Pool:
    """Load the train or test split described by a manifest."""
    if split == "train":
        data_file = manifest.resolve(manifest.train_file)
    elif split == "test":
        if not manifest.test_file:
            raise SchemaError(f"manifest for {manifest.task_name!r} declares no test split")
        data_file = manifest.resolve(manifest.test_file)
    else:
        raise SchemaError(f"unknown split {split!r}")
    guidelines = None
    guidelines_path = manifest.resolve(manifest.guidelines_file)
    if guidelines_path is not None:
        guidelines = guidelines_path.read_text(encoding="utf-8").strip()
    return load_pool(
        data_file,
        format=manifest.format,
        text_column=manifest.text_column,
        text_pair_column=manifest.text_pair_column,
        label_column=manifest.label_column,
        label_space=manifest.label_space,
        delimiter=manifest.delimiter,
        task_name=manifest.task_name,
        guidelines=guidelines,
        shuffle_seed=shuffle_seed,
        max_chars=manifest.max_chars,
    )
