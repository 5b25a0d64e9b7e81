"""Embedding matrices for diversity sampling and the proxy classifier.

Embeddings arrive as opaque per-instance vectors in a small text format:
a header line ``count=<n> dim=<d> source=<tag>`` followed by one line per
vector, ``<key> <v1> ... <vd>``. Keys refer to source rows (the pool index of
the unshuffled pool); :meth:`EmbeddingMatrix.aligned_to` permutes them to match
a shuffled or subsampled pool.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Pool
from .errors import SchemaError, ShapeError


@dataclass
class EmbeddingMatrix:
    """Per-instance real vectors plus the pool indices they belong to."""

    vectors: np.ndarray
    row_index_map: tuple[int, ...]
    source_tag: str = "unspecified"

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[1] < 1:
            raise ShapeError(f"embedding matrix must be 2-D, got shape {self.vectors.shape}")
        if len(self.row_index_map) != self.vectors.shape[0]:
            raise ShapeError("row_index_map length does not match vector count")
        if len(set(self.row_index_map)) != len(self.row_index_map):
            raise SchemaError("row_index_map contains duplicate keys")
        if not np.all(np.isfinite(self.vectors)):
            raise ShapeError("embedding matrix contains non-finite entries")

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return int(self.vectors.shape[0])

    def for_indices(self, indices) -> np.ndarray:
        """Rows for the given pool indices, in the given order."""
        position = {key: row for row, key in enumerate(self.row_index_map)}
        try:
            rows = [position[int(i)] for i in indices]
        except KeyError as exc:
            raise SchemaError(f"no embedding for pool index {exc.args[0]}")
        return self.vectors[rows]

    def aligned_to(self, pool: Pool) -> "EmbeddingMatrix":
        """Re-key rows from source-row order to the pool's (shuffled) indices."""
        source_rows = pool.source_rows or tuple(range(len(pool)))
        position = {key: row for row, key in enumerate(self.row_index_map)}
        try:
            rows = [position[row] for row in source_rows]
        except KeyError as exc:
            raise SchemaError(f"no embedding for source row {exc.args[0]}")
        return EmbeddingMatrix(
            vectors=self.vectors[rows],
            row_index_map=tuple(range(len(pool))),
            source_tag=self.source_tag,
        )


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    """Read an embedding file (header + one keyed vector per line)."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty embedding file")
    header = dict(part.split("=", 1) for part in lines[0].split())
    for key in ("count", "dim"):
        if key not in header:
            raise SchemaError(f"{path}: header missing {key!r}")
    count, dim = int(header["count"]), int(header["dim"])
    keys: list[int] = []
    rows: list[list[float]] = []
    for line_number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != dim + 1:
            raise SchemaError(
                f"{path}: line {line_number}: expected key + {dim} values, got {len(parts)}"
            )
        keys.append(int(parts[0]))
        rows.append([float(v) for v in parts[1:]])
    if len(rows) != count:
        raise SchemaError(f"{path}: header declares {count} rows, found {len(rows)}")
    return EmbeddingMatrix(
        vectors=np.array(rows, dtype=np.float64),
        row_index_map=tuple(keys),
        source_tag=header.get("source", "unspecified"),
    )


def save_embeddings(path: str | Path, matrix: EmbeddingMatrix) -> None:
    lines = [f"count={len(matrix)} dim={matrix.dim} source={matrix.source_tag}"]
    for key, row in zip(matrix.row_index_map, matrix.vectors):
        lines.append(f"{key} " + " ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
