"""Extract selected instance indices from free-form model responses.

Responses range from a bare comma-separated list to long chain-of-thought
prose that restates the answer at the end. The extractor finds integer
"regions" (runs of integers joined only by list separators such as commas,
whitespace, bullets, brackets, "and", or "Index" prefixes) and takes the last
list-like region, since models restate their final answer last. A lone integer
inside prose only counts as list-like when the response contains nothing but
such singletons; this keeps a trailing count mention ("these 3 instances")
from displacing a preceding bracketed answer.
"""

from __future__ import annotations

import random
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from .errors import PartialFillError

STATUS_EXACT = "exact"
STATUS_REPAIRED = "repaired"
STATUS_DEFICIENT = "deficient"
STATUS_FAILED = "failed"

# Integers that are not part of decimals or identifiers.
_INT = re.compile(r"(?<![\w.])(\d+)(?!\.?\d)")
# Text allowed between two integers of the same list region.
_SEPARATOR = re.compile(
    r"(?:[\s,;:.!?()\[\]{}\-*•&#>]|\band\b|\bor\b|\bindex\b|\bindices\b"
    r"|\bindexes\b|\binstance\b|\binstances\b|\bidx\b|\bno\b)+",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class SelectionResult:
    """Validated indices parsed from a response, with repair diagnostics."""

    indices: tuple[int, ...]
    requested_count: int
    status: str
    diagnostics: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "indices": list(self.indices),
            "requested_count": self.requested_count,
            "status": self.status,
            "diagnostics": list(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, raw) -> "SelectionResult":
        return cls(
            indices=tuple(raw["indices"]),
            requested_count=raw["requested_count"],
            status=raw["status"],
            diagnostics=tuple(raw.get("diagnostics", ())),
        )


def canonical_rendering(result: SelectionResult) -> str:
    """The round-trippable rendering of a selection: "i, j, k"."""
    return ", ".join(str(i) for i in result.indices)


def _integer_regions(response: str) -> list[list[int]]:
    matches = list(_INT.finditer(response))
    regions: list[list[int]] = []
    current: list[int] = []
    previous_end = None
    for match in matches:
        if previous_end is not None:
            gap = response[previous_end:match.start()]
            if not (gap == "" or _SEPARATOR.fullmatch(gap)):
                regions.append(current)
                current = []
        current.append(int(match.group(1)))
        previous_end = match.end()
    if current:
        regions.append(current)
    return regions


def parse_selection(response: str, presented: Sequence[int],
                    requested_count: int) -> SelectionResult:
    """Parse a response against the presented batch.

    Pipeline: locate the final list-like integer region, drop out-of-range and
    duplicate values in reading order (recording diagnostics), truncate when
    over-long, and mark the result deficient when too few survive. Chain of
    thought prose before the list is ignored. Never raises on arbitrary input;
    a response with no integers at all yields ``status="failed"``.
    """
    regions = _integer_regions(response)
    if not regions:
        return SelectionResult(
            indices=(),
            requested_count=requested_count,
            status=STATUS_FAILED,
            diagnostics=("no-list-found",),
        )
    lists = [r for r in regions if len(r) >= 2]
    values = lists[-1] if lists else regions[-1]

    presented_set = set(int(i) for i in presented)
    kept: list[int] = []
    out_of_range: list[int] = []
    duplicates = 0
    for value in values:
        if value not in presented_set:
            out_of_range.append(value)
        elif value in kept:
            duplicates += 1
        else:
            kept.append(value)

    diagnostics: list[str] = []
    if out_of_range:
        diagnostics.append(f"out-of-range-dropped: {out_of_range}")
    if duplicates:
        diagnostics.append(f"duplicates-removed: {duplicates}")
    if len(kept) > requested_count:
        kept = kept[:requested_count]  # prefix of extraction order
        diagnostics.append("truncated-to-requested")

    if len(kept) < requested_count:
        status = STATUS_DEFICIENT
        if not diagnostics:
            diagnostics.append("count-mismatch")
    elif diagnostics:
        status = STATUS_REPAIRED
    else:
        status = STATUS_EXACT
    return SelectionResult(
        indices=tuple(kept),
        requested_count=requested_count,
        status=status,
        diagnostics=tuple(diagnostics),
    )


def top_up(result: SelectionResult, presented: Sequence[int],
           already_labeled: Iterable[int], seed: int) -> SelectionResult:
    """Fill a deficient or failed selection up to its requested count by a
    seeded random draw from the presented batch, excluding indices already
    selected or labeled. Raises :class:`PartialFillError` when too few
    candidates remain."""
    if result.status not in (STATUS_DEFICIENT, STATUS_FAILED):
        raise ValueError(f"top_up applies to deficient/failed results, got {result.status}")
    exclude = set(result.indices) | set(already_labeled)
    candidates = [int(i) for i in presented if int(i) not in exclude]
    need = result.requested_count - len(result.indices)
    if need > len(candidates):
        raise PartialFillError(
            f"need {need} more indices but only {len(candidates)} candidates remain",
            shortfall=need - len(candidates),
        )
    rng = random.Random(seed)
    rng.shuffle(candidates)
    filled = candidates[:need]
    return SelectionResult(
        indices=result.indices + tuple(filled),
        requested_count=result.requested_count,
        status=STATUS_REPAIRED,
        diagnostics=result.diagnostics + (f"top-up-filled: {need}",),
    )
