"""Deterministic prompt rendering for the LLM selection strategy.

The exact English wording lives in versioned template files under
``labelloop/templates``; the assembly order is fixed so that identical inputs
always yield byte-identical prompt text (snapshot-testable). Recap blocks
restate earlier selections (as full text or bare indices) and never contain
annotated labels.
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .corpus import PAIR_SEPARATOR, Pool
from .errors import ConfigError

COT_NONE = "none"
COT_STEP_BY_STEP = "step_by_step"
COT_EXPLAIN_EACH = "explain_each"
COT_MODES = (COT_NONE, COT_STEP_BY_STEP, COT_EXPLAIN_EACH)

RECAP_NONE = "no_recap"
RECAP_FULL = "recap"
RECAP_INDEX = "index_recap"
RECAP_MODES = (RECAP_NONE, RECAP_FULL, RECAP_INDEX)

TEMPLATE_VERSION = "1"

_COT_DIGIT = {COT_NONE: "1", COT_STEP_BY_STEP: "2", COT_EXPLAIN_EACH: "3"}


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    return (resources.files("labelloop") / "templates" / f"{name}.txt").read_text(
        encoding="utf-8"
    )


@dataclass(frozen=True)
class PromptConfig:
    """The prompt parameter vector for the LLM selection strategy.

    ``reiterate_count_in_explain`` is forced on for ``explain_each`` mode: long
    per-instance explanations make models lose track of how many instances they
    were asked to select, so the count is restated after the directive.
    """

    selection_size: int = 32
    presented_batch_size: int = 200
    include_guidelines: bool = False
    include_advice: bool = False
    cot_mode: str = COT_NONE
    recap_mode: str = RECAP_NONE
    reiterate_count_in_explain: bool = False

    def __post_init__(self):
        if self.selection_size < 1:
            raise ConfigError("selection_size must be positive")
        if self.presented_batch_size < 1:
            raise ConfigError("presented_batch_size must be positive")
        if self.selection_size > self.presented_batch_size:
            raise ConfigError(
                f"selection_size ({self.selection_size}) exceeds "
                f"presented_batch_size ({self.presented_batch_size})"
            )
        if self.cot_mode not in COT_MODES:
            raise ConfigError(f"unknown cot_mode {self.cot_mode!r}")
        if self.recap_mode not in RECAP_MODES:
            raise ConfigError(f"unknown recap_mode {self.recap_mode!r}")
        if self.cot_mode == COT_EXPLAIN_EACH:
            object.__setattr__(self, "reiterate_count_in_explain", True)

    def to_dict(self) -> dict:
        return {
            "selection_size": self.selection_size,
            "presented_batch_size": self.presented_batch_size,
            "include_guidelines": self.include_guidelines,
            "include_advice": self.include_advice,
            "cot_mode": self.cot_mode,
            "recap_mode": self.recap_mode,
            "reiterate_count_in_explain": self.reiterate_count_in_explain,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "PromptConfig":
        return cls(**dict(raw))

    def fingerprint(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class PromptArtifact:
    """A fully rendered prompt plus the indices it presents."""

    text: str
    presented_indices: tuple[int, ...]
    config_fingerprint: str
    estimated_token_count: int


def _labeled_indices(history) -> list[int]:
    if history is None:
        return []
    labeled = history if isinstance(history, Mapping) else getattr(history, "labeled")
    return sorted(int(i) for i in labeled)


def _instance_line(pool: Pool, index: int, pair_separator: str) -> str:
    return f"Index {index}: {pool[index].rendered_text(pair_separator)}"


def build_prompt(
    pool: Pool,
    config: PromptConfig,
    presented: Sequence[int],
    history=None,
    pair_separator: str = PAIR_SEPARATOR,
) -> PromptArtifact:
    """Assemble the prompt text for one selection round.

    Section order: role allocation, selection instructions, optional advice,
    optional guidelines, chain-of-thought directive, recap block, output-format
    instruction, enumerated instances. ``history`` (anything exposing a
    ``labeled`` index->label mapping, or such a mapping itself) is required for
    the recap modes; only its indices are used, never its labels.
    """
    presented = [int(i) for i in presented]
    if not presented:
        raise ConfigError("presented batch is empty")
    seen = set()
    for index in presented:
        if index < 0 or index >= len(pool):
            raise ConfigError(f"presented index {index} outside pool of size {len(pool)}")
        if index in seen:
            raise ConfigError(f"presented index {index} repeated")
        seen.add(index)

    sections: list[str] = []
    sections.append(_template("role_allocation").format(task_name=pool.task_name).strip())
    sections.append(
        _template("selection_instructions")
        .format(presented_count=len(presented), selection_size=config.selection_size)
        .strip()
    )
    if config.include_advice:
        sections.append(_template("advice").strip())
    if config.include_guidelines:
        if not pool.guidelines:
            raise ConfigError(
                f"config requests guidelines but pool {pool.task_name!r} has none"
            )
        sections.append(_template("guidelines").format(guidelines=pool.guidelines).strip())
    if config.cot_mode == COT_STEP_BY_STEP:
        sections.append(_template("cot_step_by_step").strip())
    elif config.cot_mode == COT_EXPLAIN_EACH:
        sections.append(
            _template("cot_explain_each")
            .format(selection_size=config.selection_size)
            .strip()
        )
    if config.recap_mode != RECAP_NONE:
        if history is None:
            raise ConfigError(f"recap_mode {config.recap_mode!r} requires a history")
        labeled = _labeled_indices(history)
        if labeled:  # an empty history is recap-compatible: nothing to restate
            if config.recap_mode == RECAP_FULL:
                recap_lines = "\n".join(
                    _instance_line(pool, i, pair_separator) for i in labeled
                )
                sections.append(
                    _template("recap_full").format(recap_instances=recap_lines).strip()
                )
            else:
                sections.append(
                    _template("recap_index")
                    .format(recap_indices=", ".join(str(i) for i in labeled))
                    .strip()
                )
    sections.append(_template("output_format").strip())

    instance_lines = "\n".join(_instance_line(pool, i, pair_separator) for i in presented)
    sections.append(_template("instances_header").strip() + "\n" + instance_lines)

    text = "\n\n".join(sections) + "\n"
    return PromptArtifact(
        text=text,
        presented_indices=tuple(presented),
        config_fingerprint=config.fingerprint(),
        estimated_token_count=(len(text) + 3) // 4,
    )


def name_config(config: PromptConfig) -> str:
    """Letter-digit code for a config: A/B/C by advice-guidelines combination,
    1/2/3 by chain-of-thought mode, plus a recap suffix when feedback mode is on.
    The advice+guidelines combination sits outside the taxonomy and gets the
    descriptive name ``A<digit>+guidelines``."""
    digit = _COT_DIGIT[config.cot_mode]
    if config.include_advice and config.include_guidelines:
        base = f"A{digit}+guidelines"
    elif config.include_advice:
        base = f"A{digit}"
    elif config.include_guidelines:
        base = f"C{digit}"
    else:
        base = f"B{digit}"
    if config.recap_mode == RECAP_FULL:
        base += "+recap"
    elif config.recap_mode == RECAP_INDEX:
        base += "+index_recap"
    return base
