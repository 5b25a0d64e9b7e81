"""The active learning loop: windows, strategy queries, labeling, persistence.

A session owns one pool, one strategy, and one durable history. Each iteration
computes the presented window, asks the strategy for k indices (an LLM round
trip for the LLM strategy, a scored pass otherwise), collects labels from an
oracle (simulated gold labels, or humans via the HTTP service), appends an
iteration record, and persists state atomically. Once labeled, an index is
never presented as selectable again; recap blocks restate it as an annotation,
not a candidate.

Window rules for the LLM strategy: without feedback (and in full-text recap
mode) the window is the run of ``batch_size`` indices immediately following the
last labeled instance. In index-recap mode the frontier advances by
``batch_size`` per iteration and every unlabeled index up to the frontier stays
addressable, with the recap block carrying the labeled indices. Conventional
strategies scan all unlabeled instances.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
import uuid
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Instance, Pool, load_manifest, load_split, subsample
from .embeddings import EmbeddingMatrix, load_embeddings
from .errors import (
    BudgetExhausted,
    ConfigError,
    EmptyResponseError,
    LabelDomainError,
    OpenTaskError,
    PoolExhausted,
    StateIntegrityError,
    StateVersionError,
)
from .llm_client import (
    ChatExchange,
    GenerationSettings,
    LLMClient,
    ScriptedEndpoint,
    endpoint_from_spec,
)
from .parsing import (
    STATUS_DEFICIENT,
    STATUS_FAILED,
    SelectionResult,
    parse_selection,
    top_up,
)
from .prompts import PromptConfig, build_prompt
from .strategies import StrategySpec, resolve_active_spec, select_conventional

STATE_SCHEMA_VERSION = 1

STATUS_AWAITING = "awaiting_iteration"
STATUS_TASK_OPEN = "task_open"
STATUS_COMPLETE = "complete"


def derive_seed(base_seed: int, purpose: str, iteration: int) -> int:
    """Stable per-purpose, per-iteration seed so resumed runs replay exactly."""
    digest = hashlib.sha256(f"{base_seed}:{purpose}:{iteration}".encode()).hexdigest()
    return int(digest[:16], 16)


@dataclass
class IterationRecord:
    """Everything one completed iteration produced."""

    iteration_number: int
    presented_indices: tuple[int, ...]
    selection: SelectionResult
    strategy_id: str
    wall_time_ms: int = 0
    exchange: ChatExchange | None = None

    def to_dict(self) -> dict:
        return {
            "iteration_number": self.iteration_number,
            "presented_indices": list(self.presented_indices),
            "selection": self.selection.to_dict(),
            "strategy_id": self.strategy_id,
            "wall_time_ms": self.wall_time_ms,
            "exchange": self.exchange.to_dict() if self.exchange else None,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "IterationRecord":
        return cls(
            iteration_number=raw["iteration_number"],
            presented_indices=tuple(raw["presented_indices"]),
            selection=SelectionResult.from_dict(raw["selection"]),
            strategy_id=raw["strategy_id"],
            wall_time_ms=raw.get("wall_time_ms", 0),
            exchange=ChatExchange.from_dict(raw["exchange"]) if raw.get("exchange") else None,
        )


@dataclass
class SessionHistory:
    """Durable loop state: labeled set, iteration records, window cursors."""

    iterations: list[IterationRecord] = field(default_factory=list)
    labeled: dict[int, str] = field(default_factory=dict)
    cursor_last_labeled: int = -1
    cursor_last_presented: int = -1

    def to_dict(self) -> dict:
        return {
            "iterations": [record.to_dict() for record in self.iterations],
            "labeled": {str(i): label for i, label in sorted(self.labeled.items())},
            "cursor_last_labeled": self.cursor_last_labeled,
            "cursor_last_presented": self.cursor_last_presented,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "SessionHistory":
        return cls(
            iterations=[IterationRecord.from_dict(r) for r in raw.get("iterations", [])],
            labeled={int(i): label for i, label in raw.get("labeled", {}).items()},
            cursor_last_labeled=raw.get("cursor_last_labeled", -1),
            cursor_last_presented=raw.get("cursor_last_presented", -1),
        )

    def structural_view(self) -> dict:
        """Transport-independent normal form: drops wall times, latencies and
        timestamps, keeps everything the loop logic determined."""
        return {
            "labeled": {str(i): label for i, label in sorted(self.labeled.items())},
            "cursor_last_labeled": self.cursor_last_labeled,
            "cursor_last_presented": self.cursor_last_presented,
            "iterations": [
                {
                    "iteration_number": record.iteration_number,
                    "strategy_id": record.strategy_id,
                    "presented_indices": list(record.presented_indices),
                    "selection": record.selection.to_dict(),
                    "response_text": record.exchange.response_text if record.exchange else None,
                }
                for record in self.iterations
            ],
        }


def compute_window(pool: Pool, history: SessionHistory, batch_size: int,
                   recap_mode: str) -> list[int]:
    """Presented window for the next LLM iteration (see module docstring).

    Raises :class:`PoolExhausted` when the rule yields no candidates. On the
    first iteration every mode presents ``[0, batch_size)``.
    """
    if batch_size < 1:
        raise ConfigError("batch_size must be positive")
    n = len(pool)
    labeled = set(history.labeled)
    if recap_mode == "index_recap":
        end = min(history.cursor_last_presented + batch_size, n - 1)
        window = [i for i in range(0, end + 1) if i not in labeled]
    else:  # no_recap and full-text recap share the forward-marching window
        lo = history.cursor_last_labeled + 1
        hi = min(history.cursor_last_labeled + batch_size, n - 1)
        window = [i for i in range(lo, hi + 1) if i not in labeled]
    if not window:
        raise PoolExhausted(
            f"no presentable instances remain (labeled {len(labeled)} of {n})"
        )
    return window


def full_pool_window(pool: Pool, history: SessionHistory) -> list[int]:
    """All unlabeled indices; the candidate set for conventional strategies."""
    window = [i for i in pool.indices() if i not in history.labeled]
    if not window:
        raise PoolExhausted("pool fully labeled")
    return window


@dataclass
class IterationDraft:
    """An open annotation task: selection made, labels still owed."""

    iteration_number: int
    presented_indices: tuple[int, ...]
    selection: SelectionResult
    strategy_id: str
    wall_time_ms: int = 0
    exchange: ChatExchange | None = None

    def to_dict(self) -> dict:
        return IterationRecord(
            iteration_number=self.iteration_number,
            presented_indices=self.presented_indices,
            selection=self.selection,
            strategy_id=self.strategy_id,
            wall_time_ms=self.wall_time_ms,
            exchange=self.exchange,
        ).to_dict()

    @classmethod
    def from_dict(cls, raw: Mapping) -> "IterationDraft":
        record = IterationRecord.from_dict(raw)
        return cls(
            iteration_number=record.iteration_number,
            presented_indices=record.presented_indices,
            selection=record.selection,
            strategy_id=record.strategy_id,
            wall_time_ms=record.wall_time_ms,
            exchange=record.exchange,
        )


class ActiveSession:
    """One resumable active learning session rooted in a directory."""

    def __init__(self, root: Path, *, session_id: str, pool: Pool,
                 pool_source: dict, prompt_config: PromptConfig,
                 strategy: StrategySpec, endpoint=None,
                 generation: GenerationSettings | None = None,
                 budget: int = 32, step_k: int | None = None, seed: int = 0,
                 embeddings: EmbeddingMatrix | None = None,
                 embeddings_path: str | None = None,
                 history: SessionHistory | None = None,
                 open_task: IterationDraft | None = None,
                 status: str = STATUS_AWAITING):
        if budget < 1:
            raise ConfigError("budget must be positive")
        self.root = Path(root)
        self.session_id = session_id
        self.pool = pool
        self.pool_source = pool_source
        self.prompt_config = prompt_config
        self.strategy = strategy
        self.endpoint = endpoint
        self.generation = generation or GenerationSettings()
        self.budget = min(budget, len(pool))
        self.step_k = step_k or prompt_config.selection_size
        if (strategy.id in ("active_llm", "hybrid_coldstart")
                and self.step_k > prompt_config.presented_batch_size):
            raise ConfigError(
                f"step size {self.step_k} exceeds the presented batch size "
                f"{prompt_config.presented_batch_size}"
            )
        self.seed = seed
        self.embeddings = embeddings
        self.embeddings_path = embeddings_path
        self.history = history or SessionHistory()
        self.open_task = open_task
        self.status = status
        self.root.mkdir(parents=True, exist_ok=True)
        self.client = LLMClient(transcript=self.root / "transcript.jsonl")

    # ------------------------------------------------------------------ setup

    @classmethod
    def create(cls, root: str | Path, *, pool_source: dict,
               prompt_config: PromptConfig | None = None,
               strategy: StrategySpec | None = None,
               endpoint_spec: dict | None = None,
               generation: GenerationSettings | None = None,
               budget: int = 32, step_k: int | None = None, seed: int = 0,
               embeddings_path: str | None = None,
               session_id: str | None = None) -> "ActiveSession":
        pool = cls._build_pool(pool_source)
        embeddings = cls._load_embeddings(embeddings_path, pool)
        endpoint = endpoint_from_spec(endpoint_spec) if endpoint_spec else None
        session = cls(
            Path(root),
            session_id=session_id or uuid.uuid4().hex[:12],
            pool=pool,
            pool_source=pool_source,
            prompt_config=prompt_config or PromptConfig(),
            strategy=strategy or StrategySpec("random"),
            endpoint=endpoint,
            generation=generation,
            budget=budget,
            step_k=step_k,
            seed=seed,
            embeddings=embeddings,
            embeddings_path=embeddings_path,
        )
        session.save()
        session._append_event("session_created", strategy=session.strategy.id,
                              budget=session.budget)
        return session

    @staticmethod
    def _build_pool(pool_source: Mapping) -> Pool:
        kind = pool_source.get("kind")
        if kind == "manifest":
            manifest = load_manifest(pool_source["path"])
            pool = load_split(manifest, pool_source.get("split", "train"),
                              shuffle_seed=pool_source.get("shuffle_seed"))
            sub = pool_source.get("subsample")
            if sub:
                pool = subsample(pool, int(sub["n"]), int(sub["seed"]))
            return pool
        if kind == "inline":
            raw = pool_source["pool"]
            instances = tuple(
                Instance(index=i, text=item["text"],
                         text_pair=item.get("text_pair"),
                         gold_label=item.get("gold_label"))
                for i, item in enumerate(raw["instances"])
            )
            return Pool(
                instances=instances,
                label_space=tuple(raw.get("label_space", ())),
                task_name=raw.get("task_name", "inline"),
                guidelines=raw.get("guidelines"),
                source_rows=tuple(raw.get("source_rows", ())),
            )
        raise ConfigError(f"unknown pool source kind {kind!r}")

    @staticmethod
    def _load_embeddings(path: str | None, pool: Pool) -> EmbeddingMatrix | None:
        if not path:
            return None
        return load_embeddings(path).aligned_to(pool)

    # ------------------------------------------------------------ persistence

    def _state_payload(self) -> dict:
        payload = {
            "schema_version": STATE_SCHEMA_VERSION,
            "session_id": self.session_id,
            "pool_source": self.pool_source,
            "prompt_config": self.prompt_config.to_dict(),
            "strategy": self.strategy.to_dict(),
            "endpoint": self.endpoint.to_spec() if self.endpoint else None,
            "generation": self.generation.to_dict(),
            "budget": self.budget,
            "step_k": self.step_k,
            "seed": self.seed,
            "embeddings_path": self.embeddings_path,
            "status": self.status,
            "history": self.history.to_dict(),
            "open_task": self.open_task.to_dict() if self.open_task else None,
        }
        return payload

    def save(self) -> Path:
        """Atomically persist the session state (temp file + rename)."""
        payload = self._state_payload()
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        integrity = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
        doc = {"payload": payload, "integrity": integrity}
        target = self.root / "state.json"
        tmp = self.root / "state.json.tmp"
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
        os.replace(tmp, target)
        return target

    @classmethod
    def load(cls, root: str | Path) -> "ActiveSession":
        """Rebuild a session from its directory, verifying schema and hash."""
        root = Path(root)
        doc = json.loads((root / "state.json").read_text(encoding="utf-8"))
        payload = doc.get("payload", {})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        if hashlib.sha256(canonical.encode("utf-8")).hexdigest() != doc.get("integrity"):
            raise StateIntegrityError(f"{root}: state file failed its integrity hash")
        if payload.get("schema_version") != STATE_SCHEMA_VERSION:
            raise StateVersionError(
                f"{root}: state schema {payload.get('schema_version')!r} needs migration "
                f"(supported: {STATE_SCHEMA_VERSION})"
            )
        pool = cls._build_pool(payload["pool_source"])
        return cls(
            root,
            session_id=payload["session_id"],
            pool=pool,
            pool_source=payload["pool_source"],
            prompt_config=PromptConfig.from_dict(payload["prompt_config"]),
            strategy=StrategySpec.from_dict(payload["strategy"]),
            endpoint=endpoint_from_spec(payload["endpoint"]) if payload.get("endpoint") else None,
            generation=GenerationSettings.from_dict(payload["generation"]),
            budget=payload["budget"],
            step_k=payload["step_k"],
            seed=payload["seed"],
            embeddings=cls._load_embeddings(payload.get("embeddings_path"), pool),
            embeddings_path=payload.get("embeddings_path"),
            history=SessionHistory.from_dict(payload["history"]),
            open_task=IterationDraft.from_dict(payload["open_task"]) if payload.get("open_task") else None,
            status=payload["status"],
        )

    def _append_event(self, event: str, **data) -> None:
        entry = {"seq": self._next_seq(), "event": event, **data}
        with (self.root / "events.jsonl").open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def _next_seq(self) -> int:
        self._seq = getattr(self, "_seq", self._count_events()) + 1
        return self._seq

    def _count_events(self) -> int:
        path = self.root / "events.jsonl"
        if not path.exists():
            return 0
        with path.open(encoding="utf-8") as fh:
            return sum(1 for _ in fh)

    # ------------------------------------------------------------------- loop

    @property
    def labeled_count(self) -> int:
        return len(self.history.labeled)

    @property
    def budget_reached(self) -> bool:
        return self.labeled_count >= self.budget

    def begin_iteration(self, k: int | None = None) -> IterationDraft:
        """Run one strategy query and open an annotation task for its picks."""
        if self.open_task is not None:
            raise OpenTaskError(f"session {self.session_id}: a task is already open")
        if self.budget_reached:
            raise BudgetExhausted(
                f"session {self.session_id}: budget of {self.budget} labels reached"
            )
        iteration = len(self.history.iterations) + 1
        k = min(k or self.step_k, self.budget - self.labeled_count)
        live = resolve_active_spec(self.strategy, self.labeled_count)
        if self.strategy.id == "hybrid_coldstart" and self.history.iterations:
            previous = self.history.iterations[-1].strategy_id
            if previous != live.id:
                self._append_event("strategy_switch", iteration=iteration,
                                   from_strategy=previous, to_strategy=live.id,
                                   labeled_count=self.labeled_count)
        started = time.monotonic()
        if live.id == "active_llm":
            presented, selection, exchange = self._query_llm(iteration, k)
        else:
            presented = full_pool_window(self.pool, self.history)
            k = min(k, len(presented))
            indices, notes = select_conventional(
                live, presented, k,
                embeddings=self.embeddings,
                labeled=self.history.labeled,
                classes=self.pool.label_space or None,
                seed=derive_seed(self.seed, "strategy", iteration),
            )
            selection = SelectionResult(
                indices=tuple(indices), requested_count=k,
                status="exact", diagnostics=tuple(notes),
            )
            exchange = None
        draft = IterationDraft(
            iteration_number=iteration,
            presented_indices=tuple(presented),
            selection=selection,
            strategy_id=live.id,
            wall_time_ms=int((time.monotonic() - started) * 1000),
            exchange=exchange,
        )
        self.open_task = draft
        self.status = STATUS_TASK_OPEN
        self.save()
        self._append_event("iteration_started", iteration=iteration,
                           strategy=live.id, k=k,
                           selection_status=selection.status,
                           diagnostics=list(selection.diagnostics))
        return draft

    def _query_llm(self, iteration: int, k: int):
        window = compute_window(self.pool, self.history,
                                self.prompt_config.presented_batch_size,
                                self.prompt_config.recap_mode)
        k = min(k, len(window))
        config = dataclasses.replace(self.prompt_config, selection_size=k)
        prompt = build_prompt(self.pool, config, window, history=self.history)
        exchange = None
        for attempt in (1, 2):  # one automatic re-query on refusal/empty
            try:
                exchange = self.client.complete(self.endpoint, prompt, self.generation)
                break
            except EmptyResponseError:
                self._append_event("empty_response", iteration=iteration, attempt=attempt)
        if exchange is None:
            selection = SelectionResult(
                indices=(), requested_count=k, status=STATUS_FAILED,
                diagnostics=("empty-response-fallback",),
            )
        else:
            selection = parse_selection(exchange.response_text, window, k)
        if selection.status in (STATUS_DEFICIENT, STATUS_FAILED):
            selection = top_up(selection, window, self.history.labeled,
                               derive_seed(self.seed, "top_up", iteration))
        return window, selection, exchange

    def complete_iteration(self, labels: Mapping[int, str]) -> IterationRecord:
        """Apply labels for the open task and commit the iteration."""
        if self.open_task is None:
            raise OpenTaskError(f"session {self.session_id}: no open task")
        draft = self.open_task
        expected = set(draft.selection.indices)
        got = {int(i): label for i, label in labels.items()}
        if set(got) != expected:
            raise ConfigError(
                f"labels must cover exactly the selected indices {sorted(expected)}, "
                f"got {sorted(got)}"
            )
        if self.pool.label_space:
            for index, label in got.items():
                if label not in self.pool.label_space:
                    raise LabelDomainError(
                        f"label {label!r} for index {index} outside label space "
                        f"{list(self.pool.label_space)}"
                    )
        record = IterationRecord(
            iteration_number=draft.iteration_number,
            presented_indices=draft.presented_indices,
            selection=draft.selection,
            strategy_id=draft.strategy_id,
            wall_time_ms=draft.wall_time_ms,
            exchange=draft.exchange,
        )
        self.history.iterations.append(record)
        self.history.labeled.update(got)
        self.history.cursor_last_labeled = max(
            self.history.cursor_last_labeled, *got.keys()
        )
        self.history.cursor_last_presented = max(
            self.history.cursor_last_presented, *draft.presented_indices
        )
        self.open_task = None
        self.status = STATUS_COMPLETE if self.budget_reached else STATUS_AWAITING
        self.save()
        self._append_event("iteration_completed", iteration=record.iteration_number,
                           labeled_count=self.labeled_count)
        return record

    def run_iteration(self, labeler: Callable[[Sequence[int]], Mapping[int, str]],
                      k: int | None = None) -> IterationRecord:
        draft = self.begin_iteration(k)
        return self.complete_iteration(labeler(draft.selection.indices))

    def run(self, labeler: Callable[[Sequence[int]], Mapping[int, str]],
            budget: int | None = None) -> list[IterationRecord]:
        """Iterate until the label budget is met or the pool runs out."""
        target = min(budget or self.budget, self.budget)
        records = []
        while self.labeled_count < target:
            try:
                records.append(self.run_iteration(labeler))
            except PoolExhausted:
                self._append_event("pool_exhausted", labeled_count=self.labeled_count)
                self.status = STATUS_COMPLETE
                self.save()
                break
        return records

    def export_labels(self) -> list[dict]:
        """Labeled set as line-record dicts (index, text, label)."""
        return [
            {
                "index": index,
                "text": self.pool[index].text,
                "text_pair": self.pool[index].text_pair,
                "label": label,
            }
            for index, label in sorted(self.history.labeled.items())
        ]


def save_session(session: ActiveSession) -> Path:
    return session.save()


def load_session(root: str | Path) -> ActiveSession:
    return ActiveSession.load(root)
