"""HTTP annotation service: live sessions for human annotators.

Single shared bearer token (deployment-local tool, not production auth).
Mutating endpoints accept an ``Idempotency-Key`` header and replay their
original response on retry. A strategy query that outlasts ``slow_threshold``
seconds returns ``202`` with a poll token; the annotation UI polls
``GET /sessions/{id}/next-batch/{token}`` until the task is ready. Error
bodies carry machine-readable codes.
"""

from __future__ import annotations

import json
import threading
import uuid
from concurrent.futures import Future, ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from pathlib import Path

from fastapi import Depends, FastAPI, Header, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field

from .errors import (
    BudgetExhausted,
    ConfigError,
    LabelDomainError,
    LabelLoopError,
    OpenTaskError,
    PoolExhausted,
    SchemaError,
    ValidationError,
)
from .llm_client import GenerationSettings
from .prompts import PromptConfig, name_config
from .session import ActiveSession, IterationDraft
from .strategies import StrategySpec


class CreateSessionRequest(BaseModel):
    pool: dict | None = None
    manifest: str | None = None
    split: str = "train"
    shuffle_seed: int | None = None
    subsample_n: int | None = None
    subsample_seed: int = 0
    prompt_config: dict = Field(default_factory=dict)
    strategy: dict = Field(default_factory=lambda: {"id": "random", "params": {}})
    endpoint: dict | None = None
    generation: dict = Field(default_factory=dict)
    budget: int = 32
    k: int | None = None
    seed: int = 0
    embeddings_path: str | None = None


class SubmitLabelsRequest(BaseModel):
    labels: dict[str, str]


class SessionHandle:
    """Registry entry: the session plus its serialization lock and caches."""

    def __init__(self, session: ActiveSession):
        self.session = session
        self.lock = threading.Lock()
        self.pending: dict[str, Future] = {}
        self.partial_labels: dict[int, str] = {}
        self.idempotency: dict[str, tuple[int, dict]] = {}


def _error(status_code: int, code: str, detail: str) -> HTTPException:
    return HTTPException(status_code=status_code,
                         detail={"code": code, "detail": detail})


def _map_error(exc: Exception) -> HTTPException:
    if isinstance(exc, OpenTaskError):
        return _error(409, "task_open", str(exc))
    if isinstance(exc, BudgetExhausted):
        return _error(410, "budget_exhausted", str(exc))
    if isinstance(exc, PoolExhausted):
        return _error(410, "pool_exhausted", str(exc))
    if isinstance(exc, (ConfigError, LabelDomainError, ValidationError, SchemaError)):
        return _error(422, "invalid_request", str(exc))
    if isinstance(exc, LabelLoopError):
        return _error(500, "internal_error", str(exc))
    return _error(500, "internal_error", f"{type(exc).__name__}: {exc}")


def _task_payload(session: ActiveSession, draft: IterationDraft,
                  partial: dict[int, str]) -> dict:
    if set(partial) == set(draft.selection.indices):
        status = "complete"
    elif partial:
        status = "partially_labeled"
    else:
        status = "open"
    return {
        "session_id": session.session_id,
        "iteration": draft.iteration_number,
        "items": [
            {
                "index": index,
                "text": session.pool[index].text,
                "text_pair": session.pool[index].text_pair,
            }
            for index in draft.selection.indices
        ],
        "label_space": list(session.pool.label_space),
        "status": status,
        "selection_status": draft.selection.status,
        "diagnostics": list(draft.selection.diagnostics),
        "labeled": {str(i): label for i, label in sorted(partial.items())},
    }


def _summary_payload(session: ActiveSession) -> dict:
    return {
        "session_id": session.session_id,
        "status": session.status,
        "strategy": session.strategy.to_dict(),
        "budget": session.budget,
        "labeled_count": session.labeled_count,
        "iteration_count": len(session.history.iterations),
        "label_space": list(session.pool.label_space),
        "task_name": session.pool.task_name,
        "config_name": name_config(session.prompt_config),
        "config_fingerprint": session.prompt_config.fingerprint(),
    }


def create_app(sessions_root: str | Path, token: str,
               slow_threshold: float = 2.0) -> FastAPI:
    """Build the service app rooted at ``sessions_root``."""
    root = Path(sessions_root)
    root.mkdir(parents=True, exist_ok=True)
    app = FastAPI(title="labelloop annotation service")
    # The browser UI is served from its own origin; the bearer token is the
    # actual access control, so CORS stays wide open.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["Authorization", "Content-Type", "Idempotency-Key"],
    )
    registry: dict[str, SessionHandle] = {}
    registry_lock = threading.Lock()
    executor = ThreadPoolExecutor(max_workers=4)
    create_idempotency: dict[str, tuple[int, dict]] = {}

    def require_token(authorization: str | None = Header(default=None)) -> None:
        if authorization != f"Bearer {token}":
            raise _error(401, "unauthorized", "missing or invalid bearer token")

    def get_handle(session_id: str) -> SessionHandle:
        with registry_lock:
            handle = registry.get(session_id)
            if handle is None:
                state = root / session_id / "state.json"
                if not state.exists():
                    raise _error(404, "unknown_session", f"no session {session_id!r}")
                handle = SessionHandle(ActiveSession.load(root / session_id))
                registry[session_id] = handle
            return handle

    @app.post("/sessions", status_code=201, dependencies=[Depends(require_token)])
    def create_session(request: CreateSessionRequest,
                       idempotency_key: str | None = Header(default=None)):
        if idempotency_key and idempotency_key in create_idempotency:
            status_code, body = create_idempotency[idempotency_key]
            return JSONResponse(status_code=status_code, content=body)
        if (request.pool is None) == (request.manifest is None):
            raise _error(422, "invalid_request",
                         "provide exactly one of 'pool' (inline) or 'manifest' (path)")
        if request.pool is not None:
            pool_source = {"kind": "inline", "pool": request.pool}
        else:
            pool_source = {
                "kind": "manifest",
                "path": request.manifest,
                "split": request.split,
                "shuffle_seed": request.shuffle_seed,
            }
            if request.subsample_n:
                pool_source["subsample"] = {"n": request.subsample_n,
                                            "seed": request.subsample_seed}
        session_id = uuid.uuid4().hex[:12]
        try:
            session = ActiveSession.create(
                root / session_id,
                pool_source=pool_source,
                prompt_config=PromptConfig.from_dict(request.prompt_config),
                strategy=StrategySpec.from_dict(request.strategy),
                endpoint_spec=request.endpoint,
                generation=GenerationSettings.from_dict(request.generation),
                budget=request.budget,
                step_k=request.k,
                seed=request.seed,
                embeddings_path=request.embeddings_path,
                session_id=session_id,
            )
        except LabelLoopError as exc:
            raise _map_error(exc)
        with registry_lock:
            registry[session_id] = SessionHandle(session)
        body = _summary_payload(session)
        if idempotency_key:
            create_idempotency[idempotency_key] = (201, body)
        return JSONResponse(status_code=201, content=body)

    @app.get("/sessions/{session_id}", dependencies=[Depends(require_token)])
    def get_session(session_id: str):
        return _summary_payload(get_handle(session_id).session)

    @app.post("/sessions/{session_id}/next-batch",
              dependencies=[Depends(require_token)])
    def next_batch(session_id: str,
                   idempotency_key: str | None = Header(default=None)):
        handle = get_handle(session_id)
        if idempotency_key and idempotency_key in handle.idempotency:
            status_code, body = handle.idempotency[idempotency_key]
            return JSONResponse(status_code=status_code, content=body)
        with handle.lock:
            if handle.pending:
                raise _error(409, "task_pending",
                             "a strategy query is already running")
            if handle.session.open_task is not None:
                raise _error(409, "task_open",
                             "the current task must be labeled first")
            if handle.session.budget_reached:
                raise _error(410, "budget_exhausted",
                             f"budget of {handle.session.budget} labels reached")
            future = executor.submit(handle.session.begin_iteration)
            poll_token = uuid.uuid4().hex[:16]
            handle.pending[poll_token] = future
        try:
            if slow_threshold <= 0:
                raise FutureTimeout()  # poll-token path forced, for tests and demos
            draft = future.result(timeout=slow_threshold)
        except (FutureTimeout, TimeoutError):
            body = {"poll_token": poll_token, "session_id": session_id}
            if idempotency_key:
                handle.idempotency[idempotency_key] = (202, body)
            return JSONResponse(status_code=202, content=body)
        except Exception as exc:
            with handle.lock:
                handle.pending.pop(poll_token, None)
            raise _map_error(exc)
        with handle.lock:
            handle.pending.pop(poll_token, None)
            handle.partial_labels = {}
        body = _task_payload(handle.session, draft, {})
        if idempotency_key:
            handle.idempotency[idempotency_key] = (200, body)
        return JSONResponse(status_code=200, content=body)

    @app.get("/sessions/{session_id}/next-batch/{poll_token}",
             dependencies=[Depends(require_token)])
    def poll_next_batch(session_id: str, poll_token: str):
        handle = get_handle(session_id)
        future = handle.pending.get(poll_token)
        if future is None:
            # Either an unknown token or one already consumed.
            if handle.session.open_task is not None:
                return _task_payload(handle.session, handle.session.open_task,
                                     handle.partial_labels)
            raise _error(404, "unknown_poll_token", f"no pending task {poll_token!r}")
        if not future.done():
            return JSONResponse(status_code=202,
                                content={"poll_token": poll_token,
                                         "session_id": session_id})
        with handle.lock:
            handle.pending.pop(poll_token, None)
        try:
            draft = future.result()
        except Exception as exc:
            raise _map_error(exc)
        with handle.lock:
            handle.partial_labels = {}
        return _task_payload(handle.session, draft, {})

    @app.post("/sessions/{session_id}/labels",
              dependencies=[Depends(require_token)])
    def submit_labels(session_id: str, request: SubmitLabelsRequest,
                      idempotency_key: str | None = Header(default=None)):
        handle = get_handle(session_id)
        if idempotency_key and idempotency_key in handle.idempotency:
            status_code, body = handle.idempotency[idempotency_key]
            return JSONResponse(status_code=status_code, content=body)
        with handle.lock:
            session = handle.session
            if session.open_task is None:
                raise _error(409, "no_open_task", "no task awaits labels")
            task_indices = set(session.open_task.selection.indices)
            try:
                incoming = {int(i): label for i, label in request.labels.items()}
            except ValueError:
                raise _error(422, "invalid_request", "indices must be integers")
            for index, label in incoming.items():
                if index not in task_indices:
                    raise _error(422, "index_not_in_task",
                                 f"index {index} is not part of the open task")
                if session.pool.label_space and label not in session.pool.label_space:
                    raise _error(422, "label_outside_space",
                                 f"label {label!r} outside "
                                 f"{list(session.pool.label_space)}")
            merged = dict(handle.partial_labels)
            merged.update(incoming)
            if set(merged) == task_indices:
                try:
                    session.complete_iteration(merged)
                except LabelLoopError as exc:
                    raise _map_error(exc)
                handle.partial_labels = {}
                body = {
                    "session_id": session_id,
                    "status": "complete",
                    "labeled_count": session.labeled_count,
                    "budget": session.budget,
                    "session_status": session.status,
                }
            else:
                handle.partial_labels = merged
                body = {
                    "session_id": session_id,
                    "status": "partially_labeled",
                    "labeled_count": session.labeled_count,
                    "missing": sorted(task_indices - set(merged)),
                }
        if idempotency_key:
            handle.idempotency[idempotency_key] = (200, body)
        return body

    @app.get("/sessions/{session_id}/history",
             dependencies=[Depends(require_token)])
    def get_history(session_id: str):
        session = get_handle(session_id).session
        return {
            "session_id": session_id,
            "budget": session.budget,
            "labeled_count": session.labeled_count,
            "history": session.history.to_dict(),
            "structural": session.history.structural_view(),
        }

    @app.get("/sessions/{session_id}/export",
             dependencies=[Depends(require_token)])
    def export_labels(session_id: str):
        session = get_handle(session_id).session
        lines = [json.dumps(record, sort_keys=True)
                 for record in session.export_labels()]
        return PlainTextResponse("\n".join(lines) + ("\n" if lines else ""),
                                 media_type="application/x-ndjson")

    return app
