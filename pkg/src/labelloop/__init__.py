"""Pool-based, batch-mode active learning with LLM-driven selection.

Core pieces: :mod:`labelloop.corpus` (pools and manifests),
:mod:`labelloop.prompts` (deterministic prompt rendering),
:mod:`labelloop.llm_client` (chat endpoints and the scripted mock),
:mod:`labelloop.parsing` (index extraction from responses),
:mod:`labelloop.strategies` (uncertainty/diversity baselines and the proxy
classifier), :mod:`labelloop.session` (the annotation loop),
:mod:`labelloop.harness` (simulated experiments) and
:mod:`labelloop.service` (the HTTP annotation service).
"""

__version__ = "0.1.0"

from .corpus import Instance, Pool, load_manifest, load_pool, load_split, subsample
from .llm_client import GenerationSettings, LLMClient, scripted_mock
from .parsing import SelectionResult, parse_selection, top_up
from .prompts import PromptArtifact, PromptConfig, build_prompt, name_config
from .session import ActiveSession, SessionHistory, compute_window, load_session, save_session
from .strategies import (
    StrategySpec,
    fit_proxy_classifier,
    score_bald,
    score_entropy,
    score_least_confidence,
    score_margin,
    select_kmeans,
    select_uncertainty,
)

__all__ = [
    "ActiveSession",
    "GenerationSettings",
    "Instance",
    "LLMClient",
    "Pool",
    "PromptArtifact",
    "PromptConfig",
    "SelectionResult",
    "SessionHistory",
    "StrategySpec",
    "build_prompt",
    "compute_window",
    "fit_proxy_classifier",
    "load_manifest",
    "load_pool",
    "load_session",
    "load_split",
    "name_config",
    "parse_selection",
    "save_session",
    "score_bald",
    "score_entropy",
    "score_least_confidence",
    "score_margin",
    "scripted_mock",
    "select_kmeans",
    "select_uncertainty",
    "subsample",
    "top_up",
]
