"""Simulated-oracle experiment runner: multi-seed runs, learning curves,
metric aggregation, deterministic report emission.

For each data randomization x strategy cell, a session runs to the label
budget; at every step multiple the proxy successor is refit on the current
labeled set under ``num_model_seeds`` seeds and scored on the held-out test
split. The canonical ``report.json`` contains only deterministic content
(wall times live in a ``timings.json`` sidecar), so identical plans with
identical seeds produce byte-identical reports.
"""

from __future__ import annotations

import hashlib
import json
import time
import traceback
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Pool, load_manifest, load_split, subsample
from .embeddings import load_embeddings
from .errors import ConfigError, ShapeError, SimulationError
from .llm_client import GenerationSettings
from .prompts import PromptConfig
from .session import ActiveSession, derive_seed
from .strategies import EMBEDDING_STRATEGIES, StrategySpec, fit_proxy_classifier

METRIC_ACCURACY = "accuracy"
METRIC_MACRO_F1 = "macro_f1"


def simulate_oracle(pool: Pool, indices: Sequence[int]) -> dict[int, str]:
    """Perfect annotator: returns gold labels verbatim for the given indices."""
    labels: dict[int, str] = {}
    for index in indices:
        instance = pool[int(index)]
        if instance.gold_label is None:
            raise SimulationError(f"instance {index} has no gold label to simulate with")
        labels[int(index)] = instance.gold_label
    return labels


def make_simulated_labeler(pool: Pool):
    return lambda indices: simulate_oracle(pool, indices)


def compute_metrics(predictions: Sequence[str], gold: Sequence[str], metric: str,
                    labels: Sequence[str] | None = None) -> float:
    """Accuracy or macro-F1. Macro-F1 averages per-class F1 over the declared
    label set (default: union of gold and predictions), with 0/0-class F1
    defined as 0, so an absent class contributes zero."""
    if len(predictions) != len(gold) or len(gold) < 1:
        raise ShapeError(
            f"predictions ({len(predictions)}) and gold ({len(gold)}) must have "
            "equal positive length"
        )
    if metric == METRIC_ACCURACY:
        correct = sum(1 for p, g in zip(predictions, gold) if p == g)
        return correct / len(gold)
    if metric == METRIC_MACRO_F1:
        classes = list(labels) if labels else sorted(set(gold) | set(predictions))
        f1_scores = []
        for cls in classes:
            tp = sum(1 for p, g in zip(predictions, gold) if p == cls and g == cls)
            fp = sum(1 for p, g in zip(predictions, gold) if p == cls and g != cls)
            fn = sum(1 for p, g in zip(predictions, gold) if p != cls and g == cls)
            denominator = 2 * tp + fp + fn
            f1_scores.append(0.0 if denominator == 0 else 2 * tp / denominator)
        return sum(f1_scores) / len(f1_scores)
    raise ConfigError(f"unknown metric {metric!r}")


@dataclass
class ExperimentPlan:
    """Everything one experiment run needs, loadable from a JSON plan file."""

    manifest_path: str
    strategies: list[StrategySpec]
    budget: int
    step: int
    output_dir: str
    num_data_randomizations: int = 1
    num_model_seeds: int = 1
    metric: str = METRIC_ACCURACY
    base_seed: int = 0
    subsample_n: int | None = None
    prompt_config: PromptConfig = field(default_factory=PromptConfig)
    generation: GenerationSettings = field(default_factory=GenerationSettings)
    endpoint_spec: dict | None = None
    proxy_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.budget >= self.step >= 1):
            raise ConfigError("need budget >= step >= 1")
        if self.num_data_randomizations < 1 or self.num_model_seeds < 1:
            raise ConfigError("randomizations and model seeds must be >= 1")
        if self.metric not in (METRIC_ACCURACY, METRIC_MACRO_F1):
            raise ConfigError(f"unknown metric {self.metric!r}")
        if not self.strategies:
            raise ConfigError("plan needs at least one strategy")

    def budget_points(self) -> list[int]:
        points = list(range(self.step, self.budget + 1, self.step))
        if not points or points[-1] != self.budget:
            points.append(self.budget)
        return points

    def to_dict(self) -> dict:
        return {
            "manifest_path": self.manifest_path,
            "strategies": [s.to_dict() for s in self.strategies],
            "budget": self.budget,
            "step": self.step,
            "output_dir": self.output_dir,
            "num_data_randomizations": self.num_data_randomizations,
            "num_model_seeds": self.num_model_seeds,
            "metric": self.metric,
            "base_seed": self.base_seed,
            "subsample_n": self.subsample_n,
            "prompt_config": self.prompt_config.to_dict(),
            "generation": self.generation.to_dict(),
            "endpoint_spec": self.endpoint_spec,
            "proxy_params": dict(self.proxy_params),
        }

    def fingerprint(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_plan(path: str | Path) -> ExperimentPlan:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    base = Path(path).parent
    manifest_path = raw["manifest_path"]
    if not Path(manifest_path).is_absolute():
        manifest_path = str(base / manifest_path)
    output_dir = raw["output_dir"]
    if not Path(output_dir).is_absolute():
        output_dir = str(base / output_dir)
    return ExperimentPlan(
        manifest_path=manifest_path,
        strategies=[StrategySpec.from_dict(s) for s in raw["strategies"]],
        budget=int(raw["budget"]),
        step=int(raw["step"]),
        output_dir=output_dir,
        num_data_randomizations=int(raw.get("num_data_randomizations", 1)),
        num_model_seeds=int(raw.get("num_model_seeds", 1)),
        metric=raw.get("metric", METRIC_ACCURACY),
        base_seed=int(raw.get("base_seed", 0)),
        subsample_n=raw.get("subsample_n"),
        prompt_config=PromptConfig.from_dict(raw.get("prompt_config", {})),
        generation=GenerationSettings.from_dict(raw.get("generation", {})),
        endpoint_spec=raw.get("endpoint_spec"),
        proxy_params=dict(raw.get("proxy_params", {})),
    )


def _strategy_key(spec: StrategySpec) -> str:
    if spec.id == "hybrid_coldstart":
        main = spec.params["main"]
        main_id = main["id"] if isinstance(main, Mapping) else main.id
        return f"hybrid_coldstart[{main_id}@{spec.params['seed_budget']}]"
    return spec.id


@dataclass
class MetricReport:
    """Per-strategy, per-budget scores; mean/SD are exactly recomputable from
    the raw scores (population SD). Wall times stay out of the canonical form."""

    metric: str
    plan_fingerprint: str
    budgets: list[int]
    raw_scores: dict
    summary: dict
    cells: dict
    strategy_switches: dict
    config_fingerprint: str
    wall_times: dict = field(default_factory=dict)

    def canonical_dict(self) -> dict:
        return {
            "metric": self.metric,
            "plan_fingerprint": self.plan_fingerprint,
            "budgets": self.budgets,
            "raw_scores": self.raw_scores,
            "summary": self.summary,
            "cells": self.cells,
            "strategy_switches": self.strategy_switches,
            "config_fingerprint": self.config_fingerprint,
        }

    def to_json(self) -> str:
        return json.dumps(self.canonical_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        raw = json.loads(text)
        return cls(wall_times={}, **raw)


def _mean_sd(values: Sequence[float]) -> tuple[float, float]:
    mean = sum(values) / len(values)
    variance = sum((v - mean) ** 2 for v in values) / len(values)
    return mean, variance ** 0.5


def run_experiment(plan: ExperimentPlan) -> MetricReport:
    """Execute a plan and emit report.json, timings.json and per-strategy
    curve files into the plan's output directory. A failing cell aborts only
    itself and is recorded with its cause."""
    manifest = load_manifest(plan.manifest_path)
    if not manifest.test_file:
        raise ConfigError("experiments need a manifest with a test split")
    def main_id(spec: StrategySpec) -> str:
        main = spec.params["main"]
        return main["id"] if isinstance(main, Mapping) else main.id

    needs_embeddings = [
        spec.id for spec in plan.strategies
        if spec.id in EMBEDDING_STRATEGIES
        or (spec.id == "hybrid_coldstart" and main_id(spec) in EMBEDDING_STRATEGIES)
    ]
    if needs_embeddings and not manifest.train_embeddings:
        raise ConfigError(
            f"strategies {needs_embeddings} need train_embeddings in the manifest"
        )
    output = Path(plan.output_dir)
    output.mkdir(parents=True, exist_ok=True)

    test_pool = load_split(manifest, "test")
    test_embeddings_path = manifest.resolve(manifest.test_embeddings)
    if test_embeddings_path is None:
        raise ConfigError("experiments need test_embeddings in the manifest")
    test_emb = load_embeddings(test_embeddings_path).aligned_to(test_pool)
    gold = [test_pool[i].gold_label for i in test_pool.indices()]
    train_embeddings_path = manifest.resolve(manifest.train_embeddings)

    raw_scores: dict = {}
    cells: dict = {}
    switches: dict = {}
    wall_times: dict = {}

    for spec in plan.strategies:
        key = _strategy_key(spec)
        raw_scores[key] = {str(b): [] for b in plan.budget_points()}
        cells[key] = {}
        switches[key] = {}
        for randomization in range(plan.num_data_randomizations):
            cell_started = time.monotonic()
            try:
                scores, switch = _run_cell(plan, manifest, spec, randomization,
                                           train_embeddings_path, test_emb.vectors,
                                           gold, test_pool, output)
                for budget_point, point_scores in scores.items():
                    raw_scores[key][str(budget_point)].extend(point_scores)
                cells[key][str(randomization)] = {"status": "ok", "cause": None}
                switches[key][str(randomization)] = switch
            except Exception as exc:  # cell isolation: record and move on
                cells[key][str(randomization)] = {
                    "status": "failed",
                    "cause": f"{type(exc).__name__}: {exc}",
                }
                switches[key][str(randomization)] = None
                (output / f"cell_{key}_r{randomization}.error.txt").write_text(
                    traceback.format_exc(), encoding="utf-8"
                )
            wall_times.setdefault(key, {})[str(randomization)] = (
                time.monotonic() - cell_started
            )

    summary: dict = {}
    for key, by_budget in raw_scores.items():
        summary[key] = {}
        for budget_point, entries in by_budget.items():
            if entries:
                mean, sd = _mean_sd([entry["score"] for entry in entries])
                summary[key][budget_point] = {"mean": mean, "sd": sd, "n": len(entries)}
            else:
                summary[key][budget_point] = {"mean": None, "sd": None, "n": 0}

    report = MetricReport(
        metric=plan.metric,
        plan_fingerprint=plan.fingerprint(),
        budgets=plan.budget_points(),
        raw_scores=raw_scores,
        summary=summary,
        cells=cells,
        strategy_switches=switches,
        config_fingerprint=plan.prompt_config.fingerprint(),
        wall_times=wall_times,
    )
    (output / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (output / "timings.json").write_text(
        json.dumps(wall_times, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    for key in raw_scores:
        lines = ["budget\tmean\tsd"]
        for budget_point in plan.budget_points():
            cell = summary[key][str(budget_point)]
            if cell["n"]:
                lines.append(f"{budget_point}\t{cell['mean']!r}\t{cell['sd']!r}")
        safe = key.replace("/", "_").replace("[", "_").replace("]", "").replace("@", "_")
        (output / f"curve_{safe}.tsv").write_text("\n".join(lines) + "\n",
                                                  encoding="utf-8")
    return report


def _run_cell(plan: ExperimentPlan, manifest, spec: StrategySpec,
              randomization: int, train_embeddings_path, test_vectors, gold,
              test_pool, output: Path):
    """One (strategy x data randomization) session run plus its curve points."""
    key = _strategy_key(spec)
    shuffle_seed = derive_seed(plan.base_seed, "data", randomization)
    pool_source = {
        "kind": "manifest",
        "path": str(plan.manifest_path),
        "split": "train",
        "shuffle_seed": shuffle_seed,
    }
    if plan.subsample_n:
        pool_source["subsample"] = {
            "n": plan.subsample_n,
            "seed": derive_seed(plan.base_seed, "subsample", randomization),
        }
    session_root = output / "sessions" / f"{key}_r{randomization}"
    needs_llm = spec.id in ("active_llm", "hybrid_coldstart")
    session = ActiveSession.create(
        session_root,
        pool_source=pool_source,
        prompt_config=plan.prompt_config,
        strategy=spec,
        endpoint_spec=plan.endpoint_spec if needs_llm else None,
        generation=plan.generation,
        budget=plan.budget,
        step_k=plan.step,
        seed=derive_seed(plan.base_seed, f"cell:{key}", randomization),
        embeddings_path=str(train_embeddings_path) if train_embeddings_path else None,
        session_id=f"{key}_r{randomization}",
    )
    labeler = make_simulated_labeler(session.pool)
    train_emb = session.embeddings

    scores: dict[int, list[dict]] = {}
    switch_after = None
    previous_strategy = None
    while session.labeled_count < session.budget:
        record = session.run_iteration(labeler, k=plan.step)
        if previous_strategy and record.strategy_id != previous_strategy:
            switch_after = session.labeled_count - len(record.selection.indices)
        previous_strategy = record.strategy_id
        budget_point = session.labeled_count
        if budget_point in plan.budget_points() or budget_point == session.budget:
            if train_emb is None:
                raise ConfigError("evaluation needs train embeddings in the manifest")
            labeled_indices = sorted(session.history.labeled)
            X_train = train_emb.for_indices(labeled_indices)
            y_train = [session.history.labeled[i] for i in labeled_indices]
            for model_seed in range(plan.num_model_seeds):
                model = fit_proxy_classifier(
                    X_train, y_train,
                    classes=session.pool.label_space,
                    seed=derive_seed(plan.base_seed,
                                     f"eval:{key}:{randomization}:{budget_point}",
                                     model_seed),
                    **plan.proxy_params,
                )
                predictions = model.predict(test_vectors)
                score = compute_metrics(predictions, gold, plan.metric,
                                        labels=session.pool.label_space)
                scores.setdefault(budget_point, []).append(
                    {"randomization": randomization, "model_seed": model_seed,
                     "score": score}
                )
    export_path = output / f"labels_{key}_r{randomization}.jsonl"
    with export_path.open("w", encoding="utf-8") as fh:
        for record in session.export_labels():
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return scores, switch_after
