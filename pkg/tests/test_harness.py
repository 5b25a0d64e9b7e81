import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labelloop.errors import ConfigError, ShapeError, SimulationError
from labelloop.harness import (
    ExperimentPlan,
    MetricReport,
    compute_metrics,
    load_plan,
    run_experiment,
    simulate_oracle,
)
from labelloop.prompts import PromptConfig
from labelloop.strategies import StrategySpec

from conftest import build_pool, write_dataset


def test_simulate_oracle_returns_gold_labels(tiny_pool):
    labels = simulate_oracle(tiny_pool, [0, 2, 4])
    assert labels == {0: "KEEP", 2: "DROP", 4: "DROP"}
    assert simulate_oracle(tiny_pool, [0, 2, 4]) == labels  # pure


def test_simulate_oracle_missing_gold():
    pool = build_pool(5)
    import dataclasses
    stripped = dataclasses.replace(
        pool,
        instances=tuple(dataclasses.replace(i, gold_label=None) for i in pool.instances),
    )
    with pytest.raises(SimulationError):
        simulate_oracle(stripped, [1])


def test_accuracy_and_macro_f1_all_correct():
    assert compute_metrics(["a", "b"], ["a", "b"], "accuracy") == 1.0
    assert compute_metrics(["a", "b"], ["a", "b"], "macro_f1") == 1.0


def test_macro_f1_all_one_class_on_balanced_gold():
    predictions = ["a"] * 10
    gold = ["a"] * 5 + ["b"] * 5
    assert compute_metrics(predictions, gold, "accuracy") == 0.5
    assert compute_metrics(predictions, gold, "macro_f1") == pytest.approx(1 / 3, abs=1e-12)


def test_macro_f1_absent_class_contributes_zero():
    predictions = ["a", "b"]
    gold = ["a", "b"]
    with_absent = compute_metrics(predictions, gold, "macro_f1", labels=["a", "b", "c"])
    assert with_absent == pytest.approx(2 / 3, abs=1e-12)


label_lists = st.lists(st.sampled_from(["a", "b", "c"]), min_size=1, max_size=40)


@given(label_lists, st.randoms())
@settings(max_examples=150, deadline=None)
def test_metric_bounds_and_perfect_score(gold, rng):
    predictions = [rng.choice(["a", "b", "c"]) for _ in gold]
    for metric in ("accuracy", "macro_f1"):
        value = compute_metrics(predictions, gold, metric, labels=["a", "b", "c"])
        assert 0.0 <= value <= 1.0
    assert compute_metrics(gold, gold, "accuracy") == 1.0
    # perfect predictions give macro-F1 1.0 over the classes actually present
    assert compute_metrics(gold, gold, "macro_f1", labels=sorted(set(gold))) == 1.0


def test_metrics_shape_errors():
    with pytest.raises(ShapeError):
        compute_metrics(["a"], ["a", "b"], "accuracy")
    with pytest.raises(ShapeError):
        compute_metrics([], [], "accuracy")
    with pytest.raises(ConfigError):
        compute_metrics(["a"], ["a"], "f2")


def small_plan(dataset_dir: Path, output: Path, strategies, **overrides) -> ExperimentPlan:
    params = dict(
        manifest_path=str(dataset_dir),
        strategies=strategies,
        budget=20,
        step=10,
        output_dir=str(output),
        num_data_randomizations=2,
        num_model_seeds=2,
        metric="accuracy",
        base_seed=7,
        prompt_config=PromptConfig(selection_size=10, presented_batch_size=200),
        proxy_params={"epochs": 120, "lr": 0.5},
    )
    params.update(overrides)
    return ExperimentPlan(**params)


@pytest.fixture
def small_dataset(tmp_path):
    return write_dataset(tmp_path / "ds", n_train=120, n_test=40, n_classes=2)


def test_random_report_shape_and_aggregation(small_dataset, tmp_path):
    plan = small_plan(small_dataset, tmp_path / "out", [StrategySpec("random")])
    report = run_experiment(plan)
    assert report.budgets == [10, 20]
    scores = report.raw_scores["random"]["10"]
    assert len(scores) == 4  # 2 randomizations x 2 model seeds
    mean = sum(s["score"] for s in scores) / len(scores)
    assert report.summary["random"]["10"]["mean"] == pytest.approx(mean, abs=1e-15)
    sd = (sum((s["score"] - mean) ** 2 for s in scores) / len(scores)) ** 0.5
    assert report.summary["random"]["10"]["sd"] == pytest.approx(sd, abs=1e-12)
    assert (tmp_path / "out" / "report.json").exists()
    assert (tmp_path / "out" / "curve_random.tsv").exists()
    assert (tmp_path / "out" / "timings.json").exists()


def test_report_byte_identical_across_runs(small_dataset, tmp_path):
    plan_a = small_plan(small_dataset, tmp_path / "a", [StrategySpec("random")])
    plan_b = small_plan(small_dataset, tmp_path / "b", [StrategySpec("random")],
                        output_dir=str(tmp_path / "b"))
    run_experiment(plan_a)
    run_experiment(plan_b)
    report_a = (tmp_path / "a" / "report.json").read_bytes()
    report_b = (tmp_path / "b" / "report.json").read_bytes()
    # plan fingerprints differ through output_dir; compare everything else
    doc_a = json.loads(report_a)
    doc_b = json.loads(report_b)
    doc_a.pop("plan_fingerprint")
    doc_b.pop("plan_fingerprint")
    assert doc_a == doc_b


def test_random_curve_is_isolated_from_other_strategies(small_dataset, tmp_path):
    solo = small_plan(small_dataset, tmp_path / "solo", [StrategySpec("random")])
    paired = small_plan(small_dataset, tmp_path / "paired",
                        [StrategySpec("random"), StrategySpec("least_confidence")],
                        output_dir=str(tmp_path / "paired"))
    report_solo = run_experiment(solo)
    report_paired = run_experiment(paired)
    assert report_solo.raw_scores["random"] == report_paired.raw_scores["random"]


def test_llm_strategy_runs_with_scripted_endpoint(small_dataset, tmp_path):
    responses = [", ".join(str(i) for i in range(start, start + 10))
                 for start in (0, 10)]
    plan = small_plan(
        small_dataset, tmp_path / "out", [StrategySpec("active_llm")],
        num_data_randomizations=1,
        endpoint_spec={"kind": "scripted", "responses": responses},
    )
    report = run_experiment(plan)
    assert report.cells["active_llm"]["0"]["status"] == "ok"
    assert len(report.raw_scores["active_llm"]["20"]) == 2


def test_failed_cell_is_recorded_not_fatal(small_dataset, tmp_path):
    plan = small_plan(
        small_dataset, tmp_path / "out",
        [StrategySpec("random"), StrategySpec("active_llm")],
        num_data_randomizations=1,
        endpoint_spec={"kind": "scripted", "responses": ["0,1,2,3,4,5,6,7,8,9"]},
    )  # script exhausts on the second iteration
    report = run_experiment(plan)
    assert report.cells["random"]["0"]["status"] == "ok"
    cell = report.cells["active_llm"]["0"]
    assert cell["status"] == "failed"
    assert "ScriptExhausted" in cell["cause"]
    assert report.summary["active_llm"]["20"]["n"] == 0


def test_hybrid_switch_recorded(small_dataset, tmp_path):
    responses = ["0,1,2,3,4,5,6,7,8,9"]
    spec = StrategySpec("hybrid_coldstart", {
        "seed_budget": 10,
        "main": {"id": "prediction_entropy", "params": {}},
    })
    plan = small_plan(
        small_dataset, tmp_path / "out", [spec],
        num_data_randomizations=1, num_model_seeds=1,
        endpoint_spec={"kind": "scripted", "responses": responses},
    )
    report = run_experiment(plan)
    key = "hybrid_coldstart[prediction_entropy@10]"
    assert report.cells[key]["0"]["status"] == "ok"
    assert report.strategy_switches[key]["0"] == 10


def test_plan_file_round_trip(small_dataset, tmp_path):
    plan_doc = {
        "manifest_path": str(small_dataset),
        "strategies": [{"id": "random", "params": {}}],
        "budget": 20,
        "step": 10,
        "output_dir": str(tmp_path / "out"),
        "num_data_randomizations": 1,
        "num_model_seeds": 1,
        "metric": "macro_f1",
        "base_seed": 3,
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan_doc), encoding="utf-8")
    plan = load_plan(plan_path)
    assert plan.metric == "macro_f1"
    assert plan.budget_points() == [10, 20]
    report = run_experiment(plan)
    assert report.metric == "macro_f1"
    assert MetricReport.from_json(report.to_json()).summary == report.summary


def test_plan_validation():
    with pytest.raises(ConfigError):
        ExperimentPlan(manifest_path="m", strategies=[StrategySpec("random")],
                       budget=5, step=10, output_dir="o")
    with pytest.raises(ConfigError):
        ExperimentPlan(manifest_path="m", strategies=[], budget=10, step=5,
                       output_dir="o")
