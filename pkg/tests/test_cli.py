import json

from click.testing import CliRunner

from labelloop.cli import main

from conftest import build_pool, inline_source, write_dataset


def write_pool_json(tmp_path, n=30):
    path = tmp_path / "pool.json"
    path.write_text(json.dumps(inline_source(build_pool(n))["pool"]),
                    encoding="utf-8")
    return path


def write_script(tmp_path, responses):
    path = tmp_path / "script.json"
    path.write_text(json.dumps(responses), encoding="utf-8")
    return path


def test_session_new_step_run_export(tmp_path):
    runner = CliRunner()
    pool_json = write_pool_json(tmp_path)
    script = write_script(tmp_path, ["0, 1, 2, 3, 4", "5, 6, 7, 8, 9"])
    session_dir = tmp_path / "mysession"

    created = runner.invoke(main, [
        "session", "new", "--dir", str(session_dir),
        "--pool-json", str(pool_json), "--scripted", str(script),
        "--selection-size", "5", "--budget", "10", "--k", "5",
        "--session-id", "cli-demo",
    ])
    assert created.exit_code == 0, created.output
    assert "cli-demo" in created.output
    assert "config B2" in created.output

    stepped = runner.invoke(main, ["session", "step", "--dir", str(session_dir),
                                   "--simulate"])
    assert stepped.exit_code == 0, stepped.output
    assert "labeled 5 instances (5/10)" in stepped.output

    ran = runner.invoke(main, ["session", "run", "--dir", str(session_dir)])
    assert ran.exit_code == 0, ran.output
    assert "labeled 10/10" in ran.output

    out_file = tmp_path / "labels.jsonl"
    exported = runner.invoke(main, ["session", "export-labels",
                                    "--dir", str(session_dir),
                                    "-o", str(out_file)])
    assert exported.exit_code == 0, exported.output
    lines = out_file.read_text().strip().splitlines()
    assert len(lines) == 10


def test_session_step_with_labels_file(tmp_path):
    runner = CliRunner()
    pool_json = write_pool_json(tmp_path)
    script = write_script(tmp_path, ["0, 1, 2"])
    session_dir = tmp_path / "s"
    runner.invoke(main, [
        "session", "new", "--dir", str(session_dir),
        "--pool-json", str(pool_json), "--scripted", str(script),
        "--selection-size", "3", "--budget", "3",
    ])
    # first step without labels prints the open task
    printed = runner.invoke(main, ["session", "step", "--dir", str(session_dir)])
    assert printed.exit_code == 0, printed.output
    assert "Index 0:" in printed.output

    labels_file = tmp_path / "labels.json"
    labels_file.write_text(json.dumps({"0": "cls0", "1": "cls1", "2": "cls0"}))
    labeled = runner.invoke(main, ["session", "step", "--dir", str(session_dir),
                                   "--labels-file", str(labels_file)])
    assert labeled.exit_code == 0, labeled.output
    assert "labeled 3 instances (3/3)" in labeled.output


def test_endpoint_file_settings_override(tmp_path):
    runner = CliRunner()
    pool_json = write_pool_json(tmp_path)
    endpoint_file = tmp_path / "endpoint.json"
    endpoint_file.write_text(json.dumps({
        "base_url": "https://example.test/v1",
        "model_id": "model-z",
        "settings": {"temperature": 0.2, "top_k": 40},
    }), encoding="utf-8")
    session_dir = tmp_path / "s"
    created = runner.invoke(main, [
        "session", "new", "--dir", str(session_dir),
        "--pool-json", str(pool_json), "--endpoint", str(endpoint_file),
        "--selection-size", "3", "--budget", "3",
    ])
    assert created.exit_code == 0, created.output

    from labelloop.session import load_session
    loaded = load_session(session_dir)
    assert loaded.generation.temperature == 0.2
    assert loaded.generation.top_k == 40
    assert loaded.endpoint.model_id == "model-z"


def test_session_new_requires_one_pool_source(tmp_path):
    runner = CliRunner()
    result = runner.invoke(main, ["session", "new", "--dir", str(tmp_path / "x")])
    assert result.exit_code != 0
    assert "exactly one of" in result.output


def test_exp_run_and_report(tmp_path):
    runner = CliRunner()
    manifest = write_dataset(tmp_path / "ds", n_train=80, n_test=30, n_classes=2)
    plan = {
        "manifest_path": str(manifest),
        "strategies": [{"id": "random", "params": {}}],
        "budget": 10,
        "step": 5,
        "output_dir": str(tmp_path / "out"),
        "num_data_randomizations": 1,
        "num_model_seeds": 1,
        "proxy_params": {"epochs": 60},
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan), encoding="utf-8")

    ran = runner.invoke(main, ["exp", "run", str(plan_path)])
    assert ran.exit_code == 0, ran.output
    assert "report written" in ran.output
    assert "random" in ran.output

    reported = runner.invoke(main, ["exp", "report", str(tmp_path / "out")])
    assert reported.exit_code == 0, reported.output
    assert "metric: accuracy" in reported.output
