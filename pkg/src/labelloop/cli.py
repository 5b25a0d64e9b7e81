"""Command-line interface: session lifecycle, experiments, and the service."""

from __future__ import annotations

import json
import os
from pathlib import Path

import click

from .errors import LabelLoopError
from .harness import load_plan, make_simulated_labeler, run_experiment
from .llm_client import GenerationSettings
from .prompts import COT_MODES, RECAP_MODES, PromptConfig, name_config
from .session import ActiveSession, load_session
from .strategies import STRATEGY_IDS, StrategySpec


@click.group()
def main():
    """Pool-based active learning with LLM-driven selection."""


@main.group()
def session():
    """Create, advance, and export annotation sessions."""


def _fail(exc: Exception) -> None:
    raise click.ClickException(f"{type(exc).__name__}: {exc}")


@session.command("new")
@click.option("--dir", "directory", required=True, type=click.Path(path_type=Path),
              help="Session directory (created if missing).")
@click.option("--manifest", type=click.Path(exists=True, path_type=Path),
              help="Dataset manifest path.")
@click.option("--pool-json", type=click.Path(exists=True, path_type=Path),
              help="Inline pool JSON (task_name, label_space, instances).")
@click.option("--split", default="train", show_default=True)
@click.option("--shuffle-seed", type=int, default=None)
@click.option("--subsample-n", type=int, default=None)
@click.option("--subsample-seed", type=int, default=0)
@click.option("--strategy", "strategy_id", default="active_llm", show_default=True,
              type=click.Choice(STRATEGY_IDS))
@click.option("--strategy-params", default="{}", help="Strategy params as JSON.")
@click.option("--selection-size", type=int, default=32, show_default=True)
@click.option("--batch-size", type=int, default=200, show_default=True,
              help="Instances presented per prompt.")
@click.option("--advice/--no-advice", default=False, show_default=True)
@click.option("--guidelines/--no-guidelines", "use_guidelines", default=False,
              show_default=True)
@click.option("--cot", default="step_by_step", show_default=True,
              type=click.Choice(COT_MODES))
@click.option("--recap", default="no_recap", show_default=True,
              type=click.Choice(RECAP_MODES))
@click.option("--endpoint", type=click.Path(exists=True, path_type=Path),
              help="HTTP endpoint descriptor JSON file.")
@click.option("--scripted", type=click.Path(exists=True, path_type=Path),
              help="JSON file with a list of canned responses (mock endpoint).")
@click.option("--budget", type=int, default=32, show_default=True)
@click.option("--k", type=int, default=None, help="Labels per iteration.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--embeddings", type=click.Path(exists=True, path_type=Path),
              default=None, help="Embedding file for conventional strategies.")
@click.option("--session-id", default=None)
def session_new(directory, manifest, pool_json, split, shuffle_seed, subsample_n,
                subsample_seed, strategy_id, strategy_params, selection_size,
                batch_size, advice, use_guidelines, cot, recap, endpoint, scripted,
                budget, k, seed, embeddings, session_id):
    """Create a session directory ready for stepping."""
    if (manifest is None) == (pool_json is None):
        raise click.UsageError("provide exactly one of --manifest or --pool-json")
    if manifest is not None:
        pool_source = {"kind": "manifest", "path": str(manifest), "split": split,
                       "shuffle_seed": shuffle_seed}
        if subsample_n:
            pool_source["subsample"] = {"n": subsample_n, "seed": subsample_seed}
    else:
        pool_source = {"kind": "inline",
                       "pool": json.loads(pool_json.read_text(encoding="utf-8"))}

    endpoint_spec = None
    generation = None
    if endpoint and scripted:
        raise click.UsageError("--endpoint and --scripted are mutually exclusive")
    if endpoint:
        raw = json.loads(endpoint.read_text(encoding="utf-8"))
        overrides = raw.pop("settings", None)
        if overrides:
            generation = GenerationSettings.from_dict(overrides)
        endpoint_spec = {"kind": "http", **raw}
    elif scripted:
        endpoint_spec = {"kind": "scripted",
                         "responses": json.loads(scripted.read_text(encoding="utf-8"))}

    try:
        config = PromptConfig(
            selection_size=selection_size,
            presented_batch_size=batch_size,
            include_advice=advice,
            include_guidelines=use_guidelines,
            cot_mode=cot,
            recap_mode=recap,
        )
        created = ActiveSession.create(
            directory,
            pool_source=pool_source,
            prompt_config=config,
            strategy=StrategySpec(strategy_id, json.loads(strategy_params)),
            endpoint_spec=endpoint_spec,
            generation=generation,
            budget=budget,
            step_k=k,
            seed=seed,
            embeddings_path=str(embeddings) if embeddings else None,
            session_id=session_id,
        )
    except LabelLoopError as exc:
        _fail(exc)
    click.echo(f"created session {created.session_id} "
               f"(config {name_config(created.prompt_config)}, "
               f"strategy {created.strategy.id}, budget {created.budget})")


@session.command("step")
@click.option("--dir", "directory", required=True, type=click.Path(path_type=Path))
@click.option("--simulate", is_flag=True,
              help="Label with the pool's gold labels (perfect annotator).")
@click.option("--labels-file", type=click.Path(exists=True, path_type=Path),
              help="JSON mapping index -> label for the open task.")
@click.option("--k", type=int, default=None)
def session_step(directory, simulate, labels_file, k):
    """Advance one iteration: query, then label (or print the open task)."""
    try:
        current = load_session(directory)
        if current.open_task is None:
            draft = current.begin_iteration(k)
            click.echo(f"iteration {draft.iteration_number} "
                       f"({draft.strategy_id}, {draft.selection.status}): "
                       f"selected {list(draft.selection.indices)}")
        else:
            draft = current.open_task
            click.echo(f"iteration {draft.iteration_number} already open")
        if simulate:
            labels = make_simulated_labeler(current.pool)(draft.selection.indices)
        elif labels_file:
            raw = json.loads(labels_file.read_text(encoding="utf-8"))
            labels = {int(i): label for i, label in raw.items()}
        else:
            for index in draft.selection.indices:
                click.echo(f"  Index {index}: {current.pool[index].rendered_text()}")
            click.echo("no labels given; rerun with --simulate or --labels-file")
            return
        current.complete_iteration(labels)
        click.echo(f"labeled {len(labels)} instances "
                   f"({current.labeled_count}/{current.budget})")
    except LabelLoopError as exc:
        _fail(exc)


@session.command("run")
@click.option("--dir", "directory", required=True, type=click.Path(path_type=Path))
@click.option("--budget", type=int, default=None,
              help="Stop once this many labels exist (default: session budget).")
def session_run(directory, budget):
    """Run simulated iterations until the budget or pool is exhausted."""
    try:
        current = load_session(directory)
        records = current.run(make_simulated_labeler(current.pool), budget=budget)
    except LabelLoopError as exc:
        _fail(exc)
    click.echo(f"ran {len(records)} iterations, "
               f"labeled {current.labeled_count}/{current.budget}")


@session.command("export-labels")
@click.option("--dir", "directory", required=True, type=click.Path(path_type=Path))
@click.option("--out", "-o", type=click.Path(path_type=Path), default=None,
              help="Output file (default: stdout).")
def session_export(directory, out):
    """Write the labeled set as line records (index, text, label)."""
    try:
        current = load_session(directory)
    except LabelLoopError as exc:
        _fail(exc)
    lines = [json.dumps(record, sort_keys=True)
             for record in current.export_labels()]
    text = "\n".join(lines) + ("\n" if lines else "")
    if out:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"wrote {len(lines)} records to {out}")
    else:
        click.echo(text, nl=False)


@main.group()
def exp():
    """Simulated-oracle experiments."""


@exp.command("run")
@click.argument("plan_file", type=click.Path(exists=True, path_type=Path))
def exp_run(plan_file):
    """Execute an experiment plan file and write its report."""
    try:
        plan = load_plan(plan_file)
        report = run_experiment(plan)
    except LabelLoopError as exc:
        _fail(exc)
    click.echo(f"report written to {Path(plan.output_dir) / 'report.json'}")
    _print_report_table(report.canonical_dict())


@exp.command("report")
@click.argument("output_dir", type=click.Path(exists=True, path_type=Path))
def exp_report(output_dir):
    """Summarize a previously written report directory."""
    report_path = Path(output_dir) / "report.json"
    if not report_path.exists():
        raise click.ClickException(f"no report.json under {output_dir}")
    _print_report_table(json.loads(report_path.read_text(encoding="utf-8")))


def _print_report_table(report: dict) -> None:
    click.echo(f"metric: {report['metric']}")
    header = "strategy".ljust(40) + "".join(
        str(b).rjust(16) for b in report["budgets"]
    )
    click.echo(header)
    for strategy, by_budget in sorted(report["summary"].items()):
        row = strategy.ljust(40)
        for budget in report["budgets"]:
            cell = by_budget[str(budget)]
            if cell["n"]:
                row += f"{cell['mean']:.4f}±{cell['sd']:.3f}".rjust(16)
            else:
                row += "—".rjust(16)
        click.echo(row)
    for strategy, cells in sorted(report["cells"].items()):
        for randomization, cell in sorted(cells.items()):
            if cell["status"] != "ok":
                click.echo(f"  failed cell {strategy} r{randomization}: {cell['cause']}")


@main.command("serve")
@click.option("--root", required=True, type=click.Path(path_type=Path),
              help="Directory holding session state.")
@click.option("--token", default=None,
              help="Bearer token (default: $LABELLOOP_TOKEN).")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8722, show_default=True)
def serve(root, token, host, port):
    """Start the annotation HTTP service."""
    token = token or os.environ.get("LABELLOOP_TOKEN")
    if not token:
        raise click.UsageError("provide --token or set LABELLOOP_TOKEN")
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(root, token=token), host=host, port=port)


if __name__ == "__main__":
    main()
