"""Command-line entry point: ``tooldag generate|run|sweep|classify|report``."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import click
import yaml

from .agents import AgentFactory, AgentSpec, run_agent
from .executor import EpisodeOptions
from .harness import (
    SweepConfig,
    fold_traces,
    read_traces,
    relabel_traces,
    report_csv,
    run_sweep,
    write_report,
    write_traces,
)
from .taskgen import GenConfig, TaskInstance, generate_task, render_user_prompt


def _gen_options(f):
    for opt in reversed(
        [
            click.option("--n-core", type=int, default=5, show_default=True),
            click.option("--depth", type=int, default=2, show_default=True),
            click.option("--n-conn", type=int, default=0, show_default=True),
            click.option("--n-dis", type=int, default=0, show_default=True),
            click.option("--extra-free-inputs", type=int, default=0, show_default=True),
            click.option("--seed", type=int, default=0, show_default=True),
        ]
    ):
        f = opt(f)
    return f


def _load_config(path: Path) -> dict:
    text = path.read_text()
    data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    return data or {}


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose: bool) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING)


@main.command()
@_gen_options
@click.option("--out", type=click.Path(path_type=Path), help="Write task JSON here instead of stdout.")
@click.option("--prompt", "show_prompt", is_flag=True, help="Print only the user prompt.")
def generate(n_core, depth, n_conn, n_dis, extra_free_inputs, seed, out, show_prompt):
    """Generate one task."""
    task = generate_task(GenConfig(n_core, depth, n_conn, n_dis, extra_free_inputs, seed))
    if show_prompt:
        click.echo(render_user_prompt(task))
        return
    text = task.to_json(indent=2)
    if out:
        out.write_text(text + "\n")
    else:
        click.echo(text)


@main.command()
@_gen_options
@click.option("--task", "task_file", type=click.Path(exists=True, path_type=Path), help="Replay a saved task.")
@click.option("--agent", default="oracle", show_default=True, help="oracle|null|random|greedy|stale|llm")
@click.option("--agent-config", type=click.Path(exists=True, path_type=Path), help="YAML/JSON agent options.")
@click.option("--mitigation/--no-mitigation", default=False)
@click.option("--call-cap", type=int, default=None)
@click.option("--trace-out", type=click.Path(path_type=Path), help="Directory for episode/call JSONL.")
def run(n_core, depth, n_conn, n_dis, extra_free_inputs, seed, task_file, agent, agent_config, mitigation, call_cap, trace_out):
    """Run one episode and print its summary."""
    if task_file:
        task = TaskInstance.from_dict(json.loads(task_file.read_text()))
    else:
        task = generate_task(GenConfig(n_core, depth, n_conn, n_dis, extra_free_inputs, seed))
    options = _load_config(agent_config) if agent_config else {}
    factory = AgentFactory(AgentSpec(agent, options))
    try:
        trace = run_agent(factory(task, task.seed), task, EpisodeOptions(mitigation, call_cap), episode_id="run")
    finally:
        if factory.client is not None:
            factory.client.close()
    if trace_out:
        write_traces([trace], trace_out)
    click.echo(json.dumps(trace.summary(), indent=2))


@main.command()
@click.option("--config", "config_file", type=click.Path(exists=True, path_type=Path))
@click.option("--agent", default=None, help="Override the agent kind from the config.")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--workers", type=int, default=None)
def sweep(config_file, agent, out, workers):
    """Run the full experiment grid."""
    data = _load_config(config_file) if config_file else {}
    if agent:
        data["agent"] = agent
    if workers:
        data["workers"] = workers
    report = run_sweep(SweepConfig.from_dict(data), out)
    o = report.overall
    click.echo(f"{o.episodes} episodes, success rate {o.success_rate:.3f}, results in {out}")


@main.command()
@click.argument("trace_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
def classify(trace_dir):
    """Relabel stored call traces in place."""
    traces = read_traces(trace_dir)
    changed = relabel_traces(traces)
    write_traces(traces, trace_dir)
    click.echo(f"relabelled {sum(len(t.records) for t in traces)} calls, {changed} changed")


@main.command()
@click.argument("trace_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Defaults to TRACE_DIR.")
@click.option("--exclude-infra", is_flag=True, help="Drop adapter failures from denominators.")
def report(trace_dir, out, exclude_infra):
    """Fold stored traces into report.csv and summary.json."""
    rep = fold_traces(read_traces(trace_dir), exclude_infra)
    write_report(rep, out or trace_dir)
    click.echo(report_csv(rep), nl=False)


if __name__ == "__main__":
    main()
