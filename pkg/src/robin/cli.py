"""Command-line front end over the run library.

Usage errors exit 2 (click's convention); run-level failures exit 1
with a one-line message on stderr. All run directories live under
ROBIN_HOME (default ./runs). Every read command accepts --json for
machine-readable output.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import consensus as consensus_mod
from .consensus import DatasetRef
from .gateway import gateway_from_profile
from .model import ComparisonRecord, RunConfig, RunState, Stage
from .orchestrator import (
    Orchestrator,
    OrchestratorError,
    SelectionRecord,
    counter_clock,
)
from .report import write_report
from .tournament import fit_btl, rank


def _root() -> Path:
    return Path(os.environ.get("ROBIN_HOME", "runs"))


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _open(run_id: str, need_gateway: bool = True) -> Orchestrator:
    run_dir = _root() / run_id
    if not (run_dir / "state.json").exists():
        _fail(f"no run {run_id!r} under {_root()}")
    state = RunState.from_dict(
        json.loads((run_dir / "state.json").read_text("utf-8"))
    )
    kwargs = {}
    if need_gateway:
        profile = state.config.agent_profile
        gw_kwargs = {}
        if profile.startswith("mock:"):
            gw_kwargs["clock"] = counter_clock()
            gw_kwargs["sleep"] = lambda _s: None
            kwargs["clock"] = counter_clock(1000.0)
        try:
            kwargs["gateway"] = gateway_from_profile(
                profile, call_log_path=run_dir / "calls.jsonl", **gw_kwargs
            )
        except (ValueError, OSError) as exc:
            _fail(str(exc))
    try:
        return Orchestrator.resume(run_dir, **kwargs)
    except OrchestratorError as exc:
        _fail(str(exc))
        raise AssertionError  # unreachable


@click.group()
def main() -> None:
    """Staged discovery runs: generate, rank, review, analyze, iterate."""


@main.command()
@click.option("--disease", default=None, help="Disease under study.")
@click.option("--config", "config_file", default=None, type=click.Path(exists=True),
              help="JSON file of config fields; flags override it.")
@click.option("--queries", type=int, default=None)
@click.option("--assays", type=int, default=None)
@click.option("--candidates", type=int, default=None)
@click.option("--trajectories", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--profile", default=None,
              help="Agent profile: 'env', 'default', or 'mock:<script.jsonl>'.")
@click.option("--run-id", default=None, help="Explicit run id (default: random).")
def init(disease, config_file, queries, assays, candidates, trajectories, seed,
         profile, run_id):
    """Create a new run directory."""
    raw: dict = {}
    if config_file:
        raw.update(json.loads(Path(config_file).read_text("utf-8")))
    overrides = {
        "disease_name": disease,
        "num_queries": queries,
        "num_assays": assays,
        "num_candidates": candidates,
        "trajectory_count": trajectories,
        "seed": seed,
        "agent_profile": profile,
    }
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if "disease_name" not in raw:
        raise click.UsageError("provide --disease or a --config file naming it")
    try:
        config = RunConfig.from_dict(raw)
    except TypeError as exc:
        _fail(str(exc))
    profile = config.agent_profile
    _root().mkdir(parents=True, exist_ok=True)
    try:
        clock = counter_clock() if profile.startswith("mock:") else None
        kwargs = {"clock": clock} if clock else {}
        with Orchestrator.create(_root(), config, run_id=run_id, **kwargs) as orch:
            click.echo(orch.state.run_id)
    except (OrchestratorError, ValueError, FileExistsError) as exc:
        _fail(str(exc))


@main.command()
@click.argument("run_id")
@click.option("--until", default=None,
              type=click.Choice([s.value for s in Stage]),
              help="Advance repeatedly until this stage (or a human gate).")
def advance(run_id, until):
    """Execute the next pipeline stage (or several with --until)."""
    with _open(run_id) as orch:
        try:
            if until:
                state = orch.advance_until(Stage(until))
            else:
                state = orch.advance()
        except OrchestratorError as exc:
            _fail(str(exc))
        click.echo(f"{state.run_id} stage={state.stage.value} iteration={state.iteration}")


@main.command()
@click.argument("run_id")
@click.option("--json", "as_json", is_flag=True)
def status(run_id, as_json):
    """Show the run's stage, iteration, and artifact index."""
    with _open(run_id, need_gateway=False) as orch:
        state = orch.state
        if as_json:
            click.echo(json.dumps(state.to_dict(), indent=2, sort_keys=True))
        else:
            click.echo(f"run:       {state.run_id}")
            click.echo(f"stage:     {state.stage.value}")
            click.echo(f"iteration: {state.iteration}")
            for key in sorted(state.artifact_index):
                click.echo(f"  {key} -> {state.artifact_index[key]}")


@main.command("rank")
@click.argument("run_id")
@click.option("--json", "as_json", is_flag=True)
def rank_cmd(run_id, as_json):
    """Print the current candidate ranking."""
    path = _root() / run_id / "ranking.json"
    if not path.exists():
        _fail("no ranking yet; run the candidate tournament first")
    doc = json.loads(path.read_text("utf-8"))
    if as_json:
        click.echo(json.dumps(doc, indent=2, sort_keys=True))
        return
    names = doc.get("names", {})
    for pos, entry in enumerate(doc["ranking"]["entries"], start=1):
        hid = entry["hypothesis_id"]
        click.echo(f"{pos:3d}. [{hid:3d}] {names.get(str(hid), '')}  "
                   f"strength={entry['strength']:.6f}")


@main.command()
@click.argument("run_id")
@click.option("--ids", required=True, help="Comma-separated candidate ids.")
@click.option("--selector", default="reviewer", show_default=True)
@click.option("--rationale", default="")
def select(run_id, ids, selector, rationale):
    """Record the human candidate selection."""
    try:
        selected = tuple(int(part) for part in ids.split(",") if part.strip())
    except ValueError:
        raise click.BadParameter("ids must be comma-separated integers")
    with _open(run_id, need_gateway=False) as orch:
        try:
            state = orch.submit_selection(
                SelectionRecord(
                    iteration=orch.state.iteration,
                    selected_ids=selected,
                    selector=selector,
                    rationale=rationale,
                )
            )
        except OrchestratorError as exc:
            _fail(str(exc))
        click.echo(f"{state.run_id} stage={state.stage.value}")


@main.command()
@click.argument("run_id")
@click.option("--archive", required=True, type=click.Path(exists=True))
@click.option("--metadata", required=True, type=click.Path(exists=True))
@click.option("--prompt", "analysis_prompt", default="", help="Analysis instructions.")
def dataset(run_id, archive, metadata, analysis_prompt):
    """Attach the experimental dataset and its metadata sidecar."""
    with _open(run_id, need_gateway=False) as orch:
        try:
            state = orch.attach_dataset(
                DatasetRef(str(archive), str(metadata)), analysis_prompt
            )
        except OrchestratorError as exc:
            _fail(str(exc))
        click.echo(f"{state.run_id} stage={state.stage.value}")


@main.command()
@click.argument("run_id")
def analyze(run_id):
    """Run trajectory analysis, consensus, and insight synthesis."""
    with _open(run_id) as orch:
        try:
            state = orch.advance_until(Stage.INSIGHT_SYNTHESIS)
            if state.stage is Stage.INSIGHT_SYNTHESIS:
                orch.advance()
        except OrchestratorError as exc:
            _fail(str(exc))
        click.echo(f"{orch.state.run_id} stage={orch.state.stage.value}")


@main.command()
@click.argument("run_id")
def complete(run_id):
    """Freeze a run after insight synthesis."""
    with _open(run_id, need_gateway=False) as orch:
        try:
            state = orch.complete_run()
        except OrchestratorError as exc:
            _fail(str(exc))
        click.echo(f"{state.run_id} stage={state.stage.value}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--ui-dir", default=None, type=click.Path(),
              help="Directory of built UI assets to serve at /ui.")
def serve(host, port, ui_dir):
    """Serve the HTTP API (and optionally the review UI)."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(_root(), ui_dir=ui_dir), host=host, port=port)


@main.command()
@click.option("--records", required=True, type=click.Path(exists=True),
              help="JSONL of comparison records.")
@click.option("--n-items", required=True, type=int)
@click.option("--alpha", type=float, default=0.5, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def tournament(records, n_items, alpha, as_json):
    """Fit BTL strengths over a standalone comparison record file."""
    parsed = []
    with open(records, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                parsed.append(ComparisonRecord.from_dict(json.loads(line)))
    try:
        fit = fit_btl(parsed, n_items=n_items, smoothing_alpha=alpha)
        ranking = rank(fit, allow_unconverged=True)
    except (ValueError, RuntimeError) as exc:
        _fail(str(exc))
    if as_json:
        click.echo(json.dumps(
            {"fit": fit.to_dict(), "ranking": ranking.to_dict()},
            indent=2, sort_keys=True,
        ))
    else:
        for pos, (hid, strength) in enumerate(ranking.entries, start=1):
            click.echo(f"{pos:3d}. [{hid:3d}] strength={strength:.6f}")


@main.command("consensus")
@click.option("--trajectories-dir", required=True, type=click.Path(exists=True),
              help="Directory of per-trajectory findings JSONL files.")
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def consensus_cmd(trajectories_dir, threshold, as_json):
    """Aggregate standalone trajectory outputs into a consensus summary."""
    directory = Path(trajectories_dir)
    ids = sorted(
        int(p.stem) for p in directory.glob("*.jsonl") if p.stem.isdigit()
    )
    if not ids:
        _fail(f"no trajectory files under {directory}")
    outcomes = [consensus_mod.load_outcome(directory, tid) for tid in ids]
    try:
        summary = consensus_mod.aggregate(outcomes, threshold=threshold)
    except ValueError as exc:
        _fail(str(exc))
    if as_json:
        click.echo(json.dumps(summary.to_dict(), indent=2, sort_keys=True))
    else:
        for item in summary.items:
            flag = " *" if item.item in summary.flagged else ""
            click.echo(
                f"{item.item}: {item.direction.value} "
                f"({item.support_fraction:.2f}){flag}"
            )


@main.command()
@click.argument("run_id")
@click.option("--out", default=None, type=click.Path(),
              help="Output directory (default: <run>/report).")
def report(run_id, out):
    """Render ranking and consensus to CSV files and figures."""
    run_dir = _root() / run_id
    if not (run_dir / "state.json").exists():
        _fail(f"no run {run_id!r} under {_root()}")
    out_dir = Path(out) if out else run_dir / "report"
    written = write_report(run_dir, out_dir)
    if not written:
        _fail("nothing to report yet: no ranking or consensus artifacts")
    for path in written:
        click.echo(str(path))


if __name__ == "__main__":
    main()
