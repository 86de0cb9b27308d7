"""HTTP facade over run directories for the review UI.

Read endpoints serve artifacts straight from disk; mutating endpoints
open a short-lived orchestrator (taking the single-writer lock for the
duration of the request). Every run summary carries the actions
permitted at its current stage so clients never hard-code the gate
logic. Errors are always ``{"code", "message", "stage"}``.
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path
from typing import Callable, Optional

from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .consensus import DatasetRef
from .gateway import Gateway, gateway_from_profile
from .model import HUMAN_GATES, RunState, Stage
from .orchestrator import (
    HumanGateOpen,
    InvalidSelection,
    Orchestrator,
    OrchestratorError,
    RunLocked,
    SelectionRecord,
    WrongStage,
    counter_clock,
)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, stage: Optional[str] = None):
        self.status = status
        self.code = code
        self.message = message
        self.stage = stage
        super().__init__(message)


def permitted_actions(state: RunState, has_insight: bool) -> list[str]:
    """Actions legal at the run's current stage; the UI derives its gates
    from this list."""
    stage = state.stage
    if stage is Stage.AWAIT_SELECTION:
        return ["select"]
    if stage is Stage.AWAIT_DATA:
        return ["attach_dataset"]
    if stage is Stage.COMPLETE:
        return []
    if stage is Stage.INSIGHT_SYNTHESIS and has_insight:
        return ["advance", "complete"]
    return ["advance"]


def default_gateway_factory(run_dir: Path, state: RunState) -> Gateway:
    profile = state.config.agent_profile
    kwargs = {}
    if profile.startswith("mock:"):
        kwargs["clock"] = counter_clock()
        kwargs["sleep"] = lambda _s: None
    return gateway_from_profile(
        profile, call_log_path=run_dir / "calls.jsonl", **kwargs
    )


def create_app(
    root: str | Path,
    gateway_factory: Callable[[Path, RunState], Gateway] = default_gateway_factory,
    ui_dir: Optional[str | Path] = None,
) -> FastAPI:
    root = Path(root)
    app = FastAPI(title="robin", version="0.1.0")

    def run_dir(run_id: str) -> Path:
        path = root / run_id
        if not (path / "state.json").exists():
            raise ApiError(404, "run_not_found", f"no run {run_id!r}")
        return path

    def load_state(run_id: str) -> RunState:
        path = run_dir(run_id) / "state.json"
        return RunState.from_dict(json.loads(path.read_text("utf-8")))

    def summarize(state: RunState) -> dict:
        key = RunState.artifact_key(state.iteration, Stage.INSIGHT_SYNTHESIS)
        return {
            "run_id": state.run_id,
            "stage": state.stage.value,
            "iteration": state.iteration,
            "disease_name": state.config.disease_name,
            "permitted_actions": permitted_actions(
                state, has_insight=key in state.artifact_index
            ),
            "artifacts": dict(state.artifact_index),
        }

    def open_orchestrator(run_id: str) -> Orchestrator:
        path = run_dir(run_id)
        state = load_state(run_id)
        try:
            return Orchestrator.resume(
                path,
                gateway=gateway_factory(path, state),
                clock=(
                    counter_clock(1000.0)
                    if state.config.agent_profile.startswith("mock:")
                    else __import__("time").time
                ),
            )
        except RunLocked as exc:
            raise ApiError(409, "run_locked", str(exc), load_state(run_id).stage.value)
        except OrchestratorError as exc:
            raise ApiError(500, type(exc).__name__, str(exc))

    def artifact_json(run_id: str, name: str) -> dict:
        path = run_dir(run_id) / name
        if not path.exists():
            raise ApiError(
                404, "artifact_missing", f"{name} not produced yet",
                load_state(run_id).stage.value,
            )
        return json.loads(path.read_text("utf-8"))

    @app.exception_handler(ApiError)
    async def handle_api_error(_request: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message, "stage": exc.stage},
        )

    @app.get("/runs")
    def list_runs() -> list[dict]:
        summaries = []
        if root.exists():
            for child in sorted(root.iterdir()):
                if (child / "state.json").exists():
                    summaries.append(summarize(load_state(child.name)))
        return summaries

    @app.get("/runs/{run_id}")
    def get_run(run_id: str) -> dict:
        return summarize(load_state(run_id))

    @app.get("/runs/{run_id}/ranking")
    def get_ranking(run_id: str) -> dict:
        return artifact_json(run_id, "ranking.json")

    @app.get("/runs/{run_id}/comparisons")
    def get_comparisons(run_id: str) -> list[dict]:
        path = run_dir(run_id) / "comparisons.jsonl"
        if not path.exists():
            return []
        return [
            json.loads(line)
            for line in path.read_text("utf-8").splitlines()
            if line.strip()
        ]

    @app.get("/runs/{run_id}/consensus")
    def get_consensus(run_id: str) -> dict:
        return artifact_json(run_id, "consensus.json")

    @app.get("/runs/{run_id}/artifacts/{key}")
    def get_artifact(run_id: str, key: str) -> dict:
        state = load_state(run_id)
        rel = state.artifact_index.get(key)
        if rel is None:
            raise ApiError(404, "artifact_missing", f"no artifact {key!r}", state.stage.value)
        return json.loads((run_dir(run_id) / rel).read_text("utf-8"))

    @app.post("/runs/{run_id}/advance")
    def post_advance(run_id: str) -> dict:
        with open_orchestrator(run_id) as orch:
            try:
                state = orch.advance()
            except HumanGateOpen as exc:
                raise ApiError(409, "human_gate_open", str(exc), orch.state.stage.value)
            except WrongStage as exc:
                raise ApiError(409, "wrong_stage", str(exc), orch.state.stage.value)
            except OrchestratorError as exc:
                raise ApiError(500, type(exc).__name__, str(exc), orch.state.stage.value)
            return summarize(state)

    @app.post("/runs/{run_id}/selection")
    def post_selection(run_id: str, body: dict) -> dict:
        selected = body.get("selected_ids")
        if not isinstance(selected, list) or not all(isinstance(i, int) for i in selected):
            raise ApiError(422, "bad_request", "selected_ids must be a list of integers")
        with open_orchestrator(run_id) as orch:
            record = SelectionRecord(
                iteration=orch.state.iteration,
                selected_ids=tuple(selected),
                selector=str(body.get("selector", "reviewer")),
                rationale=str(body.get("rationale", "")),
            )
            try:
                state = orch.submit_selection(record)
            except (WrongStage, InvalidSelection) as exc:
                raise ApiError(409, type(exc).__name__, str(exc), orch.state.stage.value)
            return summarize(state)

    @app.post("/runs/{run_id}/dataset")
    def post_dataset(
        run_id: str,
        archive: UploadFile = File(...),
        metadata: UploadFile = File(...),
        analysis_prompt: str = Form(""),
    ) -> dict:
        dataset_dir = run_dir(run_id) / "dataset"
        dataset_dir.mkdir(exist_ok=True)
        archive_path = dataset_dir / (archive.filename or "archive.bin")
        metadata_path = dataset_dir / (metadata.filename or "metadata.json")
        with open(archive_path, "wb") as handle:
            shutil.copyfileobj(archive.file, handle)
        with open(metadata_path, "wb") as handle:
            shutil.copyfileobj(metadata.file, handle)
        with open_orchestrator(run_id) as orch:
            try:
                state = orch.attach_dataset(
                    DatasetRef(str(archive_path), str(metadata_path)),
                    analysis_prompt=analysis_prompt,
                )
            except OrchestratorError as exc:
                raise ApiError(409, type(exc).__name__, str(exc), orch.state.stage.value)
            return summarize(state)

    @app.post("/runs/{run_id}/complete")
    def post_complete(run_id: str) -> dict:
        with open_orchestrator(run_id) as orch:
            try:
                state = orch.complete_run()
            except WrongStage as exc:
                raise ApiError(409, "wrong_stage", str(exc), orch.state.stage.value)
            return summarize(state)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
