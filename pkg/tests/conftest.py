import json
from pathlib import Path

import pytest

from _mock_script import write_script
from robin.consensus import DatasetRef
from robin.gateway import gateway_from_profile
from robin.model import RunConfig, Stage
from robin.orchestrator import Orchestrator, SelectionRecord, counter_clock

DISEASE = "hypothetical cholestatic disease"


def make_config(**overrides) -> RunConfig:
    base = dict(disease_name=DISEASE, seed=42, agent_profile="mock:script.jsonl")
    base.update(overrides)
    return RunConfig(**base)


class RunHarness:
    """Drives full mock-backed runs inside a temp directory, with fresh
    gateways per (re)open so crash-recovery tests can replay the script."""

    def __init__(self, tmp_path: Path, config: RunConfig = None, iterations: int = 1):
        self.tmp_path = tmp_path
        self.config = config or make_config(
            agent_profile=f"mock:{tmp_path / 'script.jsonl'}"
        )
        self.script = write_script(tmp_path / "script.jsonl", self.config,
                                   iterations=iterations)
        self.root = tmp_path / "runs"
        (tmp_path / "data.bin").write_bytes(b"well,value\nA1,1.0\n")
        (tmp_path / "meta.json").write_text('{"A1": "treated"}')
        self.dataset = DatasetRef(
            str(tmp_path / "data.bin"), str(tmp_path / "meta.json")
        )

    def gateway(self):
        return gateway_from_profile(
            f"mock:{self.script}",
            call_log_path=self.root / "run" / "calls.jsonl"
            if (self.root / "run").exists()
            else None,
            clock=counter_clock(),
            sleep=lambda _s: None,
        )

    def create(self, **kwargs) -> Orchestrator:
        return Orchestrator.create(
            self.root, self.config, run_id="run",
            gateway=self.gateway(), clock=counter_clock(), **kwargs,
        )

    def resume(self, **kwargs) -> Orchestrator:
        return Orchestrator.resume(
            self.root / "run", gateway=self.gateway(), clock=counter_clock(), **kwargs
        )

    @property
    def run_dir(self) -> Path:
        return self.root / "run"

    def state_on_disk(self) -> dict:
        return json.loads((self.run_dir / "state.json").read_text("utf-8"))

    def drive_to_completion(self, orch: Orchestrator, max_steps: int = 64) -> None:
        """Advance through all stages and both human gates until COMPLETE."""
        for _ in range(max_steps):
            stage = orch.state.stage
            if stage is Stage.COMPLETE:
                return
            if stage is Stage.AWAIT_SELECTION:
                orch.submit_selection(
                    SelectionRecord(
                        iteration=orch.state.iteration,
                        selected_ids=(0, 1, 2),
                        selector="tester",
                    )
                )
            elif stage is Stage.AWAIT_DATA:
                orch.attach_dataset(self.dataset, "Analyze the flow cytometry export.")
            elif stage is Stage.INSIGHT_SYNTHESIS and orch._has_artifact(
                Stage.INSIGHT_SYNTHESIS
            ):
                orch.complete_run()
            else:
                orch.advance()
        raise AssertionError("run did not complete within the step budget")


@pytest.fixture
def harness(tmp_path):
    return RunHarness(tmp_path)
