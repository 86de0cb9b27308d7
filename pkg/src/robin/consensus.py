"""Multi-trajectory analysis fan-out and consensus meta-analysis.

A trajectory runner is an abstract interface with two implementations:
fixture replay (deterministic, for tests and CI) and a gateway-backed
single-shot analyst that sends the analysis prompt plus the dataset
manifest and parses a findings list. Aggregation counts, per item, how
many completed trajectories assert each direction and flags items whose
max-direction support strictly exceeds the threshold.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

from .gateway import AgentRequest, Exhausted, Gateway, Role
from .model import Direction, TrajectoryFinding
from .parsers import NoJsonArray, ParseError, _extract_json

logger = logging.getLogger(__name__)


class RunnerUnavailable(RuntimeError):
    pass


class NoCompletedTrajectories(ValueError):
    pass


@dataclass(frozen=True)
class DatasetRef:
    """Opaque archive plus JSON metadata sidecar (e.g. a well-to-treatment map)."""

    archive_path: str
    metadata_path: str

    def to_dict(self) -> dict:
        return {"archive_path": self.archive_path, "metadata_path": self.metadata_path}

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetRef":
        return cls(archive_path=data["archive_path"], metadata_path=data["metadata_path"])


@dataclass
class TrajectoryOutcome:
    trajectory_id: int
    findings: list[TrajectoryFinding]
    status: str  # "completed" | "failed"
    notes: str = ""

    @property
    def completed(self) -> bool:
        return self.status == "completed"


class TrajectoryRunner(Protocol):
    def run(
        self, dataset: DatasetRef, analysis_prompt: str, trajectory_id: int, seed: int
    ) -> TrajectoryOutcome: ...


class FixtureReplayRunner:
    """Replays canned finding sets; entry ``None`` scripts a failure."""

    def __init__(self, fixtures: Sequence[Optional[list[TrajectoryFinding]]]):
        self._fixtures = list(fixtures)

    def run(
        self, dataset: DatasetRef, analysis_prompt: str, trajectory_id: int, seed: int
    ) -> TrajectoryOutcome:
        fixture = self._fixtures[trajectory_id % len(self._fixtures)]
        if fixture is None:
            return TrajectoryOutcome(trajectory_id, [], "failed", notes="scripted failure")
        findings = [
            TrajectoryFinding(
                trajectory_id=trajectory_id,
                item=f.item,
                direction=f.direction,
                effect=f.effect,
                significance=f.significance,
            )
            for f in fixture
        ]
        return TrajectoryOutcome(trajectory_id, findings, "completed")


def parse_findings(text: str, trajectory_id: int) -> list[TrajectoryFinding]:
    """Parse an analyst reply: a JSON array of {item, direction, effect?, significance?}."""
    warnings: list[tuple[str, str]] = []
    array = _extract_json(text, "[", "]", warnings)
    if array is None or not isinstance(array, list):
        raise NoJsonArray("analyst reply holds no findings array")
    findings = []
    for element in array:
        if not isinstance(element, dict) or "item" not in element:
            raise ParseError(f"malformed finding element: {element!r}")
        findings.append(
            TrajectoryFinding(
                trajectory_id=trajectory_id,
                item=str(element["item"]),
                direction=Direction(str(element.get("direction", "neutral")).lower()),
                effect=element.get("effect"),
                significance=element.get("significance"),
            )
        )
    return findings


class GatewayAnalystRunner:
    """Single-shot analyst over the gateway; no notebook execution."""

    def __init__(self, gateway: Gateway):
        self._gateway = gateway

    def run(
        self, dataset: DatasetRef, analysis_prompt: str, trajectory_id: int, seed: int
    ) -> TrajectoryOutcome:
        user = (
            f"{analysis_prompt}\n\nDataset archive: {dataset.archive_path}\n"
            f"Metadata sidecar: {dataset.metadata_path}\n"
            f"Trajectory seed: {seed}\n\n"
            "Report your findings as a JSON array of objects with keys "
            '"item", "direction" (up|down|neutral), "effect", "significance".'
        )
        request = AgentRequest(
            role=Role.TRAJECTORY_ANALYST,
            system="",
            user=user,
            tag=f"trajectory-{trajectory_id}",
        )
        try:
            response = self._gateway.complete(request)
            findings = parse_findings(response.text, trajectory_id)
        except (Exhausted, ParseError, ValueError) as exc:
            logger.warning("trajectory %d failed: %s", trajectory_id, exc)
            return TrajectoryOutcome(trajectory_id, [], "failed", notes=str(exc))
        return TrajectoryOutcome(trajectory_id, findings, "completed")


def persist_outcome(outcome: TrajectoryOutcome, directory: Path) -> Path:
    """Write findings as JSONL plus a small status sidecar; atomic per file."""
    directory.mkdir(parents=True, exist_ok=True)
    findings_path = directory / f"{outcome.trajectory_id}.jsonl"
    tmp = findings_path.with_suffix(".jsonl.tmp")
    with open(tmp, "w", encoding="utf-8") as handle:
        for finding in outcome.findings:
            handle.write(json.dumps(finding.to_dict(), sort_keys=True) + "\n")
    tmp.replace(findings_path)
    meta_path = directory / f"{outcome.trajectory_id}.meta.json"
    tmp_meta = meta_path.with_suffix(".json.tmp")
    tmp_meta.write_text(
        json.dumps(
            {
                "trajectory_id": outcome.trajectory_id,
                "status": outcome.status,
                "notes": outcome.notes,
            },
            sort_keys=True,
        ),
        encoding="utf-8",
    )
    tmp_meta.replace(meta_path)
    return findings_path


def load_outcome(directory: Path, trajectory_id: int) -> TrajectoryOutcome:
    meta = json.loads((directory / f"{trajectory_id}.meta.json").read_text("utf-8"))
    findings = []
    findings_path = directory / f"{trajectory_id}.jsonl"
    for line in findings_path.read_text("utf-8").splitlines():
        if line.strip():
            findings.append(TrajectoryFinding.from_dict(json.loads(line)))
    return TrajectoryOutcome(
        trajectory_id=trajectory_id,
        findings=findings,
        status=meta["status"],
        notes=meta.get("notes", ""),
    )


def run_trajectories(
    dataset: DatasetRef,
    analysis_prompt: str,
    runner: TrajectoryRunner,
    n: int,
    seed: int = 0,
    persist_dir: Optional[Path] = None,
    max_workers: int = 8,
) -> list[TrajectoryOutcome]:
    """Launch ``n`` independent trajectories with distinct seeds; failures
    are recorded, not fatal; outcomes persist before return."""
    if runner is None:
        raise RunnerUnavailable("no trajectory runner registered")
    if n < 1:
        raise ValueError("n must be >= 1")

    def one(tid: int) -> TrajectoryOutcome:
        try:
            return runner.run(dataset, analysis_prompt, tid, seed + tid)
        except Exception as exc:  # noqa: BLE001 - per-trajectory isolation
            logger.warning("trajectory %d raised: %s", tid, exc)
            return TrajectoryOutcome(tid, [], "failed", notes=str(exc))

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        outcomes = list(pool.map(one, range(n)))
    if persist_dir is not None:
        for outcome in outcomes:
            persist_outcome(outcome, persist_dir)
    return outcomes


@dataclass
class ItemConsensus:
    item: str
    direction: Direction
    support_fraction: float
    counts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "item": self.item,
            "direction": self.direction.value,
            "support_fraction": self.support_fraction,
            "counts": dict(self.counts),
        }


@dataclass
class ConsensusSummary:
    items: list[ItemConsensus]  # sorted by support desc, then item asc
    threshold: float
    flagged: list[str]
    n_trajectories_used: int
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "items": [i.to_dict() for i in self.items],
            "threshold": self.threshold,
            "flagged": list(self.flagged),
            "n_trajectories_used": self.n_trajectories_used,
            "warnings": list(self.warnings),
        }


_DIRECTION_ORDER = (Direction.UP, Direction.DOWN, Direction.NEUTRAL)


def aggregate(
    outcomes: Sequence[TrajectoryOutcome],
    threshold: float,
    include_failed: bool = False,
) -> ConsensusSummary:
    """Per-item direction counts over completed trajectories; an item is
    flagged only when its max-direction share strictly exceeds the threshold."""
    used = [o for o in outcomes if include_failed or o.completed]
    if not used:
        raise NoCompletedTrajectories("no completed trajectory to aggregate")
    warnings: list[str] = []
    counts: dict[str, Counter] = {}
    for outcome in used:
        best: dict[str, TrajectoryFinding] = {}
        for finding in outcome.findings:
            prior = best.get(finding.item)
            if prior is not None:
                warnings.append(
                    f"trajectory {outcome.trajectory_id} repeats item {finding.item!r}; "
                    "keeping the larger effect"
                )
                if abs(finding.effect or 0) <= abs(prior.effect or 0):
                    continue
            best[finding.item] = finding
        for item, finding in best.items():
            counts.setdefault(item, Counter())[finding.direction] += 1

    n_used = len(used)
    items = []
    for item, counter in counts.items():
        top = max(_DIRECTION_ORDER, key=lambda d: counter.get(d, 0))
        items.append(
            ItemConsensus(
                item=item,
                direction=top,
                support_fraction=counter[top] / n_used,
                counts={d.value: counter.get(d, 0) for d in _DIRECTION_ORDER},
            )
        )
    items.sort(key=lambda ic: (-ic.support_fraction, ic.item))
    flagged = [ic.item for ic in items if ic.support_fraction > threshold]
    return ConsensusSummary(
        items=items,
        threshold=threshold,
        flagged=flagged,
        n_trajectories_used=n_used,
        warnings=warnings,
    )
