"""Shared value types, run configuration, and validation rules.

Everything here is a plain dataclass with an explicit JSON form
(``to_dict`` / ``from_dict``) so run directories stay diffable and
hand-inspectable. Mutation of run state is confined to the
orchestrator; all other modules treat these as values.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields
from typing import Any, Optional


class InvalidConfig(ValueError):
    def __init__(self, field_name: str, reason: str):
        self.field = field_name
        self.reason = reason
        super().__init__(f"invalid config field {field_name!r}: {reason}")


class HypothesisKind(str, enum.Enum):
    ASSAY = "assay"
    CANDIDATE = "candidate"


class Direction(str, enum.Enum):
    UP = "up"
    DOWN = "down"
    NEUTRAL = "neutral"


class SourceAgent(str, enum.Enum):
    CONCISE = "concise"
    DEEP = "deep"


class Stage(str, enum.Enum):
    """Pipeline stages, one per prompt invocation plus explicit human gates."""

    QUERY_GEN = "query_gen"
    ASSAY_LIT_REVIEW = "assay_lit_review"
    ASSAY_HYP_GEN = "assay_hyp_gen"
    ASSAY_REPORTS = "assay_reports"
    ASSAY_TOURNAMENT = "assay_tournament"
    GOAL_SYNTHESIS = "goal_synthesis"
    CANDIDATE_QUERY_GEN = "candidate_query_gen"
    CANDIDATE_LIT_REVIEW = "candidate_lit_review"
    CANDIDATE_HYP_GEN = "candidate_hyp_gen"
    CANDIDATE_REPORTS = "candidate_reports"
    CANDIDATE_TOURNAMENT = "candidate_tournament"
    AWAIT_SELECTION = "await_selection"
    AWAIT_DATA = "await_data"
    TRAJECTORY_ANALYSIS = "trajectory_analysis"
    CONSENSUS = "consensus"
    INSIGHT_SYNTHESIS = "insight_synthesis"
    COMPLETE = "complete"


STAGE_ORDER: tuple[Stage, ...] = tuple(Stage)

#: Stages that only a human action can exit.
HUMAN_GATES = frozenset({Stage.AWAIT_SELECTION, Stage.AWAIT_DATA})

#: First stage of every iteration after the first.
ITERATION_RESTART = Stage.CANDIDATE_QUERY_GEN


def stage_index(stage: Stage) -> int:
    return STAGE_ORDER.index(stage)


@dataclass(frozen=True)
class RunConfig:
    disease_name: str
    num_queries: int = 10
    num_assays: int = 10
    num_candidates: int = 30
    round_robin_limit: int = 25
    comparison_cap: int = 300
    trajectory_count: int = 10
    consensus_threshold: float = 0.5
    smoothing_alpha: float = 0.5
    seed: int = 0
    agent_profile: str = "default"

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


def validate_config(raw: RunConfig | dict[str, Any]) -> RunConfig:
    """Normalize a config, filling defaults and rejecting invariant violations."""
    cfg = RunConfig.from_dict(raw) if isinstance(raw, dict) else raw
    if not isinstance(cfg.disease_name, str) or not cfg.disease_name.strip():
        raise InvalidConfig("disease_name", "must be a nonempty string")
    for name in ("num_queries", "num_assays", "num_candidates", "trajectory_count"):
        value = getattr(cfg, name)
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise InvalidConfig(name, "must be a positive integer")
    if not isinstance(cfg.round_robin_limit, int) or cfg.round_robin_limit < 2:
        raise InvalidConfig("round_robin_limit", "must be an integer >= 2")
    if not isinstance(cfg.comparison_cap, int) or cfg.comparison_cap < 1:
        raise InvalidConfig("comparison_cap", "must be an integer >= 1")
    threshold = cfg.consensus_threshold
    if not isinstance(threshold, (int, float)) or not (0 < threshold <= 1):
        raise InvalidConfig("consensus_threshold", "must lie in (0, 1]")
    if not isinstance(cfg.smoothing_alpha, (int, float)) or cfg.smoothing_alpha < 0:
        raise InvalidConfig("smoothing_alpha", "must be nonnegative")
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or not (0 <= cfg.seed < 2**64):
        raise InvalidConfig("seed", "must be a 64-bit unsigned integer")
    if not isinstance(cfg.agent_profile, str) or not cfg.agent_profile:
        raise InvalidConfig("agent_profile", "must be a nonempty string")
    return cfg


@dataclass
class EvaluationReport:
    hypothesis_id: int
    sections: dict[str, str]  # insertion order == document order
    raw_text: str
    source_agent: SourceAgent

    def __post_init__(self):
        if not self.raw_text:
            raise ValueError("raw_text must be nonempty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "hypothesis_id": self.hypothesis_id,
            "sections": dict(self.sections),
            "raw_text": self.raw_text,
            "source_agent": self.source_agent.value,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EvaluationReport":
        return cls(
            hypothesis_id=data["hypothesis_id"],
            sections=dict(data["sections"]),
            raw_text=data["raw_text"],
            source_agent=SourceAgent(data["source_agent"]),
        )


@dataclass
class Hypothesis:
    id: int
    kind: HypothesisKind
    name: str
    body: dict[str, str]
    report: Optional[EvaluationReport] = None

    def __post_init__(self):
        if not self.name:
            raise ValueError("hypothesis name must be nonempty")
        required = (
            ("reasoning",)
            if self.kind is HypothesisKind.ASSAY
            else ("hypothesis", "reasoning")
        )
        for key in required:
            if key not in self.body:
                raise ValueError(f"{self.kind.value} hypothesis missing body section {key!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "name": self.name,
            "body": dict(self.body),
            "report": self.report.to_dict() if self.report else None,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Hypothesis":
        report = data.get("report")
        return cls(
            id=data["id"],
            kind=HypothesisKind(data["kind"]),
            name=data["name"],
            body=dict(data["body"]),
            report=EvaluationReport.from_dict(report) if report else None,
        )


@dataclass(frozen=True)
class ComparisonRecord:
    pair: frozenset[int]
    winner_id: int
    loser_id: int
    presentation_order: tuple[int, int]
    judge_label: str
    verdict_digest: str

    def __post_init__(self):
        if self.winner_id == self.loser_id:
            raise ValueError("winner and loser must differ")
        if frozenset({self.winner_id, self.loser_id}) != self.pair:
            raise ValueError("winner/loser ids must equal the pair")

    def to_dict(self) -> dict[str, Any]:
        return {
            "pair": sorted(self.pair),
            "winner_id": self.winner_id,
            "loser_id": self.loser_id,
            "presentation_order": list(self.presentation_order),
            "judge_label": self.judge_label,
            "verdict_digest": self.verdict_digest,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ComparisonRecord":
        return cls(
            pair=frozenset(data["pair"]),
            winner_id=data["winner_id"],
            loser_id=data["loser_id"],
            presentation_order=tuple(data["presentation_order"]),
            judge_label=data["judge_label"],
            verdict_digest=data["verdict_digest"],
        )


@dataclass(frozen=True)
class TrajectoryFinding:
    trajectory_id: int
    item: str
    direction: Direction
    effect: Optional[float] = None
    significance: Optional[float] = None

    def __post_init__(self):
        if not self.item:
            raise ValueError("finding item must be nonempty")
        if self.significance is not None and not (0 <= self.significance <= 1):
            raise ValueError("significance must lie in [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "trajectory_id": self.trajectory_id,
            "item": self.item,
            "direction": self.direction.value,
            "effect": self.effect,
            "significance": self.significance,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrajectoryFinding":
        return cls(
            trajectory_id=data["trajectory_id"],
            item=data["item"],
            direction=Direction(data["direction"]),
            effect=data.get("effect"),
            significance=data.get("significance"),
        )


class StageTransitionError(RuntimeError):
    pass


@dataclass
class RunState:
    run_id: str
    config: RunConfig
    stage: Stage = Stage.QUERY_GEN
    iteration: int = 1
    artifact_index: dict[str, str] = field(default_factory=dict)  # "it<N>:<stage>" -> path
    checkpoint_digests: dict[str, str] = field(default_factory=dict)  # path -> sha256

    @staticmethod
    def artifact_key(iteration: int, stage: Stage) -> str:
        return f"it{iteration}:{stage.value}"

    def transition(self, new_stage: Stage) -> None:
        """Advance to the next stage; only forward moves (or the iteration loop
        from insight synthesis back to candidate query generation) are legal."""
        if self.stage is Stage.COMPLETE:
            raise StageTransitionError("run is complete and read-only")
        if self.stage is Stage.INSIGHT_SYNTHESIS and new_stage is ITERATION_RESTART:
            self.iteration += 1
            self.stage = new_stage
            return
        if stage_index(new_stage) <= stage_index(self.stage):
            raise StageTransitionError(
                f"illegal transition {self.stage.value} -> {new_stage.value}"
            )
        self.stage = new_stage

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "config": self.config.to_dict(),
            "stage": self.stage.value,
            "iteration": self.iteration,
            "artifact_index": dict(self.artifact_index),
            "checkpoint_digests": dict(self.checkpoint_digests),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunState":
        return cls(
            run_id=data["run_id"],
            config=RunConfig.from_dict(data["config"]),
            stage=Stage(data["stage"]),
            iteration=data["iteration"],
            artifact_index=dict(data["artifact_index"]),
            checkpoint_digests=dict(data["checkpoint_digests"]),
        )
