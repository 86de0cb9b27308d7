"""Staged pipeline driver with durable, resumable run directories.

Every stage executes exactly once per advance(): render the stage's
template, call the gateway (fanning out per-item work), parse, then
commit the stage artifact with write-temp-then-rename. State is only
updated after the artifact is durable, so a crash at any point resumes
cleanly at the previous stage with no torn or duplicate artifacts.
Human gates (candidate selection, dataset attachment, run completion)
are explicit states exited only through their dedicated operations.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from filelock import FileLock, Timeout

from . import consensus as consensus_mod
from .consensus import DatasetRef, GatewayAnalystRunner, TrajectoryRunner
from .gateway import AgentRequest, Gateway, Role
from .model import (
    ComparisonRecord,
    EvaluationReport,
    HUMAN_GATES,
    Hypothesis,
    HypothesisKind,
    ITERATION_RESTART,
    RunConfig,
    RunState,
    SourceAgent,
    Stage,
    validate_config,
)
from .parsers import (
    CountMismatch,
    parse_candidate_blocks,
    parse_query_list,
    parse_report_sections,
    parse_strategy_array,
)
from .prompts import PromptTemplate, TemplateName, load_all_templates, render
from .tournament import adjudicate, fit_btl, rank, schedule

logger = logging.getLogger(__name__)

ASSAY_REPORT_TITLES = [
    "Assay Overview",
    "Biomedical Evidence",
    "Previous Use",
    "Overall Evaluation",
]
CANDIDATE_REPORT_TITLES = [
    "Overview of Therapeutic Candidate",
    "Therapeutic History",
    "Mechanism of Action",
    "Expected Effect",
    "Overall Evaluation",
]


class OrchestratorError(RuntimeError):
    pass


class HumanGateOpen(OrchestratorError):
    pass


class WrongStage(OrchestratorError):
    pass


class StageInputMissing(OrchestratorError):
    pass


class InvalidSelection(OrchestratorError):
    pass


class DatasetMissing(OrchestratorError):
    pass


class MetadataInvalid(OrchestratorError):
    pass


class DigestMismatch(OrchestratorError):
    def __init__(self, path: str):
        self.path = path
        super().__init__(f"artifact digest mismatch: {path}")


class ManifestCorrupt(OrchestratorError):
    pass


class RunLocked(OrchestratorError):
    pass


class RunnerUnavailable(OrchestratorError):
    pass


@dataclass(frozen=True)
class SelectionRecord:
    iteration: int
    selected_ids: tuple[int, ...]
    selector: str
    rationale: str = ""

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "selected_ids": list(self.selected_ids),
            "selector": self.selector,
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SelectionRecord":
        return cls(
            iteration=data["iteration"],
            selected_ids=tuple(data["selected_ids"]),
            selector=data["selector"],
            rationale=data.get("rationale", ""),
        )


def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def counter_clock(start: float = 0.0) -> Callable[[], float]:
    """Deterministic logical clock for reproducible mock runs."""
    state = {"t": start}

    def tick() -> float:
        state["t"] += 1.0
        return state["t"]

    return tick


def derive_seed(base_seed: int, iteration: int, label: str) -> int:
    h = hashlib.sha256(f"{base_seed}:{iteration}:{label}".encode()).digest()
    return int.from_bytes(h[:8], "big")


def artifact_tree_digest(run_dir: Path) -> str:
    """Digest over the deterministic artifact files of a run directory."""
    parts = []
    patterns = ["stages/*.json", "comparisons.jsonl", "ranking.json", "consensus.json",
                "trajectories/*.jsonl", "trajectories/*.meta.json"]
    for pattern in patterns:
        for path in sorted(run_dir.glob(pattern)):
            parts.append(f"{path.relative_to(run_dir)}:{file_digest(path)}")
    h = hashlib.sha256()
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


class Orchestrator:
    """Single-writer driver for one run directory."""

    def __init__(
        self,
        run_dir: Path,
        state: RunState,
        gateway: Optional[Gateway] = None,
        clock: Callable[[], float] = time.time,
        trajectory_runner: Optional[TrajectoryRunner] = None,
        fault_hook: Optional[Callable[[str], None]] = None,
    ):
        self.run_dir = Path(run_dir)
        self.state = state
        self.gateway = gateway
        self.clock = clock
        self.trajectory_runner = trajectory_runner
        self.fault_hook = fault_hook
        self.templates = load_all_templates()
        self._lock = FileLock(str(self.run_dir / "lock"))
        try:
            self._lock.acquire(timeout=0)
        except Timeout:
            raise RunLocked(f"run directory {run_dir} is held by another orchestrator") from None

    def close(self) -> None:
        self._lock.release()

    def __enter__(self) -> "Orchestrator":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # --- construction -----------------------------------------------------

    @classmethod
    def create(
        cls,
        root: Path,
        config: RunConfig,
        run_id: Optional[str] = None,
        **kwargs,
    ) -> "Orchestrator":
        config = validate_config(config)
        run_id = run_id or uuid.uuid4().hex[:12]
        run_dir = Path(root) / run_id
        run_dir.mkdir(parents=True, exist_ok=False)
        (run_dir / "stages").mkdir()
        state = RunState(run_id=run_id, config=config)
        orch = cls(run_dir, state, **kwargs)
        manifest = {
            "run_id": run_id,
            "created_at": orch.clock(),
            "config": config.to_dict(),
            "template_digests": {
                name.value: t.digest() for name, t in orch.templates.items()
            },
        }
        orch._atomic_write(run_dir / "manifest.json", manifest)
        orch._persist_state()
        return orch

    #: files regenerated from stage artifacts; healed, not trusted, on resume
    DERIVED_VIEWS = frozenset({"comparisons.jsonl", "ranking.json", "consensus.json"})

    @classmethod
    def resume(cls, run_dir: Path, **kwargs) -> "Orchestrator":
        """Reconstruct the run at its last durable stage, verifying every
        checkpoint digest. Stage artifacts must match exactly; derived
        views (which are rewritten, not appended) are rebuilt when a crash
        landed between a view rewrite and the state commit."""
        run_dir = Path(run_dir)
        manifest_path = run_dir / "manifest.json"
        state_path = run_dir / "state.json"
        try:
            json.loads(manifest_path.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestCorrupt(f"cannot read manifest: {exc}") from None
        try:
            state = RunState.from_dict(json.loads(state_path.read_text("utf-8")))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ManifestCorrupt(f"cannot read state: {exc}") from None
        stale_views = []
        for rel_path, digest in state.checkpoint_digests.items():
            path = run_dir / rel_path
            ok = path.exists() and file_digest(path) == digest
            if not ok:
                if rel_path in cls.DERIVED_VIEWS:
                    stale_views.append(rel_path)
                else:
                    raise DigestMismatch(rel_path)
        # leftovers from an interrupted write are ignorable by construction
        for tmp in run_dir.rglob("*.tmp"):
            tmp.unlink()
        orch = cls(run_dir, state, **kwargs)
        if stale_views:
            orch._rebuild_views(stale_views)
            orch._persist_state()
        return orch

    def _rebuild_views(self, names: list[str]) -> None:
        def latest_payload(stage: Stage) -> tuple[int, dict]:
            iteration = max(
                it for it in range(1, self.state.iteration + 1)
                if self._has_artifact(stage, it)
            )
            return iteration, self._artifact_payload(stage, iteration)

        for name in names:
            if name == "comparisons.jsonl":
                self._materialize_comparisons()
            elif name == "ranking.json":
                iteration, payload = latest_payload(Stage.CANDIDATE_TOURNAMENT)
                self._atomic_write(
                    self.run_dir / "ranking.json",
                    {
                        "iteration": iteration,
                        "ranking": payload["ranking"],
                        "fit": payload["fit"],
                        "names": payload["names"],
                    },
                )
                self._track("ranking.json")
            elif name == "consensus.json":
                _, payload = latest_payload(Stage.CONSENSUS)
                self._atomic_write(self.run_dir / "consensus.json", payload)
                self._track("consensus.json")

    # --- persistence ------------------------------------------------------

    def _fault(self, event: str) -> None:
        if self.fault_hook is not None:
            self.fault_hook(event)

    def _atomic_write(self, path: Path, doc: dict | list) -> None:
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self._fault(f"pre-commit:{path.name}")
        tmp.replace(path)
        self._fault(f"post-commit:{path.name}")

    def _atomic_write_lines(self, path: Path, lines: list[str]) -> None:
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        self._fault(f"pre-commit:{path.name}")
        tmp.replace(path)
        self._fault(f"post-commit:{path.name}")

    def _persist_state(self) -> None:
        self._atomic_write(self.run_dir / "state.json", self.state.to_dict())

    def _track(self, rel_path: str) -> None:
        self.state.checkpoint_digests[rel_path] = file_digest(self.run_dir / rel_path)

    def _commit_artifact(
        self,
        stage: Stage,
        payload: dict,
        input_digests: Optional[list[str]] = None,
        template: Optional[PromptTemplate] = None,
    ) -> str:
        seq = len(self.state.artifact_index) + 1
        rel_path = f"stages/{seq:02d}_{stage.value}.json"
        artifact = {
            "stage": stage.value,
            "iteration": self.state.iteration,
            "payload": payload,
            "produced_at": self.clock(),
            "input_digests": input_digests or [],
            "template_digest": template.digest() if template else None,
        }
        self._atomic_write(self.run_dir / rel_path, artifact)
        key = RunState.artifact_key(self.state.iteration, stage)
        self.state.artifact_index[key] = rel_path
        self._track(rel_path)
        return rel_path

    def _artifact_payload(self, stage: Stage, iteration: Optional[int] = None) -> dict:
        iteration = iteration if iteration is not None else self.state.iteration
        key = RunState.artifact_key(iteration, stage)
        rel_path = self.state.artifact_index.get(key)
        if rel_path is None:
            raise StageInputMissing(f"no artifact for {key}")
        doc = json.loads((self.run_dir / rel_path).read_text("utf-8"))
        return doc["payload"]

    def _artifact_digest(self, stage: Stage, iteration: Optional[int] = None) -> str:
        iteration = iteration if iteration is not None else self.state.iteration
        rel_path = self.state.artifact_index[RunState.artifact_key(iteration, stage)]
        return self.state.checkpoint_digests[rel_path]

    def _has_artifact(self, stage: Stage, iteration: Optional[int] = None) -> bool:
        iteration = iteration if iteration is not None else self.state.iteration
        return RunState.artifact_key(iteration, stage) in self.state.artifact_index

    def _materialize_comparisons(self) -> None:
        """Rebuild comparisons.jsonl from all tournament artifacts (derived view)."""
        lines = []
        for key in sorted(self.state.artifact_index):
            if key.split(":", 1)[1] in (
                Stage.ASSAY_TOURNAMENT.value,
                Stage.CANDIDATE_TOURNAMENT.value,
            ):
                rel = self.state.artifact_index[key]
                payload = json.loads((self.run_dir / rel).read_text("utf-8"))["payload"]
                for record in payload["records"]:
                    lines.append(json.dumps(record, sort_keys=True))
        self._atomic_write_lines(self.run_dir / "comparisons.jsonl", lines)
        self._track("comparisons.jsonl")

    # --- gateway helpers ----------------------------------------------------

    def _require_gateway(self) -> Gateway:
        if self.gateway is None:
            raise StageInputMissing("no gateway configured for this orchestrator")
        return self.gateway

    def _call(
        self, role: Role, template_name: TemplateName, vars: dict, tag: str
    ) -> str:
        gateway = self._require_gateway()
        rendered = render(self.templates[template_name], vars)
        response = gateway.complete(
            AgentRequest(
                role=role, system=rendered.system_text, user=rendered.user_text, tag=tag
            )
        )
        return response.text

    def _tag(self, label: str) -> str:
        return f"it{self.state.iteration}:{label}"

    def _base_vars(self) -> dict:
        cfg = self.state.config
        return {
            "disease_name": cfg.disease_name,
            "num_queries": cfg.num_queries,
            "num_assays": cfg.num_assays,
            "num_candidates": cfg.num_candidates,
        }

    # --- public operations --------------------------------------------------

    def advance(self) -> RunState:
        """Execute exactly one pipeline stage and commit its artifact."""
        stage = self.state.stage
        if stage in HUMAN_GATES:
            raise HumanGateOpen(f"stage {stage.value} awaits a human action")
        if stage is Stage.COMPLETE:
            raise WrongStage("run is complete")
        handler = {
            Stage.QUERY_GEN: self._stage_query_gen,
            Stage.ASSAY_LIT_REVIEW: self._stage_assay_lit_review,
            Stage.ASSAY_HYP_GEN: self._stage_assay_hyp_gen,
            Stage.ASSAY_REPORTS: self._stage_assay_reports,
            Stage.ASSAY_TOURNAMENT: self._stage_assay_tournament,
            Stage.GOAL_SYNTHESIS: self._stage_goal_synthesis,
            Stage.CANDIDATE_QUERY_GEN: self._stage_candidate_query_gen,
            Stage.CANDIDATE_LIT_REVIEW: self._stage_candidate_lit_review,
            Stage.CANDIDATE_HYP_GEN: self._stage_candidate_hyp_gen,
            Stage.CANDIDATE_REPORTS: self._stage_candidate_reports,
            Stage.CANDIDATE_TOURNAMENT: self._stage_candidate_tournament,
            Stage.TRAJECTORY_ANALYSIS: self._stage_trajectory_analysis,
            Stage.CONSENSUS: self._stage_consensus,
            Stage.INSIGHT_SYNTHESIS: self._stage_insight,
        }[stage]
        handler()
        self._persist_state()
        return self.state

    # --- stage handlers -----------------------------------------------------

    def _stage_query_gen(self) -> None:
        cfg = self.state.config
        text = self._call(
            Role.SYNTHESIZER, TemplateName.ASSAY_QUERY_GEN, self._base_vars(),
            self._tag("query-gen"),
        )
        outcome = parse_query_list(text, cfg.num_queries, strict=False)
        self._commit_artifact(
            Stage.QUERY_GEN,
            {"queries": outcome.value},
            template=self.templates[TemplateName.ASSAY_QUERY_GEN],
        )
        self.state.transition(Stage.ASSAY_LIT_REVIEW)

    def _lit_review(self, queries: list[str], tag_prefix: str) -> list[dict]:
        gateway = self._require_gateway()

        def one(idx_query: tuple[int, str]) -> dict:
            idx, query = idx_query
            response = gateway.complete(
                AgentRequest(
                    role=Role.CONCISE_LITERATURE,
                    system="",
                    user=query,
                    tag=self._tag(f"{tag_prefix}-{idx}"),
                )
            )
            return {"query": query, "report": response.text}

        with ThreadPoolExecutor(max_workers=gateway.policy.concurrency_limit) as pool:
            return list(pool.map(one, enumerate(queries)))

    def _stage_assay_lit_review(self) -> None:
        queries = self._artifact_payload(Stage.QUERY_GEN, iteration=1)["queries"]
        reports = self._lit_review(queries, "assay-lit")
        self._commit_artifact(
            Stage.ASSAY_LIT_REVIEW,
            {"reports": reports},
            input_digests=[self._artifact_digest(Stage.QUERY_GEN, iteration=1)],
        )
        self.state.transition(Stage.ASSAY_HYP_GEN)

    def _stage_assay_hyp_gen(self) -> None:
        cfg = self.state.config
        reports = self._artifact_payload(Stage.ASSAY_LIT_REVIEW, iteration=1)["reports"]
        background = "\n\n".join(r["report"] for r in reports)
        vars = {**self._base_vars(), "assay_lit_review_output": background}
        text = self._call(
            Role.SYNTHESIZER, TemplateName.ASSAY_HYP_GEN, vars, self._tag("assay-hyp-gen")
        )
        outcome = parse_strategy_array(text, cfg.num_assays)
        hypotheses = [
            Hypothesis(
                id=i,
                kind=HypothesisKind.ASSAY,
                name=name,
                body={"reasoning": reasoning},
            )
            for i, (name, reasoning) in enumerate(outcome.value)
        ]
        self._commit_artifact(
            Stage.ASSAY_HYP_GEN,
            {"hypotheses": [h.to_dict() for h in hypotheses]},
            input_digests=[self._artifact_digest(Stage.ASSAY_LIT_REVIEW, iteration=1)],
            template=self.templates[TemplateName.ASSAY_HYP_GEN],
        )
        self.state.transition(Stage.ASSAY_REPORTS)

    def _stage_assay_reports(self) -> None:
        payload = self._artifact_payload(Stage.ASSAY_HYP_GEN, iteration=1)
        hypotheses = [Hypothesis.from_dict(h) for h in payload["hypotheses"]]
        gateway = self._require_gateway()
        template = self.templates[TemplateName.ASSAY_EVAL]

        def one(h: Hypothesis) -> dict:
            vars = {
                "disease_name": self.state.config.disease_name,
                "strategy": f"Strategy name: {h.name}\nReasoning: {h.body['reasoning']}",
            }
            rendered = render(template, vars)
            response = gateway.complete(
                AgentRequest(
                    role=Role.CONCISE_LITERATURE,
                    system=rendered.system_text,
                    user=rendered.user_text,
                    tag=self._tag(f"assay-report-{h.id}"),
                )
            )
            sections = parse_report_sections(response.text, ASSAY_REPORT_TITLES)
            return EvaluationReport(
                hypothesis_id=h.id,
                sections=sections.value,
                raw_text=response.text,
                source_agent=SourceAgent.CONCISE,
            ).to_dict()

        with ThreadPoolExecutor(max_workers=gateway.policy.concurrency_limit) as pool:
            reports = list(pool.map(one, hypotheses))
        self._commit_artifact(
            Stage.ASSAY_REPORTS,
            {"reports": reports},
            input_digests=[self._artifact_digest(Stage.ASSAY_HYP_GEN, iteration=1)],
            template=template,
        )
        self.state.transition(Stage.ASSAY_TOURNAMENT)

    def _items_with_reports(
        self, hyp_stage: Stage, report_stage: Stage, iteration: int
    ) -> dict[int, Hypothesis]:
        hypotheses = {
            h["id"]: Hypothesis.from_dict(h)
            for h in self._artifact_payload(hyp_stage, iteration)["hypotheses"]
        }
        for rep in self._artifact_payload(report_stage, iteration)["reports"]:
            report = EvaluationReport.from_dict(rep)
            hypotheses[report.hypothesis_id].report = report
        return hypotheses

    def _run_tournament(
        self,
        stage: Stage,
        items: dict[int, Hypothesis],
        judge_template_name: TemplateName,
        judge_label: str,
        input_digests: list[str],
    ) -> None:
        cfg = self.state.config
        comparison_schedule = schedule(
            n=len(items),
            round_robin_limit=cfg.round_robin_limit,
            cap=cfg.comparison_cap,
            seed=derive_seed(cfg.seed, self.state.iteration, stage.value),
        )
        records = adjudicate(
            comparison_schedule,
            items,
            self.templates[judge_template_name],
            self._require_gateway(),
            vars={"disease_name": cfg.disease_name},
            judge_label=judge_label,
        )
        fit = fit_btl(
            records,
            n_items=len(items),
            smoothing_alpha=cfg.smoothing_alpha,
            scheduled_pairs=[tuple(sorted(p)) for p in comparison_schedule.unordered()],
        )
        ranking = rank(fit, allow_unconverged=True)
        payload = {
            "mode": comparison_schedule.mode.value,
            "n_pairs": len(comparison_schedule.pairs),
            "records": [r.to_dict() for r in records],
            "fit": fit.to_dict(),
            "ranking": ranking.to_dict(),
            "winner_id": ranking.ids()[0],
            "names": {str(i): h.name for i, h in items.items()},
        }
        self._commit_artifact(
            stage, payload,
            input_digests=input_digests,
            template=self.templates[judge_template_name],
        )
        self._materialize_comparisons()
        if stage is Stage.CANDIDATE_TOURNAMENT:
            self._atomic_write(
                self.run_dir / "ranking.json",
                {
                    "iteration": self.state.iteration,
                    "ranking": ranking.to_dict(),
                    "fit": fit.to_dict(),
                    "names": payload["names"],
                },
            )
            self._track("ranking.json")

    def _stage_assay_tournament(self) -> None:
        items = self._items_with_reports(Stage.ASSAY_HYP_GEN, Stage.ASSAY_REPORTS, 1)
        self._run_tournament(
            Stage.ASSAY_TOURNAMENT,
            items,
            TemplateName.ASSAY_JUDGE,
            judge_label="assay",
            input_digests=[
                self._artifact_digest(Stage.ASSAY_HYP_GEN, 1),
                self._artifact_digest(Stage.ASSAY_REPORTS, 1),
            ],
        )
        self.state.transition(Stage.GOAL_SYNTHESIS)

    def _stage_goal_synthesis(self) -> None:
        tournament = self._artifact_payload(Stage.ASSAY_TOURNAMENT, 1)
        winner_name = tournament["names"][str(tournament["winner_id"])]
        vars = {
            "disease_name": self.state.config.disease_name,
            "assay_name": winner_name,
        }
        text = self._call(
            Role.SYNTHESIZER, TemplateName.GOAL_SYNTHESIS, vars, self._tag("goal")
        )
        self._commit_artifact(
            Stage.GOAL_SYNTHESIS,
            {"goal": text.strip(), "assay_name": winner_name},
            input_digests=[self._artifact_digest(Stage.ASSAY_TOURNAMENT, 1)],
            template=self.templates[TemplateName.GOAL_SYNTHESIS],
        )
        self.state.transition(Stage.CANDIDATE_QUERY_GEN)

    def _candidate_goal(self) -> str:
        goal = self._artifact_payload(Stage.GOAL_SYNTHESIS, 1)["goal"]
        if self.state.iteration > 1:
            insight = self._artifact_payload(
                Stage.INSIGHT_SYNTHESIS, self.state.iteration - 1
            )["insight"]
            goal = f"{goal}\n\nPrior iteration insight: {insight}"
        return goal

    def _stage_candidate_query_gen(self) -> None:
        cfg = self.state.config
        vars = {
            "disease_name": cfg.disease_name,
            "num_queries": cfg.num_queries,
            "candidate_generation_goal": self._candidate_goal(),
        }
        text = self._call(
            Role.SYNTHESIZER, TemplateName.CANDIDATE_QUERY_GEN, vars,
            self._tag("cand-query-gen"),
        )
        outcome = parse_query_list(text, 2 * cfg.num_queries, strict=False)
        self._commit_artifact(
            Stage.CANDIDATE_QUERY_GEN,
            {"queries": outcome.value},
            input_digests=[self._artifact_digest(Stage.GOAL_SYNTHESIS, 1)],
            template=self.templates[TemplateName.CANDIDATE_QUERY_GEN],
        )
        self.state.transition(Stage.CANDIDATE_LIT_REVIEW)

    def _stage_candidate_lit_review(self) -> None:
        queries = self._artifact_payload(Stage.CANDIDATE_QUERY_GEN)["queries"]
        reports = self._lit_review(queries, "cand-lit")
        self._commit_artifact(
            Stage.CANDIDATE_LIT_REVIEW,
            {"reports": reports},
            input_digests=[self._artifact_digest(Stage.CANDIDATE_QUERY_GEN)],
        )
        self.state.transition(Stage.CANDIDATE_HYP_GEN)

    def _stage_candidate_hyp_gen(self) -> None:
        cfg = self.state.config
        reports = self._artifact_payload(Stage.CANDIDATE_LIT_REVIEW)["reports"]
        background = "\n\n".join(r["report"] for r in reports)
        if self.state.iteration > 1:
            insight = self._artifact_payload(
                Stage.INSIGHT_SYNTHESIS, self.state.iteration - 1
            )["insight"]
            background = f"{background}\n\nPrior iteration insight: {insight}"
        vars = {**self._base_vars(), "therapeutic_candidate_review_output": background}
        tag = self._tag("cand-hyp-gen")
        text = self._call(Role.SYNTHESIZER, TemplateName.CANDIDATE_HYP_GEN, vars, tag)
        try:
            outcome = parse_candidate_blocks(text, cfg.num_candidates)
        except CountMismatch:
            # one retry, then accept the found count if at least half
            text = self._call(Role.SYNTHESIZER, TemplateName.CANDIDATE_HYP_GEN, vars, tag)
            try:
                outcome = parse_candidate_blocks(text, cfg.num_candidates)
            except CountMismatch as exc:
                if exc.found >= cfg.num_candidates / 2:
                    logger.warning(
                        "accepting %d of %d requested candidates", exc.found,
                        cfg.num_candidates,
                    )
                    outcome = parse_candidate_blocks(text, exc.found)
                else:
                    raise
        hypotheses = [
            Hypothesis(
                id=i,
                kind=HypothesisKind.CANDIDATE,
                name=candidate,
                body={"hypothesis": hypothesis, "reasoning": reasoning},
            )
            for i, (candidate, hypothesis, reasoning) in enumerate(outcome.value)
        ]
        self._commit_artifact(
            Stage.CANDIDATE_HYP_GEN,
            {"hypotheses": [h.to_dict() for h in hypotheses]},
            input_digests=[self._artifact_digest(Stage.CANDIDATE_LIT_REVIEW)],
            template=self.templates[TemplateName.CANDIDATE_HYP_GEN],
        )
        self.state.transition(Stage.CANDIDATE_REPORTS)

    def _stage_candidate_reports(self) -> None:
        payload = self._artifact_payload(Stage.CANDIDATE_HYP_GEN)
        hypotheses = [Hypothesis.from_dict(h) for h in payload["hypotheses"]]
        gateway = self._require_gateway()
        template = self.templates[TemplateName.CANDIDATE_EVAL]

        def one(h: Hypothesis) -> dict:
            vars = {
                "disease_name": self.state.config.disease_name,
                "candidate": (
                    f"Candidate: {h.name}\nHypothesis: {h.body['hypothesis']}\n"
                    f"Reasoning: {h.body['reasoning']}"
                ),
            }
            rendered = render(template, vars)
            response = gateway.complete(
                AgentRequest(
                    role=Role.DEEP_LITERATURE,
                    system=rendered.system_text,
                    user=rendered.user_text,
                    tag=self._tag(f"cand-report-{h.id}"),
                )
            )
            sections = parse_report_sections(response.text, CANDIDATE_REPORT_TITLES)
            return EvaluationReport(
                hypothesis_id=h.id,
                sections=sections.value,
                raw_text=response.text,
                source_agent=SourceAgent.DEEP,
            ).to_dict()

        with ThreadPoolExecutor(max_workers=gateway.policy.concurrency_limit) as pool:
            reports = list(pool.map(one, hypotheses))
        self._commit_artifact(
            Stage.CANDIDATE_REPORTS,
            {"reports": reports},
            input_digests=[self._artifact_digest(Stage.CANDIDATE_HYP_GEN)],
            template=template,
        )
        self.state.transition(Stage.CANDIDATE_TOURNAMENT)

    def _stage_candidate_tournament(self) -> None:
        items = self._items_with_reports(
            Stage.CANDIDATE_HYP_GEN, Stage.CANDIDATE_REPORTS, self.state.iteration
        )
        self._run_tournament(
            Stage.CANDIDATE_TOURNAMENT,
            items,
            TemplateName.CANDIDATE_JUDGE,
            judge_label="candidate",
            input_digests=[
                self._artifact_digest(Stage.CANDIDATE_HYP_GEN),
                self._artifact_digest(Stage.CANDIDATE_REPORTS),
            ],
        )
        self.state.transition(Stage.AWAIT_SELECTION)

    # --- human gates ----------------------------------------------------------

    def submit_selection(self, record: SelectionRecord) -> RunState:
        if self.state.stage is not Stage.AWAIT_SELECTION:
            raise WrongStage(f"cannot select at stage {self.state.stage.value}")
        if not record.selected_ids:
            raise InvalidSelection("selection must be nonempty")
        ranking = json.loads((self.run_dir / "ranking.json").read_text("utf-8"))
        ranked_ids = {e["hypothesis_id"] for e in ranking["ranking"]["entries"]}
        bad = set(record.selected_ids) - ranked_ids
        if bad:
            raise InvalidSelection(f"ids not in the candidate ranking: {sorted(bad)}")
        self._commit_artifact(Stage.AWAIT_SELECTION, {"selection": record.to_dict()})
        self.state.transition(Stage.AWAIT_DATA)
        self._persist_state()
        return self.state

    def attach_dataset(
        self, dataset: DatasetRef, analysis_prompt: str
    ) -> RunState:
        if self.state.stage is not Stage.AWAIT_DATA:
            raise WrongStage(f"cannot attach data at stage {self.state.stage.value}")
        archive = Path(dataset.archive_path)
        sidecar = Path(dataset.metadata_path)
        if not archive.exists():
            raise DatasetMissing(f"archive not found: {archive}")
        if not sidecar.exists():
            raise MetadataInvalid(f"metadata sidecar not found: {sidecar}")
        try:
            json.loads(sidecar.read_text("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise MetadataInvalid(f"metadata sidecar is not valid JSON: {exc}") from None
        self._commit_artifact(
            Stage.AWAIT_DATA,
            {
                "dataset": dataset.to_dict(),
                "archive_digest": file_digest(archive),
                "metadata_digest": file_digest(sidecar),
                "analysis_prompt": analysis_prompt,
            },
        )
        self.state.transition(Stage.TRAJECTORY_ANALYSIS)
        self._persist_state()
        return self.state

    def complete_run(self) -> RunState:
        """Freeze the run; only legal once the insight artifact exists."""
        if self.state.stage is not Stage.INSIGHT_SYNTHESIS or not self._has_artifact(
            Stage.INSIGHT_SYNTHESIS
        ):
            raise WrongStage("run can complete only after insight synthesis")
        self.state.transition(Stage.COMPLETE)
        self._persist_state()
        return self.state

    # --- analysis stages --------------------------------------------------------

    def _resolve_runner(self) -> TrajectoryRunner:
        if self.trajectory_runner is not None:
            return self.trajectory_runner
        if self.gateway is not None:
            return GatewayAnalystRunner(self.gateway)
        raise RunnerUnavailable("no trajectory runner registered")

    def _stage_trajectory_analysis(self) -> None:
        cfg = self.state.config
        gate = self._artifact_payload(Stage.AWAIT_DATA)
        dataset = DatasetRef.from_dict(gate["dataset"])
        outcomes = consensus_mod.run_trajectories(
            dataset,
            gate["analysis_prompt"],
            self._resolve_runner(),
            n=cfg.trajectory_count,
            seed=derive_seed(cfg.seed, self.state.iteration, "trajectories"),
            persist_dir=self.run_dir / "trajectories",
        )
        for outcome in outcomes:
            self._track(f"trajectories/{outcome.trajectory_id}.jsonl")
            self._track(f"trajectories/{outcome.trajectory_id}.meta.json")
        self._commit_artifact(
            Stage.TRAJECTORY_ANALYSIS,
            {
                "outcomes": [
                    {
                        "trajectory_id": o.trajectory_id,
                        "status": o.status,
                        "notes": o.notes,
                        "n_findings": len(o.findings),
                    }
                    for o in outcomes
                ]
            },
            input_digests=[self._artifact_digest(Stage.AWAIT_DATA)],
        )
        self.state.transition(Stage.CONSENSUS)

    def _stage_consensus(self) -> None:
        cfg = self.state.config
        meta = self._artifact_payload(Stage.TRAJECTORY_ANALYSIS)
        outcomes = [
            consensus_mod.load_outcome(self.run_dir / "trajectories", o["trajectory_id"])
            for o in meta["outcomes"]
        ]
        summary = consensus_mod.aggregate(outcomes, threshold=cfg.consensus_threshold)
        self._commit_artifact(
            Stage.CONSENSUS,
            summary.to_dict(),
            input_digests=[self._artifact_digest(Stage.TRAJECTORY_ANALYSIS)],
        )
        self._atomic_write(self.run_dir / "consensus.json", summary.to_dict())
        self._track("consensus.json")
        self.state.transition(Stage.INSIGHT_SYNTHESIS)

    def _stage_insight(self) -> None:
        if self._has_artifact(Stage.INSIGHT_SYNTHESIS):
            # insight done; advancing again opens the next iteration
            self.state.transition(ITERATION_RESTART)
            return
        self.synthesize_insight()

    def synthesize_insight(self) -> dict:
        """Distill the consensus summary into an insight for the next cycle."""
        summary = self._artifact_payload(Stage.CONSENSUS)
        goal = self._artifact_payload(Stage.GOAL_SYNTHESIS, 1)["goal"]
        user = (
            "Here is the consensus summary of the independent analysis "
            "trajectories over the latest experimental dataset:\n"
            f"{json.dumps(summary, sort_keys=True)}\n\n"
            f"Research goal: {goal}\n\n"
            "Distill actionable scientific insights from these results and "
            "propose targeted follow-up assays to explore or confirm "
            "significant or unexpected findings."
        )
        gateway = self._require_gateway()
        response = gateway.complete(
            AgentRequest(
                role=Role.SYNTHESIZER, system="", user=user, tag=self._tag("insight")
            )
        )
        payload = {"insight": response.text}
        self._commit_artifact(
            Stage.INSIGHT_SYNTHESIS,
            payload,
            input_digests=[self._artifact_digest(Stage.CONSENSUS)],
        )
        self._persist_state()
        return payload

    # --- convenience -----------------------------------------------------------

    def advance_until(self, target: Stage, max_steps: int = 64) -> RunState:
        """Loop advance() toward a target stage; human gates always stop the loop."""
        for _ in range(max_steps):
            if self.state.stage is target or self.state.stage in HUMAN_GATES:
                break
            self.advance()
        return self.state
