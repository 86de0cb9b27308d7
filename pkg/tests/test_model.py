import pytest
from hypothesis import given, strategies as st

from robin.model import (
    ComparisonRecord,
    Direction,
    EvaluationReport,
    HUMAN_GATES,
    Hypothesis,
    HypothesisKind,
    InvalidConfig,
    ITERATION_RESTART,
    RunConfig,
    RunState,
    SourceAgent,
    Stage,
    STAGE_ORDER,
    StageTransitionError,
    TrajectoryFinding,
    stage_index,
    validate_config,
)


class TestConfig:
    def test_defaults(self):
        cfg = validate_config({"disease_name": "x"})
        assert cfg.num_queries == 10
        assert cfg.num_assays == 10
        assert cfg.num_candidates == 30
        assert cfg.round_robin_limit == 25
        assert cfg.comparison_cap == 300
        assert cfg.trajectory_count == 10
        assert cfg.consensus_threshold == 0.5
        assert cfg.smoothing_alpha == 0.5
        assert cfg.seed == 0

    def test_roundtrip(self):
        cfg = RunConfig(disease_name="x", seed=7)
        assert RunConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize(
        "overrides, field",
        [
            ({"disease_name": ""}, "disease_name"),
            ({"disease_name": "  "}, "disease_name"),
            ({"num_queries": 0}, "num_queries"),
            ({"num_assays": -3}, "num_assays"),
            ({"num_candidates": True}, "num_candidates"),
            ({"trajectory_count": 0}, "trajectory_count"),
            ({"round_robin_limit": 1}, "round_robin_limit"),
            ({"comparison_cap": 0}, "comparison_cap"),
            ({"consensus_threshold": 0}, "consensus_threshold"),
            ({"consensus_threshold": 1.2}, "consensus_threshold"),
            ({"smoothing_alpha": -0.1}, "smoothing_alpha"),
            ({"seed": -1}, "seed"),
            ({"seed": 2**64}, "seed"),
            ({"agent_profile": ""}, "agent_profile"),
        ],
    )
    def test_rejects_invalid(self, overrides, field):
        raw = {"disease_name": "x", **overrides}
        with pytest.raises(InvalidConfig) as exc:
            validate_config(raw)
        assert exc.value.field == field

    def test_threshold_one_is_legal(self):
        validate_config({"disease_name": "x", "consensus_threshold": 1.0})

    @given(st.integers(min_value=0, max_value=2**64 - 1))
    def test_any_u64_seed_accepted(self, seed):
        validate_config({"disease_name": "x", "seed": seed})


class TestHypothesis:
    def test_assay_requires_reasoning(self):
        with pytest.raises(ValueError):
            Hypothesis(id=0, kind=HypothesisKind.ASSAY, name="a", body={})
        Hypothesis(id=0, kind=HypothesisKind.ASSAY, name="a", body={"reasoning": "r"})

    def test_candidate_requires_hypothesis_and_reasoning(self):
        with pytest.raises(ValueError):
            Hypothesis(
                id=0, kind=HypothesisKind.CANDIDATE, name="c", body={"reasoning": "r"}
            )

    def test_roundtrip_with_report(self):
        h = Hypothesis(
            id=3,
            kind=HypothesisKind.CANDIDATE,
            name="c",
            body={"hypothesis": "h", "reasoning": "r"},
            report=EvaluationReport(
                hypothesis_id=3,
                sections={"Overview": "o"},
                raw_text="Overview: o",
                source_agent=SourceAgent.DEEP,
            ),
        )
        again = Hypothesis.from_dict(h.to_dict())
        assert again.name == h.name
        assert again.report.sections == h.report.sections

    def test_report_requires_raw_text(self):
        with pytest.raises(ValueError):
            EvaluationReport(0, {}, "", SourceAgent.CONCISE)


class TestComparisonRecord:
    def test_winner_loser_must_match_pair(self):
        with pytest.raises(ValueError):
            ComparisonRecord(
                pair=frozenset({0, 1}),
                winner_id=0,
                loser_id=2,
                presentation_order=(0, 1),
                judge_label="t",
                verdict_digest="d",
            )
        with pytest.raises(ValueError):
            ComparisonRecord(
                pair=frozenset({0, 1}),
                winner_id=1,
                loser_id=1,
                presentation_order=(0, 1),
                judge_label="t",
                verdict_digest="d",
            )

    def test_roundtrip(self):
        rec = ComparisonRecord(
            pair=frozenset({4, 9}),
            winner_id=9,
            loser_id=4,
            presentation_order=(9, 4),
            judge_label="candidate",
            verdict_digest="abc",
        )
        assert ComparisonRecord.from_dict(rec.to_dict()) == rec


class TestTrajectoryFinding:
    def test_significance_bounds(self):
        TrajectoryFinding(0, "GENE", Direction.UP, significance=0.0)
        TrajectoryFinding(0, "GENE", Direction.UP, significance=1.0)
        with pytest.raises(ValueError):
            TrajectoryFinding(0, "GENE", Direction.UP, significance=1.5)
        with pytest.raises(ValueError):
            TrajectoryFinding(0, "", Direction.UP)

    def test_roundtrip(self):
        f = TrajectoryFinding(2, "ABCA1", Direction.UP, effect=1.585,
                              significance=2.13e-83)
        assert TrajectoryFinding.from_dict(f.to_dict()) == f


class TestStageMachine:
    def _state(self, stage=Stage.QUERY_GEN):
        return RunState(run_id="r", config=RunConfig(disease_name="x"), stage=stage)

    def test_stage_order_has_17_stages(self):
        assert len(STAGE_ORDER) == 17
        assert STAGE_ORDER[0] is Stage.QUERY_GEN
        assert STAGE_ORDER[-1] is Stage.COMPLETE
        assert HUMAN_GATES == {Stage.AWAIT_SELECTION, Stage.AWAIT_DATA}

    def test_forward_transitions_legal(self):
        state = self._state()
        for nxt in STAGE_ORDER[1:]:
            state.transition(nxt)
            assert state.stage is nxt

    def test_backward_transition_illegal(self):
        state = self._state(Stage.ASSAY_HYP_GEN)
        with pytest.raises(StageTransitionError):
            state.transition(Stage.QUERY_GEN)
        with pytest.raises(StageTransitionError):
            state.transition(Stage.ASSAY_HYP_GEN)

    def test_insight_loop_increments_iteration(self):
        state = self._state(Stage.INSIGHT_SYNTHESIS)
        assert state.iteration == 1
        state.transition(ITERATION_RESTART)
        assert state.stage is Stage.CANDIDATE_QUERY_GEN
        assert state.iteration == 2

    def test_complete_is_terminal(self):
        state = self._state(Stage.COMPLETE)
        for nxt in STAGE_ORDER:
            with pytest.raises(StageTransitionError):
                state.transition(nxt)

    def test_loop_only_from_insight(self):
        state = self._state(Stage.CONSENSUS)
        with pytest.raises(StageTransitionError):
            state.transition(ITERATION_RESTART)

    def test_artifact_key(self):
        assert RunState.artifact_key(2, Stage.CANDIDATE_HYP_GEN) == "it2:candidate_hyp_gen"

    def test_state_roundtrip(self):
        state = self._state(Stage.GOAL_SYNTHESIS)
        state.iteration = 2
        state.artifact_index["it1:query_gen"] = "stages/01_query_gen.json"
        state.checkpoint_digests["stages/01_query_gen.json"] = "f" * 64
        again = RunState.from_dict(state.to_dict())
        assert again == state

    def test_stage_index_monotone(self):
        indices = [stage_index(s) for s in STAGE_ORDER]
        assert indices == sorted(indices)
