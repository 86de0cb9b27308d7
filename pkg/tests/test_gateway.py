import json
import random
import threading

import pytest

from robin.gateway import (
    AgentRequest,
    BackendFailure,
    ConfigMissing,
    Exhausted,
    Gateway,
    RetryPolicy,
    Role,
    ScriptParse,
    ScriptedBackend,
    UnmatchedRequest,
    gateway_from_profile,
    load_mock_script,
    request_digest,
)


def req(role=Role.SYNTHESIZER, system="s", user="u", tag="t") -> AgentRequest:
    return AgentRequest(role=role, system=system, user=user, tag=tag)


class TestRequest:
    def test_requires_prompt_text(self):
        with pytest.raises(ValueError):
            AgentRequest(role=Role.JUDGE, system="", user="")
        AgentRequest(role=Role.JUDGE, system="", user="u")  # user alone suffices

    def test_digest_depends_on_role_and_text(self):
        assert request_digest(req()) == request_digest(req())
        assert request_digest(req()) != request_digest(req(role=Role.JUDGE))
        assert request_digest(req()) != request_digest(req(user="other"))
        # tag is routing metadata, not request identity
        assert request_digest(req(tag="a")) == request_digest(req(tag="b"))


class TestRetryPolicy:
    def test_validation(self):
        with pytest.raises(ValueError):
            RetryPolicy(max_attempts=0)
        with pytest.raises(ValueError):
            RetryPolicy(concurrency_limit=0)

    def test_backoff_grows(self):
        policy = RetryPolicy(backoff_base=0.5, backoff_factor=2.0, jitter_fraction=0.0)
        rng = random.Random(0)
        delays = [policy.delay(a, rng) for a in (2, 3, 4)]
        assert delays == [0.5, 1.0, 2.0]

    def test_jitter_bounded(self):
        policy = RetryPolicy(backoff_base=1.0, backoff_factor=1.0, jitter_fraction=0.1)
        rng = random.Random(1)
        for attempt in (2, 3, 4):
            for _ in range(100):
                assert 0.9 <= policy.delay(attempt, rng) <= 1.1


class TestScriptedBackend:
    def test_tag_matching_in_order(self):
        backend = ScriptedBackend()
        backend.add(Role.JUDGE, ["one", "two"], tag="x")
        assert backend.invoke(req(Role.JUDGE, tag="x"), 1.0) == "one"
        assert backend.invoke(req(Role.JUDGE, tag="x"), 1.0) == "two"
        with pytest.raises(UnmatchedRequest):
            backend.invoke(req(Role.JUDGE, tag="x"), 1.0)

    def test_digest_prefix_matching(self):
        backend = ScriptedBackend()
        digest = request_digest(req())
        backend.add(Role.SYNTHESIZER, ["hit"], digest_prefix=digest[:8])
        assert backend.invoke(req(), 1.0) == "hit"

    def test_scripted_failure(self):
        backend = ScriptedBackend()
        backend.add(Role.JUDGE, [{"fail": "boom"}, {"text": "ok"}], tag="x")
        with pytest.raises(BackendFailure):
            backend.invoke(req(Role.JUDGE, tag="x"), 1.0)
        assert backend.invoke(req(Role.JUDGE, tag="x"), 1.0) == "ok"

    def test_role_mismatch_unmatched(self):
        backend = ScriptedBackend()
        backend.add(Role.JUDGE, ["one"], tag="x")
        with pytest.raises(UnmatchedRequest):
            backend.invoke(req(Role.SYNTHESIZER, tag="x"), 1.0)


class TestMockScriptFile:
    def test_load_and_serve(self, tmp_path):
        script = tmp_path / "script.jsonl"
        script.write_text(
            json.dumps({"role": "judge", "tag": "p", "responses": ["a", {"text": "b"}]})
            + "\n\n"
            + json.dumps({"role": "synthesizer", "digest_prefix": "00", "responses": ["c"]})
            + "\n"
        )
        backend = load_mock_script(script)
        assert backend.invoke(req(Role.JUDGE, tag="p"), 1.0) == "a"
        assert backend.invoke(req(Role.JUDGE, tag="p"), 1.0) == "b"

    @pytest.mark.parametrize(
        "line",
        [
            "not json",
            '{"role": "judge", "responses": ["a"]}',  # no tag/prefix
            '{"role": "nope", "tag": "t", "responses": ["a"]}',  # bad role
            '{"role": "judge", "tag": "t", "responses": "a"}',  # responses not a list
            '{"tag": "t", "responses": ["a"]}',  # missing role
        ],
    )
    def test_parse_errors(self, tmp_path, line):
        script = tmp_path / "bad.jsonl"
        script.write_text(line + "\n")
        with pytest.raises(ScriptParse):
            load_mock_script(script)


class TestGateway:
    def _gateway(self, backend, max_attempts=3, **kwargs):
        return Gateway(
            {Role.JUDGE: backend},
            policy=RetryPolicy(max_attempts=max_attempts),
            sleep=lambda _s: None,
            **kwargs,
        )

    def test_success_first_attempt(self):
        backend = ScriptedBackend()
        backend.add(Role.JUDGE, ["ok"], tag="t")
        response = self._gateway(backend).complete(req(Role.JUDGE))
        assert response.text == "ok"
        assert response.attempt == 1
        assert response.backend_label == "mock"

    def test_retry_then_success(self):
        backend = ScriptedBackend()
        backend.add(Role.JUDGE, [{"fail": "x"}, {"fail": "y"}, "ok"], tag="t")
        response = self._gateway(backend).complete(req(Role.JUDGE))
        assert response.text == "ok"
        assert response.attempt == 3

    def test_exhausted(self):
        backend = ScriptedBackend()
        backend.add(Role.JUDGE, [{"fail": "x"}] * 3, tag="t")
        with pytest.raises(Exhausted) as exc:
            self._gateway(backend).complete(req(Role.JUDGE))
        assert exc.value.attempts == 3

    def test_config_missing(self):
        gateway = Gateway({}, sleep=lambda _s: None)
        with pytest.raises(ConfigMissing):
            gateway.complete(req(Role.JUDGE))

    def test_call_log_appended(self, tmp_path):
        log = tmp_path / "calls.jsonl"
        backend = ScriptedBackend()
        backend.add(Role.JUDGE, [{"fail": "x"}, "ok"], tag="t")
        self._gateway(backend, call_log_path=log, clock=lambda: 1.0).complete(
            req(Role.JUDGE)
        )
        lines = [json.loads(l) for l in log.read_text().splitlines()]
        assert len(lines) == 2
        assert lines[0]["outcome"].startswith("error:")
        assert lines[1]["outcome"] == "ok"
        assert lines[0]["attempt"] == 1 and lines[1]["attempt"] == 2
        assert all(l["role"] == "judge" for l in lines)

    def test_concurrency_limit_enforced(self):
        limit = 4
        active = 0
        peak = 0
        lock = threading.Lock()
        barrier_event = threading.Event()

        class SlowBackend:
            label = "slow"

            def invoke(self, request, timeout):
                nonlocal active, peak
                with lock:
                    active += 1
                    peak = max(peak, active)
                barrier_event.wait(0.05)
                with lock:
                    active -= 1
                return "ok"

        gateway = Gateway(
            {Role.JUDGE: SlowBackend()},
            policy=RetryPolicy(concurrency_limit=limit),
            sleep=lambda _s: None,
        )
        threads = [
            threading.Thread(target=lambda: gateway.complete(req(Role.JUDGE)))
            for _ in range(16)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert peak <= limit


class TestProfiles:
    def test_mock_profile(self, tmp_path):
        script = tmp_path / "s.jsonl"
        script.write_text(
            json.dumps({"role": "judge", "tag": "t", "responses": ["ok"]}) + "\n"
        )
        gateway = gateway_from_profile(f"mock:{script}")
        assert gateway.complete(req(Role.JUDGE)).text == "ok"

    def test_env_profile_without_urls_has_no_backends(self, monkeypatch):
        for role in Role:
            monkeypatch.delenv(f"ROBIN_{role.name}_URL", raising=False)
        gateway = gateway_from_profile("env")
        with pytest.raises(ConfigMissing):
            gateway.complete(req(Role.JUDGE))

    def test_unknown_profile(self):
        with pytest.raises(ValueError):
            gateway_from_profile("banana")
