"""Provider-agnostic boundary for all model calls.

Every role (synthesizer, judge, literature agents, trajectory analyst)
maps to exactly one configured backend. The gateway owns retry policy,
a per-role admission semaphore, and an append-only call log; backends
are pluggable, and the scripted mock backend makes entire pipeline runs
byte-reproducible in tests.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol

__all__ = [
    "Role",
    "AgentRequest",
    "AgentResponse",
    "RetryPolicy",
    "Backend",
    "BackendFailure",
    "ConfigMissing",
    "Exhausted",
    "ScriptParse",
    "UnmatchedRequest",
    "ScriptedBackend",
    "HttpChatBackend",
    "Gateway",
    "load_mock_script",
    "request_digest",
]


class Role(str, enum.Enum):
    SYNTHESIZER = "synthesizer"
    JUDGE = "judge"
    CONCISE_LITERATURE = "concise_literature"
    DEEP_LITERATURE = "deep_literature"
    TRAJECTORY_ANALYST = "trajectory_analyst"


@dataclass(frozen=True)
class AgentRequest:
    role: Role
    system: str
    user: str
    determinism_hint: Optional[float] = None
    tag: str = ""

    def __post_init__(self):
        if not (self.system + self.user):
            raise ValueError("request must carry prompt text")


@dataclass(frozen=True)
class AgentResponse:
    text: str
    latency: float
    backend_label: str
    attempt: int
    usage: Optional[tuple[int, int]] = None


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base: float = 0.5
    backoff_factor: float = 2.0
    jitter_fraction: float = 0.1
    concurrency_limit: int = 8
    timeout: float = 120.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.concurrency_limit < 1:
            raise ValueError("concurrency_limit must be >= 1")

    def delay(self, attempt: int, rng: random.Random) -> float:
        """Backoff before retry ``attempt`` (2-based); nondecreasing modulo jitter."""
        base = self.backoff_base * self.backoff_factor ** (attempt - 2)
        return base * (1 + self.jitter_fraction * (2 * rng.random() - 1))


class BackendFailure(RuntimeError):
    """Transient backend error; eligible for retry."""


class ConfigMissing(RuntimeError):
    def __init__(self, role: Role):
        self.role = role
        super().__init__(f"no backend configured for role {role.value!r}")


class Exhausted(RuntimeError):
    def __init__(self, role: Role, attempts: int):
        self.role = role
        self.attempts = attempts
        super().__init__(f"role {role.value!r} failed after {attempts} attempt(s)")


class ScriptParse(ValueError):
    def __init__(self, line: int, reason: str):
        self.line = line
        super().__init__(f"mock script line {line}: {reason}")


class UnmatchedRequest(KeyError):
    def __init__(self, digest: str, role: Role, tag: str):
        self.digest = digest
        super().__init__(
            f"no scripted response for role={role.value} tag={tag!r} digest={digest[:12]}"
        )


def request_digest(request: AgentRequest) -> str:
    h = hashlib.sha256()
    for part in (request.role.value, request.system, request.user):
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


class Backend(Protocol):
    label: str

    def invoke(self, request: AgentRequest, timeout: float) -> str: ...


class ScriptedBackend:
    """Deterministic replay backend.

    Entries match incoming requests by (role, tag) or by a prefix of the
    request digest, and serve their canned responses in order. A response
    of the form ``{"fail": msg}`` simulates a transient backend failure.
    """

    label = "mock"

    def __init__(self):
        self._by_tag: dict[tuple[str, str], list] = {}
        self._by_digest: list[tuple[str, str, list]] = []  # (role, prefix, queue)
        self._lock = threading.Lock()

    def add(
        self,
        role: Role,
        responses: list,
        tag: Optional[str] = None,
        digest_prefix: Optional[str] = None,
    ) -> None:
        if tag is not None:
            self._by_tag.setdefault((role.value, tag), []).extend(responses)
        elif digest_prefix is not None:
            self._by_digest.append((role.value, digest_prefix, list(responses)))
        else:
            raise ValueError("entry needs a tag or a digest_prefix")

    def _queue_for(self, request: AgentRequest, digest: str) -> Optional[list]:
        queue = self._by_tag.get((request.role.value, request.tag))
        if queue:
            return queue
        for role, prefix, q in self._by_digest:
            if role == request.role.value and digest.startswith(prefix) and q:
                return q
        return None

    def invoke(self, request: AgentRequest, timeout: float) -> str:
        digest = request_digest(request)
        with self._lock:
            queue = self._queue_for(request, digest)
            if not queue:
                raise UnmatchedRequest(digest, request.role, request.tag)
            item = queue.pop(0)
        if isinstance(item, dict):
            if "fail" in item:
                raise BackendFailure(str(item["fail"]))
            return str(item.get("text", ""))
        return str(item)


def load_mock_script(path: str | Path) -> ScriptedBackend:
    """Load a JSONL mock script: one entry per line with ``role``,
    ``tag`` or ``digest_prefix``, and an ordered ``responses`` list."""
    backend = ScriptedBackend()
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ScriptParse(lineno, f"invalid JSON: {exc}") from None
            try:
                role = Role(entry["role"])
                responses = entry["responses"]
                if not isinstance(responses, list):
                    raise TypeError
            except (KeyError, ValueError, TypeError):
                raise ScriptParse(lineno, "entry needs role and responses[]") from None
            tag = entry.get("tag")
            prefix = entry.get("digest_prefix")
            if tag is None and prefix is None:
                raise ScriptParse(lineno, "entry needs tag or digest_prefix")
            backend.add(role, responses, tag=tag, digest_prefix=prefix)
    return backend


class HttpChatBackend:
    """Chat-completion style JSON-over-HTTPS backend.

    Endpoint and credential come from ROBIN_<ROLE>_URL / ROBIN_<ROLE>_KEY.
    """

    def __init__(self, url: str, api_key: str = "", label: str = "http"):
        self.url = url
        self.api_key = api_key
        self.label = label

    @classmethod
    def from_env(cls, role: Role) -> "HttpChatBackend":
        prefix = f"ROBIN_{role.name}"
        url = os.environ.get(f"{prefix}_URL")
        if not url:
            raise ConfigMissing(role)
        return cls(url, os.environ.get(f"{prefix}_KEY", ""), label=f"http:{role.value}")

    def invoke(self, request: AgentRequest, timeout: float) -> str:
        import requests

        messages = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        messages.append({"role": "user", "content": request.user})
        body: dict = {"messages": messages}
        if request.determinism_hint is not None:
            body["temperature"] = request.determinism_hint
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(self.url, json=body, headers=headers, timeout=timeout)
            resp.raise_for_status()
            payload = resp.json()
            return payload["choices"][0]["message"]["content"]
        except Exception as exc:  # noqa: BLE001 - every transport error is retryable
            raise BackendFailure(str(exc)) from exc


class _CallLog:
    """Append-only JSONL log; single writer behind a lock."""

    def __init__(self, path: Path, clock: Callable[[], float]):
        self.path = path
        self._clock = clock
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")


class Gateway:
    """Routes requests to per-role backends under retry and admission policy."""

    def __init__(
        self,
        backends: dict[Role, Backend],
        policy: RetryPolicy = RetryPolicy(),
        call_log_path: Optional[str | Path] = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.time,
        rng: Optional[random.Random] = None,
    ):
        self._backends = dict(backends)
        self.policy = policy
        self._sleep = sleep
        self._clock = clock
        self._rng = rng or random.Random()
        self._log = _CallLog(Path(call_log_path), clock) if call_log_path else None
        self._semaphores = {
            role: threading.BoundedSemaphore(policy.concurrency_limit) for role in Role
        }

    def backend_for(self, role: Role) -> Backend:
        try:
            return self._backends[role]
        except KeyError:
            raise ConfigMissing(role) from None

    def _record(self, request: AgentRequest, digest: str, attempt: int, outcome: str) -> None:
        if self._log is None:
            return
        self._log.append(
            {
                "timestamp": self._clock(),
                "role": request.role.value,
                "tag": request.tag,
                "digest": digest,
                "attempt": attempt,
                "outcome": outcome,
            }
        )

    def complete(self, request: AgentRequest) -> AgentResponse:
        backend = self.backend_for(request.role)
        digest = request_digest(request)
        semaphore = self._semaphores[request.role]
        last_error: Optional[Exception] = None
        for attempt in range(1, self.policy.max_attempts + 1):
            if attempt > 1:
                self._sleep(self.policy.delay(attempt, self._rng))
            started = self._clock()
            try:
                with semaphore:
                    text = backend.invoke(request, timeout=self.policy.timeout)
            except BackendFailure as exc:
                last_error = exc
                self._record(request, digest, attempt, f"error:{exc}")
                continue
            self._record(request, digest, attempt, "ok")
            return AgentResponse(
                text=text,
                latency=self._clock() - started,
                backend_label=backend.label,
                attempt=attempt,
            )
        raise Exhausted(request.role, self.policy.max_attempts) from last_error


def gateway_from_profile(
    profile: str,
    policy: RetryPolicy = RetryPolicy(),
    call_log_path: Optional[str | Path] = None,
    **kwargs,
) -> Gateway:
    """Build a gateway from an agent-profile string.

    ``mock:<script_path>`` installs the scripted backend for every role;
    ``env`` reads per-role endpoints from the environment.
    """
    if profile.startswith("mock:"):
        backend = load_mock_script(profile.split(":", 1)[1])
        backends: dict[Role, Backend] = {role: backend for role in Role}
    elif profile in ("env", "default"):
        backends = {}
        for role in Role:
            if os.environ.get(f"ROBIN_{role.name}_URL"):
                backends[role] = HttpChatBackend.from_env(role)
    else:
        raise ValueError(f"unknown agent profile {profile!r}")
    return Gateway(backends, policy=policy, call_log_path=call_log_path, **kwargs)
