"""Agent-side contracts: cycle results, backend ports, and the registry.

Agents are stateless between cycles; everything they know comes from the
memory snapshot they are handed, and everything they produce goes back
through the returned delta. Backends (generators, interpreter, expert
model) are pluggable ports so the orchestration core stays model-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Protocol, runtime_checkable

from ..core import AGENT_STATES, MemoryEntry, Snapshot, StateId, wire_name


@dataclass(frozen=True)
class AgentCycleResult:
    """Outcome of one agent cycle: a memory delta plus a verifier summary."""

    status: str  # "ok" | "unrecoverable"
    delta: tuple[MemoryEntry, ...]
    feedback: str

    def __post_init__(self) -> None:
        if self.status not in ("ok", "unrecoverable"):
            raise ValueError(f"unknown cycle status: {self.status!r}")
        if self.status == "ok" and not self.delta:
            raise ValueError("a successful cycle must contribute at least one entry")

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class ExecutionResult:
    """What the code interpreter reports back for one program."""

    ok: bool
    variables: Mapping[str, str] = field(default_factory=dict)
    feedback: str = ""
    error: str | None = None


class TextGenerationPort(Protocol):
    """Prompt text in, completion text out (instruction/code generators)."""

    def generate(self, prompt: str) -> str: ...


class CodeExecutionPort(Protocol):
    """Opaque code text in, execution result out (sandboxed elsewhere)."""

    def execute(self, code: str, memory: Snapshot) -> ExecutionResult: ...


class ExpertModelPort(Protocol):
    """Direct perception backend; hint carries the adaptive-retry context."""

    def predict(self, query: str, image_ref: str, hint: str | None = None) -> str: ...


@dataclass
class BackendPorts:
    """The pluggable transports an agent may need; unused ones stay None."""

    instruction_generator: TextGenerationPort | None = None
    code_generator: TextGenerationPort | None = None
    code_interpreter: CodeExecutionPort | None = None
    expert_model: ExpertModelPort | None = None

    def require(self, *roles: str) -> None:
        missing = [r for r in roles if getattr(self, r) is None]
        if missing:
            raise MissingPortError(missing)


class MissingPortError(Exception):
    def __init__(self, roles: list[str]) -> None:
        super().__init__(f"backend ports not configured: {', '.join(roles)}")
        self.roles = roles


@runtime_checkable
class Agent(Protocol):
    state: StateId

    def run_cycle(self, memory: Snapshot) -> AgentCycleResult: ...


class AgentRegistry:
    """Maps every agent state to its implementation."""

    def __init__(self, agents: Mapping[StateId, Agent]) -> None:
        missing = AGENT_STATES - set(agents)
        if missing:
            names = ", ".join(sorted(wire_name(s) for s in missing))
            raise ValueError(f"registry must cover every agent state; missing: {names}")
        self._agents = dict(agents)

    def for_state(self, state: StateId) -> Agent:
        return self._agents[state]
