"""The top-level episode loop: observe memory, pick a state, run its agent.

One episode is strictly sequential: the policy picks the next state from a
masked candidate list, the chosen agent runs one cycle against a snapshot,
and its delta is appended to the shared memory. Unrecoverable agent errors
record a Failure transition, mask the agent, and re-invoke the policy
immediately with the reduced candidate set; a successful cycle by any other
agent lifts the mask again. Episodes end on Final, on step exhaustion, or
when every agent is masked.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .agents.base import AgentRegistry
from .core import (
    AGENT_STATES,
    EntryKind,
    EpisodeTrace,
    Outcome,
    SharedMemory,
    StateId,
    TaskSpec,
    TraceStep,
    entry,
    extract_answer,
    wire_name,
)
from .policy import TransitionPolicy
from .prompter import RenderOptions

logger = logging.getLogger(__name__)

# Fixed candidate ordering, matching the dataset wire format.
CANDIDATE_ORDER: tuple[StateId, ...] = (
    StateId.FINAL,
    StateId.SPECIALIZED,
    StateId.ONESHOT,
    StateId.STEPWISE,
)
AGENT_ORDER: tuple[StateId, ...] = tuple(s for s in CANDIDATE_ORDER if s in AGENT_STATES)

DEFAULT_MAX_STEPS = 15


class TransitionVerifierError(Exception):
    """The policy chose a state outside the offered candidate list."""


@dataclass
class CandidateMask:
    """Agent states temporarily removed from the offered candidates."""

    excluded: set[StateId] = field(default_factory=set)

    def exclude(self, state: StateId) -> None:
        if state not in AGENT_STATES:
            raise ValueError(f"only agent states can be masked, not {wire_name(state)}")
        self.excluded.add(state)

    def clear_after_success(self, succeeded: StateId) -> None:
        """Any other agent finishing a successful cycle re-enables the masked ones."""
        self.excluded = {s for s in self.excluded if s is succeeded}


def candidates(current: StateId, step: int, mask: CandidateMask | None = None) -> list[StateId]:
    """Ordered next-state candidates for a decision at the given step.

    Step 0 (nothing in memory yet) offers the agent states only; later steps
    prepend Final. Masked agents are dropped; an empty result means the
    episode has failed.
    """
    if step < 0:
        raise ValueError("step must be >= 0")
    excluded = mask.excluded if mask is not None else set()
    out: list[StateId] = [StateId.FINAL] if step >= 1 else []
    out.extend(s for s in AGENT_ORDER if s not in excluded)
    return out


CandidateRule = Callable[[StateId, int, CandidateMask], Sequence[StateId]]


@dataclass
class AutomatonConfig:
    """Episode-loop knobs; the candidate rule is swappable for experiments."""

    max_steps: int = DEFAULT_MAX_STEPS
    initial_state: StateId = StateId.INITIAL
    candidate_rule: CandidateRule = candidates
    render_options: RenderOptions | None = None

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


def prompt_step(memory: SharedMemory | None = None, history_len: int | None = None) -> int:
    """The step value rendered into prompts: the number of states entered."""
    if history_len is not None:
        return history_len
    assert memory is not None
    return len(memory.snapshot().state_history())


def run_episode(
    task: TaskSpec,
    agents: AgentRegistry,
    policy: TransitionPolicy,
    config: AutomatonConfig | None = None,
    seed: int = 0,
) -> EpisodeTrace:
    """Run one episode to completion and return its trace.

    The trace records every policy decision (agent entries, Failure records,
    and the Final transition); the number of successful agent cycles is
    bounded by config.max_steps. Best-effort answers are extracted even for
    exhausted or failed episodes.
    """
    config = config or AutomatonConfig()
    memory = SharedMemory.for_task(task)
    mask = CandidateMask()
    current = config.initial_state
    cycles = 0
    steps: list[TraceStep] = []

    while True:
        if cycles >= config.max_steps:
            outcome = Outcome("exhausted", extract_answer(memory.snapshot()))
            break
        offered = list(config.candidate_rule(current, cycles, mask))
        if not offered:
            outcome = Outcome("failed", extract_answer(memory.snapshot()))
            break

        snapshot = memory.snapshot()
        decision = policy.decide(snapshot, current, len(snapshot.state_history()), offered)
        if decision.chosen not in offered:
            raise TransitionVerifierError(
                f"policy chose {wire_name(decision.chosen)} outside candidates "
                f"{[wire_name(c) for c in offered]}"
            )

        seq_before = memory.seq
        memory.append([entry(EntryKind.STATE_TRANSITION, wire_name(decision.chosen))], step=cycles)

        if decision.chosen is StateId.FINAL:
            steps.append(TraceStep(len(steps), StateId.FINAL, seq_before, memory.seq, decision.rationale))
            outcome = Outcome("answered", extract_answer(memory.snapshot()))
            break

        agent = agents.for_state(decision.chosen)
        result = agent.run_cycle(memory.snapshot())
        memory.append(result.delta, step=cycles)

        if result.ok:
            steps.append(TraceStep(len(steps), decision.chosen, seq_before, memory.seq, decision.rationale))
            mask.clear_after_success(decision.chosen)
            current = decision.chosen
            cycles += 1
        else:
            memory.append([entry(EntryKind.STATE_TRANSITION, wire_name(StateId.FAILURE))], step=cycles)
            steps.append(TraceStep(
                len(steps),
                StateId.FAILURE,
                seq_before,
                memory.seq,
                f"{decision.rationale} | agent {wire_name(decision.chosen)} unrecoverable: {result.feedback}",
            ))
            mask.exclude(decision.chosen)
            current = StateId.FAILURE
            logger.debug("masked %s after unrecoverable cycle", wire_name(decision.chosen))

    return EpisodeTrace(
        task=task,
        steps=steps,
        outcome=outcome,
        seed=seed,
        final_memory=memory.snapshot(),
    )
