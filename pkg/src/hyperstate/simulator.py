"""Synthetic policy benchmark: complementary agents, comparable policies.

Real benchmark accuracy needs vision models; this simulator encodes the same
premise (agents with complementary strengths per query category) so the value
of a good transition policy is measurable offline. Profile-driven synthetic
agents run through the real episode engine; an oracle policy consults the
scenario's hidden category-to-best-agent mapping, a mock pretrained-LLM
policy is a noisy oracle, and the exhaustive baseline expands a full
trajectory tree and majority-votes the leaves (paying for every branch).
"""

from __future__ import annotations

import json
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from .agents.base import AgentCycleResult, AgentRegistry
from .automaton import AutomatonConfig, run_episode
from .core import (
    AnswerValue,
    EntryKind,
    MetricKind,
    Snapshot,
    StateId,
    TaskSpec,
    entry,
    extract_answer,
    parse_wire_name,
    variable_entry,
    wire_name,
)
from .metrics import leaf_score
from .policy import PolicyDecision, RandomPolicy, decide_random
from .trajectory import expand_tree, load_dataset

_CANDIDATE_BLOCK = re.compile(r"<StateCandidates>\n?(.*?)\n?</StateCandidates>", re.DOTALL)
_NEXT_STATE = re.compile(r"<NextState>(.*?)</NextState>", re.DOTALL)


class ScenarioError(Exception):
    """The scenario file is malformed."""


@dataclass(frozen=True)
class SyntheticAgentProfile:
    """How one synthetic agent behaves per query category.

    success_prob: chance a committed answer is correct; failure_prob: chance a
    cycle is unrecoverable; decisiveness: chance a surviving cycle commits an
    answer at all (otherwise it only explores); cost: latency units per cycle.
    """

    success_prob: Mapping[str, float]
    failure_prob: Mapping[str, float] = field(default_factory=dict)
    decisiveness: float = 1.0
    cost: float = 1.0

    def __post_init__(self) -> None:
        for table in (self.success_prob, self.failure_prob):
            for category, p in table.items():
                if not 0.0 <= p <= 1.0:
                    raise ScenarioError(f"probability out of range for {category}: {p}")
        if not 0.0 <= self.decisiveness <= 1.0:
            raise ScenarioError("decisiveness must lie in [0, 1]")


@dataclass
class Scenario:
    """A benchmark world: category mix, per-agent profiles, hidden oracle map."""

    name: str
    categories: dict[str, float]
    profiles: dict[StateId, SyntheticAgentProfile]
    oracle: dict[str, StateId]
    llm_mock_fidelity: float = 0.65
    exhaustive_depth: int = 2
    metric_kind: MetricKind = MetricKind.VQA_ACCURACY

    @classmethod
    def from_json_dict(cls, data: Mapping[str, Any]) -> "Scenario":
        try:
            profiles = {
                parse_wire_name(name): SyntheticAgentProfile(
                    success_prob=dict(p["success_prob"]),
                    failure_prob=dict(p.get("failure_prob", {})),
                    decisiveness=p.get("decisiveness", 1.0),
                    cost=p.get("cost", 1.0),
                )
                for name, p in data["profiles"].items()
            }
            oracle = {cat: parse_wire_name(name) for cat, name in data["oracle"].items()}
            scenario = cls(
                name=data["name"],
                categories=dict(data["categories"]),
                profiles=profiles,
                oracle=oracle,
                llm_mock_fidelity=data.get("llm_mock_fidelity", 0.65),
                exhaustive_depth=data.get("exhaustive_depth", 2),
                metric_kind=MetricKind(data.get("metric_kind", "vqa_accuracy")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from exc
        missing = {s for s in scenario.oracle.values()} - set(scenario.profiles)
        if missing:
            raise ScenarioError(f"oracle references unprofiled agents: {missing}")
        if not scenario.categories:
            raise ScenarioError("scenario needs at least one category")
        return scenario

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario file is not valid JSON: {exc}") from exc
        return cls.from_json_dict(data)


def load_default_scenario() -> Scenario:
    from importlib import resources

    payload = resources.files("hyperstate.data").joinpath("scenario_default.json")
    return Scenario.from_json_dict(json.loads(payload.read_text(encoding="utf-8")))


class CostMeter:
    """Accumulates simulated latency units and cycle counts."""

    def __init__(self) -> None:
        self.total = 0.0
        self.cycles = 0

    def add(self, cost: float) -> None:
        self.total += cost
        self.cycles += 1


class SyntheticAgent:
    """Profile-driven agent; a pure function of (snapshot, seed material)."""

    def __init__(
        self,
        state: StateId,
        profile: SyntheticAgentProfile,
        category: str,
        gold_text: str,
        seed_material: str,
        meter: CostMeter | None = None,
    ) -> None:
        self.state = state
        self.profile = profile
        self.category = category
        self.gold_text = gold_text
        self.seed_material = seed_material
        self.meter = meter

    def run_cycle(self, memory: Snapshot) -> AgentCycleResult:
        if self.meter is not None:
            self.meter.add(self.profile.cost)
        author = wire_name(self.state)
        rng = random.Random(f"{self.seed_material}:{author}:{memory.seq}:{memory.digest()[:12]}")

        if rng.random() < self.profile.failure_prob.get(self.category, 0.0):
            return AgentCycleResult(
                status="unrecoverable",
                delta=(entry(EntryKind.FEEDBACK, f"{author} hit an unrecoverable error.", author=author),),
                feedback="synthetic unrecoverable error",
            )
        if rng.random() >= self.profile.decisiveness:
            return AgentCycleResult(
                status="ok",
                delta=(
                    entry(EntryKind.FEEDBACK, f"{author} explored but did not commit an answer.", author=author),
                    variable_entry(f"notes_{memory.seq}", f"partial work by {author}", author=author),
                ),
                feedback="explored without answering",
            )
        correct = rng.random() < self.profile.success_prob.get(self.category, 0.0)
        answer = self.gold_text if correct else f"offtarget-{author}-{memory.seq}"
        return AgentCycleResult(
            status="ok",
            delta=(
                variable_entry("final_answer", answer, author=author),
                entry(EntryKind.ANSWER, answer, author=author),
                entry(EntryKind.FEEDBACK, f"{author} committed an answer.", author=author),
            ),
            feedback="committed an answer",
        )


def synthetic_task(category: str, index: int, metric_kind: MetricKind) -> tuple[TaskSpec, AnswerValue]:
    task = TaskSpec(
        title="Synthetic category routing",
        description="Answer the synthetic query; agents differ by category skill.",
        query=f"[{category}] synthetic query {index}",
        image_ref=f"synthetic://{index}",
        metric_kind=metric_kind,
    )
    return task, AnswerValue.from_text(f"gold-{category}-{index}")


def build_synthetic_registry(
    scenario: Scenario,
    category: str,
    gold_text: str,
    seed_material: str,
    meter: CostMeter | None = None,
) -> AgentRegistry:
    return AgentRegistry({
        state: SyntheticAgent(state, profile, category, gold_text, seed_material, meter)
        for state, profile in scenario.profiles.items()
    })


def _has_answer(memory: Snapshot) -> bool:
    return any(e.kind is EntryKind.ANSWER for e in memory.entries)


class OraclePolicy:
    """Consults the scenario's hidden best-agent mapping; finalizes once an
    answer is in memory."""

    name = "oracle"

    def __init__(self, scenario: Scenario, category: str) -> None:
        self.best = scenario.oracle[category]

    def decide(
        self, memory: Snapshot, current: StateId, step: int, candidates: Sequence[StateId]
    ) -> PolicyDecision:
        if _has_answer(memory) and StateId.FINAL in candidates:
            return PolicyDecision(chosen=StateId.FINAL, rationale="oracle: answer present", attempts=1)
        if self.best in candidates:
            return PolicyDecision(chosen=self.best, rationale="oracle: best agent", attempts=1)
        agents = [c for c in candidates if c is not StateId.FINAL]
        chosen = agents[0] if agents else candidates[0]
        return PolicyDecision(chosen=chosen, rationale="oracle: best agent masked", attempts=1)


class MockLlmPolicy:
    """A noisy oracle standing in for a pretrained-LLM controller."""

    name = "llm-mock"

    def __init__(self, scenario: Scenario, category: str, seed: int) -> None:
        self.best = scenario.oracle[category]
        self.fidelity = scenario.llm_mock_fidelity
        self.seed = seed

    def decide(
        self, memory: Snapshot, current: StateId, step: int, candidates: Sequence[StateId]
    ) -> PolicyDecision:
        rng = random.Random(f"llm-mock:{self.seed}:{step}:{memory.seq}")
        if _has_answer(memory) and StateId.FINAL in candidates and rng.random() < self.fidelity:
            return PolicyDecision(chosen=StateId.FINAL, rationale="llm-mock: finalize", attempts=1)
        agents = [c for c in candidates if c is not StateId.FINAL]
        if not agents:
            return PolicyDecision(chosen=candidates[0], rationale="llm-mock: forced", attempts=1)
        if self.best in agents and rng.random() < self.fidelity:
            return PolicyDecision(chosen=self.best, rationale="llm-mock: routed", attempts=1)
        return PolicyDecision(chosen=rng.choice(agents), rationale="llm-mock: guessed", attempts=1)


@dataclass(frozen=True)
class PolicyRow:
    policy: str
    mean_score: float
    episodes: int
    mean_steps: float
    mean_cost: float

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "policy": self.policy,
            "mean_score": round(self.mean_score, 6),
            "episodes": self.episodes,
            "mean_steps": round(self.mean_steps, 6),
            "mean_cost": round(self.mean_cost, 6),
        }


@dataclass
class BenchmarkReport:
    scenario: str
    seed: int
    rows: list[PolicyRow]

    def row(self, policy: str) -> PolicyRow:
        for row in self.rows:
            if row.policy == policy:
                return row
        raise KeyError(policy)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "rows": [r.to_json_dict() for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def to_text_table(self) -> str:
        """Aligned table, two decimal places; JSON is the source of truth."""
        header = f"{'policy':<12} {'mean_score':>10} {'episodes':>9} {'mean_steps':>10} {'mean_cost':>10}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(
                f"{r.policy:<12} {r.mean_score:>10.2f} {r.episodes:>9d} "
                f"{r.mean_steps:>10.2f} {r.mean_cost:>10.2f}"
            )
        return "\n".join(lines)


KNOWN_POLICIES = ("random", "llm-mock", "oracle", "exhaustive")


def _episode_category(scenario: Scenario, seed: int, index: int) -> str:
    names = sorted(scenario.categories)
    weights = [scenario.categories[n] for n in names]
    return random.Random(f"scenario-mix:{seed}:{index}").choices(names, weights=weights, k=1)[0]


def _make_policy(name: str, scenario: Scenario, category: str, seed: int, index: int):
    if name == "random":
        return RandomPolicy(seed=seed * 1_000_003 + index)
    if name == "llm-mock":
        return MockLlmPolicy(scenario, category, seed=seed * 1_000_003 + index)
    if name == "oracle":
        return OraclePolicy(scenario, category)
    raise ValueError(f"unknown policy {name!r}")


def _run_exhaustive(
    scenario: Scenario,
    task: TaskSpec,
    gold: AnswerValue,
    category: str,
    seed_material: str,
) -> tuple[float, int, float]:
    """Expand the full tree, majority-vote the leaf answers, pay for it all."""
    meter = CostMeter()
    registry = build_synthetic_registry(scenario, category, gold.text or "", seed_material, meter)
    tree = expand_tree(task, registry, depth_limit=scenario.exhaustive_depth, seed=0)
    votes: Counter[str] = Counter()
    for node in tree.leaves():
        answer = extract_answer(node.checkpoint) if node.checkpoint is not None else None
        if answer is not None:
            votes[answer.render()] += 1
    if not votes:
        return 0.0, meter.cycles, meter.total
    top = max(votes.items(), key=lambda kv: (kv[1], kv[0]))[0]
    score = leaf_score(AnswerValue.parse(top), gold, scenario.metric_kind)
    return score, meter.cycles, meter.total


def simulate(
    scenario: Scenario,
    policies: Sequence[str],
    episodes: int,
    seed: int = 0,
    max_steps: int = 15,
) -> BenchmarkReport:
    """Run the benchmark: the same seeded episode set for every policy."""
    for name in policies:
        if name not in KNOWN_POLICIES:
            raise ValueError(f"unknown policy {name!r}; known: {KNOWN_POLICIES}")
    rows: list[PolicyRow] = []
    for name in policies:
        scores: list[float] = []
        steps: list[float] = []
        costs: list[float] = []
        for i in range(episodes):
            category = _episode_category(scenario, seed, i)
            task, gold = synthetic_task(category, i, scenario.metric_kind)
            seed_material = f"sim:{seed}:{i}"
            if name == "exhaustive":
                score, n_steps, cost = _run_exhaustive(scenario, task, gold, category, seed_material)
                scores.append(score)
                steps.append(float(n_steps))
                costs.append(cost)
                continue
            meter = CostMeter()
            registry = build_synthetic_registry(scenario, category, gold.text or "", seed_material, meter)
            policy = _make_policy(name, scenario, category, seed, i)
            trace = run_episode(task, registry, policy, AutomatonConfig(max_steps=max_steps), seed=seed)
            answer = trace.outcome.answer
            scores.append(leaf_score(answer, gold, scenario.metric_kind))
            steps.append(float(len(trace.steps)))
            costs.append(meter.total)
        rows.append(PolicyRow(
            policy=name,
            mean_score=sum(scores) / episodes,
            episodes=episodes,
            mean_steps=sum(steps) / episodes,
            mean_cost=sum(costs) / episodes,
        ))
    return BenchmarkReport(scenario=scenario.name, seed=seed, rows=rows)


def parse_candidate_block(input_text: str) -> list[str]:
    match = _CANDIDATE_BLOCK.search(input_text)
    if not match:
        return []
    return [line for line in match.group(1).split("\n") if line]


def parse_output_name(output_text: str) -> str | None:
    match = _NEXT_STATE.search(output_text)
    return match.group(1) if match else None


DecideFn = Callable[[str, list[str]], str]


def random_decider(seed: int) -> DecideFn:
    counter = {"i": 0}

    def decide(input_text: str, candidates: list[str]) -> str:
        decision = decide_random([parse_wire_name(c) for c in candidates], seed, counter["i"])
        counter["i"] += 1
        return wire_name(decision.chosen)

    return decide


def eval_dataset(path: str | Path, decide: DecideFn) -> float:
    """Fraction of dataset examples where the policy reproduces the label."""
    examples = load_dataset(path)
    if not examples:
        raise ValueError("no examples in dataset")
    hits = 0
    for example in examples:
        candidates = parse_candidate_block(example.input)
        label = parse_output_name(example.output)
        if label is None or not candidates:
            raise ValueError(f"example missing candidates or label: node {example.meta.get('node_id')}")
        if decide(example.input, candidates) == label:
            hits += 1
    return hits / len(examples)
