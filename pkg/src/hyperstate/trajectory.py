"""Trajectory-tree expansion, scoring, value propagation, and label emission.

For one task, the tree branches over every offered next state instead of
committing to a single path. Each child replays from its parent's memory
checkpoint (an immutable snapshot, so sibling branches cannot observe each
other), terminal leaves are scored with the task metric, values propagate
upward by max over children, and every decision with at least two options
becomes one instruction-completion training example labeled with the
argmax-value child.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, IO, Iterable, Mapping

from .agents.base import AgentRegistry
from .automaton import AutomatonConfig, CandidateMask
from .core import (
    AnswerValue,
    EntryKind,
    MetricKind,
    SharedMemory,
    Snapshot,
    StateId,
    TaskSpec,
    entry,
    extract_answer,
    parse_wire_name,
    wire_name,
)
from .metrics import leaf_score as metric_leaf_score
from .prompter import ControllerPrompt, render_prompt


class ReplayDivergenceError(Exception):
    """A backend produced different outputs on replay in deterministic mode."""

    def __init__(self, node_id: int) -> None:
        super().__init__(f"checkpoint replay diverged while expanding node {node_id}")
        self.node_id = node_id


class UnscoredLeafError(Exception):
    """Value propagation reached a terminal node without a leaf score."""


@dataclass
class TrajectoryNode:
    """One tree node: the state entered, its memory checkpoint, and values."""

    id: int
    parent: int | None
    state: StateId
    depth: int
    step: int
    checkpoint: Snapshot | None
    children: list[int] = field(default_factory=list)
    leaf_score: float | None = None
    value: float | None = None
    prompt_x: ControllerPrompt | None = None
    failed: bool = False
    merged: tuple[StateId, ...] = ()

    @property
    def is_terminal(self) -> bool:
        return not self.children

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "parent": self.parent,
            "state": wire_name(self.state),
            "depth": self.depth,
            "step": self.step,
            "children": list(self.children),
            "leaf_score": self.leaf_score,
            "value": self.value,
            "failed": self.failed,
            "merged": [wire_name(s) for s in self.merged],
        }


@dataclass
class TrajectoryTree:
    """All nodes of one task's expansion, keyed by id; the root is id 0."""

    task: TaskSpec
    task_id: str
    seed: int
    depth_limit: int
    nodes: dict[int, TrajectoryNode] = field(default_factory=dict)
    root_id: int = 0
    deterministic: bool = True

    @property
    def root(self) -> TrajectoryNode:
        return self.nodes[self.root_id]

    def children_of(self, node: TrajectoryNode) -> list[TrajectoryNode]:
        return [self.nodes[c] for c in node.children]

    def leaves(self) -> list[TrajectoryNode]:
        return [n for n in self.nodes.values() if n.is_terminal]

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "task": self.task.to_json_dict(),
            "task_id": self.task_id,
            "seed": self.seed,
            "depth_limit": self.depth_limit,
            "deterministic": self.deterministic,
            "nodes": [self.nodes[k].to_json_dict() for k in sorted(self.nodes)],
        }

    @classmethod
    def from_json_dict(cls, data: Mapping[str, Any]) -> "TrajectoryTree":
        """Rebuild a persisted tree (checkpoints and prompts are not stored)."""
        tree = cls(
            task=TaskSpec.from_json_dict(data["task"]),
            task_id=data["task_id"],
            seed=data["seed"],
            depth_limit=data["depth_limit"],
            deterministic=data.get("deterministic", True),
        )
        for raw in data["nodes"]:
            node = TrajectoryNode(
                id=raw["id"],
                parent=raw["parent"],
                state=parse_wire_name(raw["state"]),
                depth=raw["depth"],
                step=raw["step"],
                checkpoint=None,
                children=list(raw["children"]),
                leaf_score=raw.get("leaf_score"),
                value=raw.get("value"),
                failed=raw.get("failed", False),
                merged=tuple(parse_wire_name(n) for n in raw.get("merged", [])),
            )
            tree.nodes[node.id] = node
        return tree


@dataclass(frozen=True)
class SftExample:
    """One (rendered decision prompt, best next state) training record."""

    input: str
    output: str
    meta: dict[str, Any]

    def to_json_dict(self) -> dict[str, Any]:
        return {"input": self.input, "output": self.output, "meta": self.meta}


def expand_tree(
    task: TaskSpec,
    agents: AgentRegistry,
    config: AutomatonConfig | None = None,
    depth_limit: int = 15,
    seed: int = 0,
    task_id: str | None = None,
    verify_replay: bool = False,
    deterministic: bool = True,
) -> TrajectoryTree:
    """Expand the bounded decision tree for one task, depth-first.

    At each decision node one child per candidate is materialized by replaying
    the parent checkpoint and running the chosen agent; unrecoverable cycles
    continue with the agent masked (same engine step), and at the step limit
    only a forced Final leaf remains so the path's accumulated answer can be
    scored. Siblings whose post-cycle checkpoints are byte-identical merge.
    """
    if depth_limit < 0:
        raise ValueError("depth_limit must be >= 0")
    config = config or AutomatonConfig(max_steps=max(depth_limit, 1))

    memory = SharedMemory.for_task(task)
    tree = TrajectoryTree(
        task=task,
        task_id=task_id if task_id is not None else task.digest(),
        seed=seed,
        depth_limit=depth_limit,
        deterministic=deterministic,
    )
    root = TrajectoryNode(
        id=0, parent=None, state=StateId.INITIAL, depth=0, step=0,
        checkpoint=memory.snapshot(),
    )
    tree.nodes[0] = root
    _expand(tree, root, CandidateMask(), agents, config, depth_limit, verify_replay)
    return tree


def _offered(node: TrajectoryNode, mask: CandidateMask, config: AutomatonConfig, depth_limit: int) -> list[StateId]:
    if node.step >= depth_limit:
        # The step budget is spent: the only remaining choice is to stop.
        return [StateId.FINAL] if node.step >= 1 else []
    return list(config.candidate_rule(node.state, node.step, mask))


def _expand(
    tree: TrajectoryTree,
    node: TrajectoryNode,
    mask: CandidateMask,
    agents: AgentRegistry,
    config: AutomatonConfig,
    depth_limit: int,
    verify_replay: bool,
) -> None:
    assert node.checkpoint is not None
    offered = _offered(node, mask, config, depth_limit)
    if not offered:
        return  # terminal: all agents masked (or a zero-step expansion)

    rendered_state = StateId.FAILURE if node.failed else node.state
    node.prompt_x = render_prompt(
        node.checkpoint,
        rendered_state,
        len(node.checkpoint.state_history()),
        offered,
        config.render_options,
    )

    for candidate in offered:
        child_memory = SharedMemory.from_snapshot(node.checkpoint)
        child_memory.append([entry(EntryKind.STATE_TRANSITION, wire_name(candidate))], step=node.step)

        if candidate is StateId.FINAL:
            child = TrajectoryNode(
                id=len(tree.nodes), parent=node.id, state=StateId.FINAL,
                depth=node.depth + 1, step=node.step, checkpoint=child_memory.snapshot(),
            )
            child_mask = None
        else:
            agent = agents.for_state(candidate)
            result = agent.run_cycle(child_memory.snapshot())
            if verify_replay:
                replayed = agent.run_cycle(child_memory.snapshot())
                if replayed != result:
                    raise ReplayDivergenceError(node.id)
            child_memory.append(result.delta, step=node.step)
            if result.ok:
                child_mask = CandidateMask(excluded=set(mask.excluded))
                child_mask.clear_after_success(candidate)
                child = TrajectoryNode(
                    id=len(tree.nodes), parent=node.id, state=candidate,
                    depth=node.depth + 1, step=node.step + 1,
                    checkpoint=child_memory.snapshot(),
                )
            else:
                child_memory.append(
                    [entry(EntryKind.STATE_TRANSITION, wire_name(StateId.FAILURE))], step=node.step
                )
                child_mask = CandidateMask(excluded=set(mask.excluded))
                child_mask.exclude(candidate)
                child = TrajectoryNode(
                    id=len(tree.nodes), parent=node.id, state=candidate,
                    depth=node.depth + 1, step=node.step,
                    checkpoint=child_memory.snapshot(), failed=True,
                )

        twin = _identical_sibling(tree, node, child)
        if twin is not None:
            twin.merged = twin.merged + (candidate,)
            continue

        tree.nodes[child.id] = child
        node.children.append(child.id)
        if candidate is not StateId.FINAL:
            assert child_mask is not None
            _expand(tree, child, child_mask, agents, config, depth_limit, verify_replay)


def _identical_sibling(
    tree: TrajectoryTree, parent: TrajectoryNode, child: TrajectoryNode
) -> TrajectoryNode | None:
    assert child.checkpoint is not None
    serialized = child.checkpoint.serialize()
    for sibling_id in parent.children:
        sibling = tree.nodes[sibling_id]
        if sibling.checkpoint is not None and sibling.checkpoint.serialize() == serialized:
            return sibling
    return None


def score_leaves(tree: TrajectoryTree, gold: AnswerValue, metric_kind: MetricKind) -> TrajectoryTree:
    """Score every terminal node's extracted answer against gold (absent -> 0)."""
    if gold.kind != metric_kind.answer_kind:
        raise ValueError(
            f"gold answer variant {gold.kind!r} does not match metric {metric_kind.value!r}"
        )
    for node in tree.nodes.values():
        if node.is_terminal:
            answer = extract_answer(node.checkpoint) if node.checkpoint is not None else None
            node.leaf_score = metric_leaf_score(answer, gold, metric_kind)
    return tree


def propagate_values(tree: TrajectoryTree) -> TrajectoryTree:
    """Bottom-up value pass: leaves keep their score, parents take the max."""

    def visit(node: TrajectoryNode) -> float:
        if node.is_terminal:
            if node.leaf_score is None:
                raise UnscoredLeafError(f"terminal node {node.id} has no leaf score")
            node.value = node.leaf_score
        else:
            node.value = max(visit(child) for child in tree.children_of(node))
        return node.value

    visit(tree.root)
    return tree


def best_child(tree: TrajectoryTree, node: TrajectoryNode) -> TrajectoryNode:
    """Argmax-value child; ties break by candidate order (children are created
    in canonical order, so the first maximum wins)."""
    children = tree.children_of(node)
    best = children[0]
    for child in children[1:]:
        assert child.value is not None and best.value is not None
        if child.value > best.value:
            best = child
    return best


def greedy_descent(tree: TrajectoryTree) -> TrajectoryNode:
    """Follow argmax-value children from the root down to a terminal node."""
    node = tree.root
    while not node.is_terminal:
        node = best_child(tree, node)
    return node


def extract_labels(tree: TrajectoryTree) -> list[SftExample]:
    """One training example per decision node with at least two options."""
    root_value = tree.root.value
    examples: list[SftExample] = []
    for node_id in sorted(tree.nodes):
        node = tree.nodes[node_id]
        if len(node.children) < 2:
            continue
        if node.prompt_x is None:
            raise ValueError(f"decision node {node.id} carries no rendered prompt")
        best = best_child(tree, node)
        examples.append(SftExample(
            input=node.prompt_x.text,
            output=f"<NextState>{wire_name(best.state)}</NextState>",
            meta={
                "source_task_id": tree.task_id,
                "node_id": node.id,
                "V_of_label": best.value,
                "candidate_count": len(node.children),
                "zero_value_tree": root_value == 0.0,
            },
        ))
    return examples


def emit_dataset(examples: Iterable[SftExample], sink: str | Path | IO[str]) -> int:
    """Write examples as JSON Lines ordered by (task id, node id); returns count."""
    ordered = sorted(examples, key=lambda e: (e.meta.get("source_task_id", ""), e.meta.get("node_id", 0)))
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as handle:
            return _write_lines(ordered, handle)
    return _write_lines(ordered, sink)


def _write_lines(examples: list[SftExample], handle: IO[str]) -> int:
    count = 0
    for example in examples:
        handle.write(json.dumps(example.to_json_dict(), ensure_ascii=False) + "\n")
        count += 1
    return count


def load_dataset(path: str | Path) -> list[SftExample]:
    """Read a JSONL dataset back; malformed lines raise with their line number."""
    examples: list[SftExample] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                examples.append(SftExample(input=data["input"], output=data["output"], meta=data.get("meta", {})))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"malformed dataset line {line_no}: {exc}") from exc
    return examples
