"""Micro state-machine specs for the agents, plus their static validator.

The shipped graphs live as JSON data files so the internal control flow of
each agent is inspectable without reading code. validate_subautomaton is the
static check: one Initial, one Return, everything reaches Return or Failure,
and every retry loop is bounded by some finite budget on the cycle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Mapping

Edge = tuple[str, str, str]  # (from, event, to)


@dataclass(frozen=True)
class SubAutomatonSpec:
    """One agent's internal graph with per-micro-state retry budgets.

    A budget of None marks an unbounded micro-state; the validator flags any
    cycle that passes through no finitely budgeted state.
    """

    name: str
    micro_states: tuple[str, ...]
    edges: tuple[Edge, ...]
    retry_budget: Mapping[str, int | None]

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "SubAutomatonSpec":
        return cls(
            name=data["name"],
            micro_states=tuple(data["micro_states"]),
            edges=tuple((f, e, t) for f, e, t in data["edges"]),
            retry_budget=dict(data.get("retry_budget", {})),
        )


def load_builtin_spec(name: str) -> SubAutomatonSpec:
    """Load one of the shipped graphs: oneshot, stepwise, or specialized."""
    payload = resources.files("hyperstate.data").joinpath(f"subautomaton_{name}.json")
    return SubAutomatonSpec.from_json_dict(json.loads(payload.read_text(encoding="utf-8")))


def validate_subautomaton(spec: SubAutomatonSpec) -> list[str]:
    """Return the list of structural defects; empty means the spec is sound."""
    defects: list[str] = []
    states = set(spec.micro_states)

    for name, count in (("Initial", spec.micro_states.count("Initial")),
                        ("Return", spec.micro_states.count("Return"))):
        if count != 1:
            defects.append(f"expected exactly one {name} micro-state, found {count}")

    for src, event, dst in spec.edges:
        for endpoint in (src, dst):
            if endpoint not in states:
                defects.append(f"edge ({src}, {event}, {dst}) references unknown micro-state {endpoint}")

    for state, budget in spec.retry_budget.items():
        if state not in states:
            defects.append(f"retry budget for unknown micro-state {state}")
        elif budget is not None and budget < 0:
            defects.append(f"negative retry budget on {state}")

    # Reachability of Return/Failure, walking edges backwards.
    reverse: dict[str, set[str]] = {s: set() for s in states}
    for src, _event, dst in spec.edges:
        if src in states and dst in states:
            reverse[dst].add(src)
    reached = {s for s in ("Return", "Failure") if s in states}
    frontier = list(reached)
    while frontier:
        node = frontier.pop()
        for prev in reverse.get(node, ()):
            if prev not in reached:
                reached.add(prev)
                frontier.append(prev)
    for state in spec.micro_states:
        if state not in reached:
            defects.append(f"micro-state {state} cannot reach Return or Failure")

    defects.extend(_unbounded_cycles(spec, states))
    return defects


def _unbounded_cycles(spec: SubAutomatonSpec, states: set[str]) -> list[str]:
    """Find cycles whose every member lacks a finite retry budget."""
    bounded = {s for s, b in spec.retry_budget.items() if b is not None}
    graph: dict[str, set[str]] = {s: set() for s in states}
    for src, _event, dst in spec.edges:
        if src in states and dst in states:
            graph[src].add(dst)

    defects: list[str] = []
    # Tarjan-free approach: a strongly connected component restricted to
    # unbudgeted states that still contains a cycle is unbounded.
    unbudgeted = states - bounded
    color: dict[str, int] = {}

    def dfs(node: str, stack: list[str]) -> None:
        color[node] = 1
        stack.append(node)
        for nxt in graph[node]:
            if nxt not in unbudgeted:
                continue
            if color.get(nxt, 0) == 1:
                cycle = stack[stack.index(nxt):] + [nxt]
                defects.append("unbounded retry loop: " + " -> ".join(cycle))
            elif color.get(nxt, 0) == 0:
                dfs(nxt, stack)
        stack.pop()
        color[node] = 2

    for state in sorted(unbudgeted):
        if color.get(state, 0) == 0:
            dfs(state, [])
    return defects
