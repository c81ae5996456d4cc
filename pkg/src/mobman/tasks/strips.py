"""Typed STRIPS: grounding, forward search (breadth-first or A* with h_add), validation."""
from __future__ import annotations

import heapq
import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from mobman.errors import GoalUnreachable, SearchBudgetExceeded, Ungroundable

NAVIGATION, MANIPULATION = "navigation", "manipulation"
KINDS = (NAVIGATION, MANIPULATION)

Atom = tuple  # (predicate, arg, ...)


def atom_str(a: Atom) -> str:
    return f"{a[0]}({','.join(a[1:])})"


@dataclass(frozen=True)
class Predicate:
    name: str
    types: tuple[str, ...]


@dataclass(frozen=True)
class ActionSchema:
    name: str
    parameters: tuple[tuple[str, str], ...]  # (?var, type)
    preconditions: frozenset
    add_effects: frozenset
    del_effects: frozenset
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"action {self.name!r}: kind must be one of {KINDS}")
        if self.add_effects & self.del_effects:
            raise ValueError(f"action {self.name!r}: add and delete effects overlap")
        params = {p for p, _ in self.parameters}
        for a in self.preconditions | self.add_effects | self.del_effects:
            for t in a[1:]:
                if t.startswith("?") and t not in params:
                    raise ValueError(f"action {self.name!r}: variable {t} not a parameter")


@dataclass(frozen=True)
class Domain:
    name: str
    types: dict  # type -> parent (or None)
    constants: dict  # name -> type
    predicates: dict  # name -> Predicate
    actions: tuple[ActionSchema, ...]

    def is_subtype(self, t: str, ancestor: str) -> bool:
        seen = set()
        while t is not None and t not in seen:
            if t == ancestor:
                return True
            seen.add(t)
            t = self.types.get(t)
        return False

    def schema(self, name: str) -> ActionSchema:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)


@dataclass(frozen=True)
class Problem:
    name: str
    domain: str
    objects: dict  # name -> type
    initial: frozenset
    goal: frozenset


@dataclass(frozen=True, order=True)
class GroundAction:
    name: str
    args: tuple[str, ...]
    kind: str = field(compare=False)
    pre: frozenset = field(compare=False, default=frozenset())
    add: frozenset = field(compare=False, default=frozenset())
    delete: frozenset = field(compare=False, default=frozenset())

    @property
    def label(self) -> str:
        return f"{self.name}({','.join(self.args)})"

    def applicable(self, state: frozenset) -> bool:
        return self.pre <= state

    def apply(self, state: frozenset) -> frozenset:
        return (state - self.delete) | self.add

    def __str__(self):
        return self.label


Plan = tuple  # tuple[GroundAction, ...]


# --- typing and grounding -------------------------------------------------------

def universe(domain: Domain, problem: Problem) -> dict:
    objs = dict(domain.constants)
    for name, t in problem.objects.items():
        if t not in domain.types:
            raise Ungroundable(f"object {name!r} has undeclared type {t!r}")
        if name in objs and objs[name] != t:
            raise Ungroundable(f"object {name!r} declared with two types")
        objs[name] = t
    return objs


def check_atom(domain: Domain, objs: dict, atom: Atom, where: str) -> None:
    pred = domain.predicates.get(atom[0])
    if pred is None:
        raise Ungroundable(f"{where}: unknown predicate {atom[0]!r}")
    if len(atom) - 1 != len(pred.types):
        raise Ungroundable(f"{where}: {atom_str(atom)} has arity {len(atom) - 1}, expected {len(pred.types)}")
    for arg, t in zip(atom[1:], pred.types):
        if arg not in objs:
            raise Ungroundable(f"{where}: unknown constant {arg!r} in {atom_str(atom)}")
        if not domain.is_subtype(objs[arg], t):
            raise Ungroundable(f"{where}: {arg!r} is a {objs[arg]}, {atom_str(atom)} needs {t}")


def check_problem(domain: Domain, problem: Problem) -> dict:
    if problem.domain != domain.name:
        raise Ungroundable(f"problem is for domain {problem.domain!r}, not {domain.name!r}")
    objs = universe(domain, problem)
    for a in sorted(problem.initial):
        check_atom(domain, objs, a, "init")
    for a in sorted(problem.goal):
        check_atom(domain, objs, a, "goal")
    return objs


def _subst(atoms: Iterable[Atom], binding: dict) -> frozenset:
    return frozenset((a[0],) + tuple(binding.get(t, t) for t in a[1:]) for a in atoms)


def ground(domain: Domain, problem: Problem, limit: int = 100_000) -> tuple[GroundAction, ...]:
    """All type-correct ground actions, sorted by label."""
    objs = check_problem(domain, problem)
    by_type = {}
    for t in domain.types:
        by_type[t] = sorted(o for o, ot in objs.items() if domain.is_subtype(ot, t))
    out = []
    for schema in domain.actions:
        pools = [by_type.get(t, []) for _, t in schema.parameters]
        for combo in itertools.product(*pools):
            b = {p: c for (p, _), c in zip(schema.parameters, combo)}
            out.append(GroundAction(schema.name, tuple(combo), schema.kind, _subst(schema.preconditions, b),
                                    _subst(schema.add_effects, b), _subst(schema.del_effects, b)))
            if len(out) > limit:
                raise SearchBudgetExceeded(f"more than {limit} ground actions")
    out.sort(key=lambda g: g.label)
    return tuple(out)


# --- heuristic --------------------------------------------------------------------

def h_add(state: frozenset, goal: frozenset, actions: Sequence[GroundAction]) -> float:
    """Additive delete-relaxation estimate (inf when the relaxed goal is unreachable)."""
    cost = {a: 0.0 for a in state}
    changed = True
    while changed:
        changed = False
        for act in actions:
            c = 0.0
            for p in act.pre:
                v = cost.get(p)
                if v is None:
                    c = math.inf
                    break
                c += v
            if c == math.inf:
                continue
            c += 1.0
            for a in act.add:
                if c < cost.get(a, math.inf):
                    cost[a] = c
                    changed = True
    return sum(cost.get(g, math.inf) for g in goal)


# --- search -------------------------------------------------------------------------

def _successors(state, actions):
    for act in actions:
        if act.pre <= state:
            yield act, act.apply(state)


def _extract(parents, node):
    plan = []
    while parents[node] is not None:
        prev, act = parents[node]
        plan.append(act)
        node = prev
    return tuple(reversed(plan))


def plan(domain: Domain, problem: Problem, mode: str = "optimal", max_expansions: int = 1_000_000,
         max_ground: int = 100_000) -> Plan:
    """Forward state-space search.

    ``optimal`` is breadth-first (uniform cost with unit actions), so the plan
    is shortest; ``greedy`` is A* guided by h_add, valid but not necessarily
    shortest. Successors are generated in ground-action label order.
    """
    if mode not in ("optimal", "greedy"):
        raise ValueError("mode must be 'optimal' or 'greedy'")
    actions = ground(domain, problem, max_ground)
    init, goal = problem.initial, problem.goal
    if goal <= init:
        return ()
    parents = {init: None}
    expanded = 0
    if mode == "optimal":
        queue = deque([init])
        while queue:
            s = queue.popleft()
            expanded += 1
            if expanded > max_expansions:
                raise SearchBudgetExceeded(f"more than {max_expansions} expansions")
            for act, nxt in _successors(s, actions):
                if nxt in parents:
                    continue
                parents[nxt] = (s, act)
                if goal <= nxt:
                    return _extract(parents, nxt)
                queue.append(nxt)
        raise GoalUnreachable(f"goal unreachable after exploring {len(parents)} states")
    g_cost = {init: 0}
    counter = itertools.count()
    h0 = h_add(init, goal, actions)
    if h0 == math.inf:
        raise GoalUnreachable("goal unreachable even under the delete relaxation")
    heap = [(h0, h0, next(counter), init)]
    closed = set()
    while heap:
        f, h, _, s = heapq.heappop(heap)
        if s in closed:
            continue
        if goal <= s:
            return _extract(parents, s)
        closed.add(s)
        expanded += 1
        if expanded > max_expansions:
            raise SearchBudgetExceeded(f"more than {max_expansions} expansions")
        g = g_cost[s]
        for act, nxt in _successors(s, actions):
            if nxt in closed or g + 1 >= g_cost.get(nxt, math.inf):
                continue
            hn = h_add(nxt, goal, actions)
            if hn == math.inf:
                continue
            g_cost[nxt] = g + 1
            parents[nxt] = (s, act)
            heapq.heappush(heap, (g + 1 + hn, hn, next(counter), nxt))
    raise GoalUnreachable(f"goal unreachable after exploring {len(closed)} states")


def reachable_states(domain: Domain, problem: Problem, limit: int = 10_000) -> int:
    actions = ground(domain, problem)
    seen = {problem.initial}
    queue = deque([problem.initial])
    while queue:
        s = queue.popleft()
        for _, nxt in _successors(s, actions):
            if nxt not in seen:
                seen.add(nxt)
                if len(seen) > limit:
                    return len(seen)
                queue.append(nxt)
    return len(seen)


def bind(domain: Domain, problem: Problem, name: str, args: Sequence[str]) -> GroundAction:
    """Ground one action by name (for plans read from files)."""
    schema = domain.schema(name)
    objs = universe(domain, problem)
    if len(args) != len(schema.parameters):
        raise Ungroundable(f"{name} takes {len(schema.parameters)} arguments")
    for a, (_, t) in zip(args, schema.parameters):
        if a not in objs or not domain.is_subtype(objs[a], t):
            raise Ungroundable(f"{name}: {a!r} is not a {t}")
    b = {p: a for (p, _), a in zip(schema.parameters, args)}
    return GroundAction(name, tuple(args), schema.kind, _subst(schema.preconditions, b),
                        _subst(schema.add_effects, b), _subst(schema.del_effects, b))


def validate_plan(domain: Domain, problem: Problem, plan_: Sequence[GroundAction]) -> tuple[bool, Optional[int]]:
    """(valid, first failing 0-based step); the step is len(plan) when only the goal fails."""
    state = problem.initial
    for i, act in enumerate(plan_):
        try:
            g = bind(domain, problem, act.name, act.args)
        except (KeyError, Ungroundable):
            return False, i
        if not g.pre <= state:
            return False, i
        state = g.apply(state)
    if problem.goal <= state:
        return True, None
    return False, len(plan_)


def split_actions(plan_: Sequence[GroundAction]):
    """(navigation [(index, action)], manipulation [(index, action)]) in plan order."""
    nav, manip = [], []
    for i, act in enumerate(plan_):
        (nav if act.kind == NAVIGATION else manip).append((i, act))
    return nav, manip


def plan_to_jsonl(plan_: Sequence[GroundAction]) -> str:
    return "".join(json.dumps({"step": i, "action": a.name, "args": list(a.args),
                               "kind": "nav" if a.kind == NAVIGATION else "manip"},
                              separators=(",", ":")) + "\n" for i, a in enumerate(plan_))


def plan_from_jsonl(domain: Domain, problem: Problem, text: str) -> Plan:
    rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    return tuple(bind(domain, problem, r["action"], r["args"]) for r in rows)
