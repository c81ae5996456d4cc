"""Reader for the s-expression domain/problem format (see docs/domain.md)."""
from __future__ import annotations

from pathlib import Path
from typing import Union

from mobman.errors import DomainSyntaxError
from mobman.tasks.strips import KINDS, ActionSchema, Domain, Predicate, Problem

DATA_DIR = Path(__file__).parent / "data"


class Sym(str):
    """A symbol token that remembers its source line."""

    line: int = 0

    def __new__(cls, text, line):
        s = super().__new__(cls, text)
        s.line = line
        return s


class Node(list):
    line: int = 0


def tokenize(text: str):
    line = 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            i += 1
        elif ch.isspace():
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            yield Sym(ch, line)
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "();":
                j += 1
            yield Sym(text[i:j].lower(), line)
            i = j


def read_sexpr(text: str) -> Node:
    stack = [Node()]
    for tok in tokenize(text):
        if tok == "(":
            node = Node()
            node.line = tok.line
            stack[-1].append(node)
            stack.append(node)
        elif tok == ")":
            if len(stack) == 1:
                raise DomainSyntaxError(f"line {tok.line}: unbalanced ')'")
            stack.pop()
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise DomainSyntaxError(f"line {stack[-1].line}: unclosed '('")
    top = stack[0]
    if len(top) != 1 or not isinstance(top[0], Node):
        raise DomainSyntaxError("expected exactly one top-level (define ...) form")
    return top[0]


def _line(x) -> int:
    return getattr(x, "line", 0)


def _err(x, msg):
    return DomainSyntaxError(f"line {_line(x)}: {msg}")


def _symbols(node, what):
    for x in node:
        if isinstance(x, Node):
            raise _err(x, f"expected symbols in {what}")
    return [str(x) for x in node]


def typed_list(items, what, default="object") -> list[tuple[str, str]]:
    """Parse ``a b - t c`` into [(a, t), (b, t), (c, default)]."""
    syms = _symbols(items, what)
    out, pending = [], []
    i = 0
    while i < len(syms):
        s = syms[i]
        if s == "-":
            if i + 1 >= len(syms) or not pending:
                raise _err(items[i] if i < len(items) else items, f"dangling '-' in {what}")
            out += [(p, syms[i + 1]) for p in pending]
            pending = []
            i += 2
            continue
        pending.append(s)
        i += 1
    out += [(p, default) for p in pending]
    return out


def _atom(node, what, variables=None):
    if not isinstance(node, Node) or not node:
        raise _err(node, f"expected an atom in {what}")
    if node[0] == "not":
        raise _err(node, f"negative literals are not supported ({what})")
    syms = _symbols(node, what)
    if variables is not None:
        for s in syms[1:]:
            if s.startswith("?") and s not in variables:
                raise _err(node, f"unknown variable {s} in {what}")
    return tuple(syms)


def _conjunction(node, what, variables=None) -> frozenset:
    """``(and a b ...)``, a single atom, or ``()``."""
    if isinstance(node, Node) and not node:
        return frozenset()
    if isinstance(node, Node) and node[0] == "and":
        return frozenset(_atom(x, what, variables) for x in node[1:])
    return frozenset([_atom(node, what, variables)])


def _effects(node, what, variables):
    items = node[1:] if isinstance(node, Node) and node and node[0] == "and" else [node]
    add, dele = set(), set()
    for x in items:
        if isinstance(x, Node) and x and x[0] == "not":
            if len(x) != 2:
                raise _err(x, f"malformed (not ...) in {what}")
            dele.add(_atom(x[1], what, variables))
        elif isinstance(x, Node) and not x:
            continue
        else:
            add.add(_atom(x, what, variables))
    return frozenset(add), frozenset(dele)


def _sections(form, allowed):
    out = {}
    for x in form[2:]:
        if not isinstance(x, Node) or not x or not str(x[0]).startswith(":"):
            raise _err(x, "expected a (:section ...) form")
        key = str(x[0])
        if key not in allowed:
            raise _err(x, f"unknown section {key}")
        if key != ":action" and key in out:
            raise _err(x, f"duplicate section {key}")
        out.setdefault(key, []).append(x)
    return out


def _head(form, kind) -> str:
    if not form or form[0] != "define" or len(form) < 2 or not isinstance(form[1], Node) \
            or len(form[1]) != 2 or form[1][0] != kind:
        raise _err(form, f"expected (define ({kind} <name>) ...)")
    return str(form[1][1])


def parse_domain(text: str) -> Domain:
    form = read_sexpr(text)
    name = _head(form, "domain")
    sec = _sections(form, {":requirements", ":types", ":constants", ":predicates", ":action"})
    types = {"object": None}
    for t, parent in typed_list(sec.get(":types", [Node([":types"])])[0][1:], ":types"):
        types[t] = parent
    for t, parent in list(types.items()):
        if parent is not None and parent not in types:
            types[parent] = "object"
    constants = {}
    for c, t in typed_list(sec.get(":constants", [Node([":constants"])])[0][1:], ":constants"):
        if t not in types:
            raise _err(sec[":constants"][0], f"constant {c!r} has undeclared type {t!r}")
        constants[c] = t
    predicates = {}
    for p in sec.get(":predicates", [Node([":predicates"])])[0][1:]:
        if not isinstance(p, Node) or not p:
            raise _err(p, "expected (predicate ?x - type ...)")
        pname = str(p[0])
        params = typed_list(p[1:], f"predicate {pname}")
        for _, t in params:
            if t not in types:
                raise _err(p, f"predicate {pname}: undeclared type {t!r}")
        if pname in predicates:
            raise _err(p, f"duplicate predicate {pname!r}")
        predicates[pname] = Predicate(pname, tuple(t for _, t in params))
    actions = []
    for a in sec.get(":action", []):
        actions.append(_action(a, types, predicates))
    names = [a.name for a in actions]
    if len(set(names)) != len(names):
        raise _err(form, "duplicate action names")
    return Domain(name, types, constants, predicates, tuple(actions))


def _action(node, types, predicates) -> ActionSchema:
    if len(node) < 2 or isinstance(node[1], Node):
        raise _err(node, "expected (:action <name> ...)")
    name = str(node[1])
    fields = {}
    rest = node[2:]
    if len(rest) % 2:
        raise _err(node, f"action {name}: keys and values must pair up")
    for k, v in zip(rest[::2], rest[1::2]):
        if isinstance(k, Node) or not k.startswith(":"):
            raise _err(node, f"action {name}: expected a :key")
        fields[str(k)] = v
    unknown = set(fields) - {":parameters", ":precondition", ":effect", ":kind"}
    if unknown:
        raise _err(node, f"action {name}: unknown keys {sorted(unknown)}")
    params = typed_list(fields.get(":parameters", Node()), f"action {name} parameters")
    for _, t in params:
        if t not in types:
            raise _err(node, f"action {name}: undeclared type {t!r}")
    variables = {p for p, _ in params}
    pre = _conjunction(fields.get(":precondition", Node()), f"action {name} precondition", variables)
    add, dele = _effects(fields.get(":effect", Node()), f"action {name} effect", variables)
    kind = fields.get(":kind")
    if kind is None or isinstance(kind, Node) or str(kind) not in KINDS:
        raise _err(node, f"action {name}: :kind must be one of {KINDS}")
    for atom in pre | add | dele:
        pred = predicates.get(atom[0])
        if pred is None:
            raise _err(node, f"action {name}: unknown predicate {atom[0]!r}")
        if len(atom) - 1 != len(pred.types):
            raise _err(node, f"action {name}: {atom[0]} takes {len(pred.types)} arguments")
    try:
        return ActionSchema(name, tuple(params), pre, add, dele, str(kind))
    except ValueError as exc:
        raise _err(node, str(exc)) from None


def parse_problem(text: str) -> Problem:
    form = read_sexpr(text)
    name = _head(form, "problem")
    sec = _sections(form, {":domain", ":objects", ":init", ":goal"})
    for key in (":domain", ":init", ":goal"):
        if key not in sec:
            raise _err(form, f"problem is missing {key}")
    dom = sec[":domain"][0]
    if len(dom) != 2 or isinstance(dom[1], Node):
        raise _err(dom, "expected (:domain <name>)")
    objects = dict(typed_list(sec.get(":objects", [Node([":objects"])])[0][1:], ":objects"))
    init = frozenset(_atom(x, ":init") for x in sec[":init"][0][1:])
    goal_node = sec[":goal"][0]
    if len(goal_node) != 2:
        raise _err(goal_node, "expected (:goal <conjunction>)")
    goal = _conjunction(goal_node[1], ":goal")
    for a in goal | init:
        if any(t.startswith("?") for t in a[1:]):
            raise _err(goal_node, f"variables are not allowed in problems: {a}")
    return Problem(name, str(dom[1]), objects, init, goal)


def load_domain(path: Union[str, Path]) -> Domain:
    return parse_domain(Path(path).read_text(encoding="utf-8"))


def load_problem(path: Union[str, Path]) -> Problem:
    return parse_problem(Path(path).read_text(encoding="utf-8"))


def fetch_domain() -> Domain:
    return load_domain(DATA_DIR / "fetch_domain.txt")


def fetch_problem() -> Problem:
    return load_problem(DATA_DIR / "fetch_problem.txt")
