"""Enriched context-free grammar: a symbol graph with sampling hooks.

Plain nodes (terminal, sequence, alternation, repetition, optional) expand
by their default structural rules; hook nodes name a registered sampling
procedure that queries the semantic context instead.  Recursion is only
legal through hook nodes, which consume a depth budget, so sampling always
terminates.

Profile format (JSON): top-level ``start`` plus ``nodes`` mapping each id to
``{kind, children?, weights?, min?, max?, hook?}``.  A terminal's literal is
its id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from random import Random
from typing import Callable, Optional

NODE_KINDS = ("terminal", "alternation", "sequence", "repetition", "optional", "hook")

# Hook procedures shipped with the generator; profiles may only reference
# hooks that the loader is told about.
DEFAULT_HOOK_IDS = frozenset(
    {"fun_decl", "property_decl", "local_decl", "assign_stmt", "call_stmt", "expression"}
)

DEFAULT_PLAIN_DEPTH_CAP = 64


class GrammarError(ValueError):
    pass


class ProfileParseError(GrammarError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"profile parse error at line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class DanglingReferenceError(GrammarError):
    def __init__(self, missing: str, referrer: str):
        super().__init__(f"node {referrer!r} references undeclared symbol {missing!r}")
        self.missing = missing


class UnregisteredHookError(GrammarError):
    def __init__(self, hook_id: str, node: str):
        super().__init__(f"node {node!r} uses unregistered hook {hook_id!r}")
        self.hook_id = hook_id


class DepthCapExceededError(GrammarError):
    def __init__(self, node: str, cap: int):
        super().__init__(
            f"depth cap {cap} exceeded at node {node!r}: recursion is not hook-bounded"
        )


@dataclass(frozen=True)
class GrammarNode:
    id: str
    kind: str
    children: tuple[str, ...] = ()
    weights: Optional[tuple[float, ...]] = None
    min_count: int = 0
    max_count: int = 1
    hook_id: Optional[str] = None


@dataclass(frozen=True)
class EnrichedGrammar:
    nodes: dict[str, GrammarNode]
    start: str
    hook_registry: frozenset[str]

    def node(self, node_id: str) -> GrammarNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise DanglingReferenceError(node_id, "<lookup>") from None

    def terminal_text(self, node_id: str) -> str:
        node = self.node(node_id)
        if node.kind != "terminal":
            raise GrammarError(f"node {node_id!r} is not a terminal")
        return node.id

    def repetition_bounds(self, node_id: str) -> tuple[int, int]:
        node = self.node(node_id)
        if node.kind != "repetition":
            raise GrammarError(f"node {node_id!r} is not a repetition")
        return node.min_count, node.max_count


def _validate(g: EnrichedGrammar) -> None:
    if g.start not in g.nodes:
        raise DanglingReferenceError(g.start, "<start>")
    for node in g.nodes.values():
        if node.kind not in NODE_KINDS:
            raise GrammarError(f"node {node.id!r} has unknown kind {node.kind!r}")
        for child in node.children:
            if child not in g.nodes:
                raise DanglingReferenceError(child, node.id)
        if node.kind == "terminal" and node.children:
            raise GrammarError(f"terminal {node.id!r} must have no children")
        if node.kind == "hook":
            if node.hook_id is None:
                raise GrammarError(f"hook node {node.id!r} names no hook")
            if node.hook_id not in g.hook_registry:
                raise UnregisteredHookError(node.hook_id, node.id)
        elif node.hook_id is not None:
            raise GrammarError(f"non-hook node {node.id!r} must not name a hook")
        if node.kind in ("repetition", "optional") and len(node.children) != 1:
            raise GrammarError(f"{node.kind} node {node.id!r} needs exactly one child")
        if node.kind == "repetition" and not 0 <= node.min_count <= node.max_count:
            raise GrammarError(f"repetition {node.id!r} has invalid bounds")
        if node.kind == "alternation":
            if not node.children:
                raise GrammarError(f"alternation {node.id!r} needs children")
            if node.weights is not None and len(node.weights) != len(node.children):
                raise GrammarError(f"alternation {node.id!r} weight count mismatch")
    _reject_plain_cycles(g)


def _reject_plain_cycles(g: EnrichedGrammar) -> None:
    """Cycles that avoid every hook node make plain expansion diverge."""
    state: dict[str, int] = {}

    def visit(node_id: str, trail: list[str]) -> None:
        node = g.nodes[node_id]
        if node.kind == "hook":
            return
        mark = state.get(node_id, 0)
        if mark == 1:
            cycle = trail[trail.index(node_id):] + [node_id]
            raise GrammarError(
                "cycle without a hook node: " + " -> ".join(cycle)
            )
        if mark == 2:
            return
        state[node_id] = 1
        trail.append(node_id)
        for child in node.children:
            visit(child, trail)
        trail.pop()
        state[node_id] = 2

    for node_id in g.nodes:
        if state.get(node_id, 0) == 0:
            visit(node_id, [])


def load_grammar(profile_text: str, known_hooks: frozenset[str] = DEFAULT_HOOK_IDS) -> EnrichedGrammar:
    """Parse and validate a grammar-profile document."""
    try:
        data = json.loads(profile_text)
    except json.JSONDecodeError as exc:
        raise ProfileParseError(exc.msg, exc.lineno, exc.colno)
    if not isinstance(data, dict) or "start" not in data or "nodes" not in data:
        raise ProfileParseError("profile needs top-level 'start' and 'nodes'")

    nodes: dict[str, GrammarNode] = {}
    for node_id, spec in data["nodes"].items():
        if not isinstance(spec, dict) or "kind" not in spec:
            raise ProfileParseError(f"node {node_id!r} needs a 'kind'")
        weights = spec.get("weights")
        nodes[node_id] = GrammarNode(
            id=node_id,
            kind=spec["kind"],
            children=tuple(spec.get("children", ())),
            weights=tuple(weights) if weights is not None else None,
            min_count=int(spec.get("min", 0)),
            max_count=int(spec.get("max", 1)),
            hook_id=spec.get("hook"),
        )
    grammar = EnrichedGrammar(nodes=nodes, start=data["start"], hook_registry=frozenset(known_hooks))
    _validate(grammar)
    return grammar


def truncate(
    g: EnrichedGrammar,
    cut_points: set[str],
    replacement_hooks: dict[str, str],
    known_hooks: Optional[frozenset[str]] = None,
) -> EnrichedGrammar:
    """Replace each cut-point node with a hook node.

    No symbol or rule is added; the cut nodes lose their children, so parts
    of the graph may become unreachable (they are kept, but prunable).
    """
    registry = g.hook_registry | (known_hooks or frozenset())
    for cut in cut_points:
        if cut not in g.nodes:
            raise GrammarError(f"unknown cut point: {cut!r}")
        hook_id = replacement_hooks.get(cut)
        if hook_id is None:
            raise GrammarError(f"cut point {cut!r} has no replacement hook")
        if hook_id not in registry:
            raise UnregisteredHookError(hook_id, cut)
    nodes = dict(g.nodes)
    for cut in cut_points:
        nodes[cut] = GrammarNode(id=cut, kind="hook", hook_id=replacement_hooks[cut])
    return EnrichedGrammar(nodes=nodes, start=g.start, hook_registry=registry)


def reachable_nodes(g: EnrichedGrammar) -> frozenset[str]:
    seen: set[str] = set()
    work = [g.start]
    while work:
        node_id = work.pop()
        if node_id in seen:
            continue
        seen.add(node_id)
        work.extend(g.nodes[node_id].children)
    return frozenset(seen)


HookSampler = Callable[[str, "EnrichedGrammar", object, Random, int], str]


def default_sample(
    node: GrammarNode,
    g: EnrichedGrammar,
    ctx: object,
    rng: Random,
    depth: int = 0,
    hook_sampler: Optional[HookSampler] = None,
    max_depth: int = DEFAULT_PLAIN_DEPTH_CAP,
) -> str:
    """Default structural expansion of a node into program text.

    Terminals yield their literal (their id); sequences concatenate child
    samples in order; alternations choose one weighted child; repetitions
    expand their child between min and max times; optionals expand their
    child or nothing.  Hook nodes are delegated to ``hook_sampler``.
    """
    if depth > max_depth:
        raise DepthCapExceededError(node.id, max_depth)
    if node.kind == "terminal":
        return node.id
    if node.kind == "hook":
        if hook_sampler is None:
            raise GrammarError(f"hook node {node.id!r} reached without a hook sampler")
        return hook_sampler(node.hook_id, g, ctx, rng, depth)
    if node.kind == "sequence":
        parts = [
            default_sample(g.node(child), g, ctx, rng, depth + 1, hook_sampler, max_depth)
            for child in node.children
        ]
        return " ".join(p for p in parts if p)
    if node.kind == "alternation":
        weights = node.weights or [1.0] * len(node.children)
        child = rng.choices(node.children, weights=weights, k=1)[0]
        return default_sample(g.node(child), g, ctx, rng, depth + 1, hook_sampler, max_depth)
    if node.kind == "repetition":
        count = rng.randint(node.min_count, node.max_count)
        parts = [
            default_sample(g.node(node.children[0]), g, ctx, rng, depth + 1, hook_sampler, max_depth)
            for _ in range(count)
        ]
        return " ".join(p for p in parts if p)
    if node.kind == "optional":
        if rng.random() < 0.5:
            return default_sample(g.node(node.children[0]), g, ctx, rng, depth + 1, hook_sampler, max_depth)
        return ""
    raise GrammarError(f"node {node.id!r} has unknown kind {node.kind!r}")
