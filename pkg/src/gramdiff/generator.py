"""Random sampling of valid programs from the enriched grammar.

The sampler walks the grammar from its start symbol.  Plain nodes expand by
their default structural rules; hook nodes run one of the six built-in
sampling procedures, which query and mutate the per-sample clone of the
semantic context so that every emitted construct resolves and type-checks.

Expression sampling is governed by the simplicity bias: with probability
``simplicity_bias`` a simple expression (literal, name reference, call) is
emitted, otherwise a complex one (if-expression or elvis-expression) whose
operands recurse with one less depth.  At depth zero only leaf expressions
are allowed, which bounds every expansion.
"""

from __future__ import annotations

import logging
import time
from collections import Counter
from dataclasses import dataclass
from random import Random
from typing import Callable, Optional

from gramdiff.grammar import EnrichedGrammar, GrammarError, GrammarNode
from gramdiff.ir import Block, Fragment, Snippet, make_snippet, topo_order
from gramdiff.semantics import SemanticContext, UnknownTypeError

log = logging.getLogger(__name__)

KEYWORD_NODES = ("fun", "var", "val", "return", "if", "else", "?:")


@dataclass(frozen=True)
class SamplerConfig:
    simplicity_bias: float = 0.5
    max_expr_depth: int = 6
    rng_seed: int = 0
    fragment_budget: int = 200
    hook_retries: int = 8
    max_fun_nesting: int = 1  # nested function declarations allowed this deep

    def __post_init__(self) -> None:
        if not 0.0 <= self.simplicity_bias <= 1.0:
            raise ValueError("simplicity_bias must be within [0, 1]")
        if self.max_expr_depth < 1:
            raise ValueError("max_expr_depth must be at least 1")


class UnsatisfiableContextError(RuntimeError):
    """No callable or type in the context can satisfy the request."""


class SampleError(RuntimeError):
    """Sampling aborted after bounded retries."""


@dataclass(frozen=True)
class ExprResult:
    text: str
    tags: tuple[tuple[str, int], ...]

    def counter(self) -> Counter:
        return Counter(dict(self.tags))


def _merge_tags(*parts: Counter) -> Counter:
    out: Counter = Counter()
    for part in parts:
        out.update(part)
    return out


class _BlockState:
    def __init__(self, initial_peers: frozenset[str]):
        self.snippets: list[Snippet] = []
        self.peer_names: set[str] = set(initial_peers)
        self.fragment_count = 0

    def add(self, snippet: Snippet) -> None:
        self.snippets.append(snippet)
        self.peer_names.add(snippet.name)
        self.fragment_count += len(snippet.fragments)


class Sampler:
    """One sampler per worker; shares only the immutable grammar."""

    def __init__(self, grammar: EnrichedGrammar, cfg: SamplerConfig):
        self.g = grammar
        self.cfg = cfg
        self.kw = {name: self._terminal_or(name, name) for name in KEYWORD_NODES}
        self.body_bounds = self._bounds("body", (1, 3))
        self.param_bounds = self._bounds("param_list", (0, 2))
        type_node = grammar.nodes.get("type_name")
        self.type_names: tuple[str, ...] = type_node.children if type_node else ()

    def _terminal_or(self, node_id: str, fallback: str) -> str:
        node = self.g.nodes.get(node_id)
        if node is not None and node.kind == "terminal":
            return node.id
        return fallback

    def _bounds(self, node_id: str, fallback: tuple[int, int]) -> tuple[int, int]:
        node = self.g.nodes.get(node_id)
        if node is not None and node.kind == "repetition":
            return node.min_count, node.max_count
        return fallback

    # -- entry points

    def sample_block(self, root_ctx: SemanticContext, rng: Random) -> Block:
        """Sample one self-contained block from a clone of the root context."""
        return self.sample_block_in_context(root_ctx.clone(), rng)

    def sample_block_in_context(
        self,
        ctx: SemanticContext,
        rng: Random,
        initial_peers: frozenset[str] = frozenset(),
    ) -> Block:
        """Sample a block mutating ``ctx`` directly.

        ``initial_peers`` names snippets the new code may depend on; the
        context-aware addition operator passes the host block's names here.
        """
        state = _BlockState(initial_peers)
        self._expand_top(self.g.node(self.g.start), ctx, rng, state)
        return topo_order(Block(tuple(state.snippets)))

    # -- top-level traversal

    def _expand_top(self, node: GrammarNode, ctx: SemanticContext, rng: Random, state: _BlockState) -> None:
        if node.kind == "terminal":
            self._add_text_snippet(node.id, ctx, state)
            return
        if node.kind == "hook":
            self._top_hook(node.hook_id, ctx, rng, state)
            return
        if node.kind == "sequence":
            for child in node.children:
                self._expand_top(self.g.node(child), ctx, rng, state)
            return
        if node.kind == "alternation":
            weights = node.weights or [1.0] * len(node.children)
            child = rng.choices(node.children, weights=weights, k=1)[0]
            self._expand_top(self.g.node(child), ctx, rng, state)
            return
        if node.kind == "repetition":
            count = rng.randint(node.min_count, node.max_count)
            for _ in range(count):
                if state.fragment_count >= self.cfg.fragment_budget:
                    break
                self._expand_top(self.g.node(node.children[0]), ctx, rng, state)
            return
        if node.kind == "optional":
            if rng.random() < 0.5:
                self._expand_top(self.g.node(node.children[0]), ctx, rng, state)
            return
        raise GrammarError(f"node {node.id!r} has unknown kind {node.kind!r}")

    def _add_text_snippet(self, text: str, ctx: SemanticContext, state: _BlockState) -> None:
        name = ctx.fresh_identifier("s")
        fragment = Fragment.from_text(text)
        state.add(make_snippet(name, "text", (), "Any", [fragment], state.peer_names))

    def _top_hook(self, hook_id: str, ctx: SemanticContext, rng: Random, state: _BlockState) -> None:
        last: Optional[Exception] = None
        for attempt in range(self.cfg.hook_retries):
            try:
                if hook_id == "fun_decl":
                    state.add(self._fun_snippet(ctx, rng, state))
                elif hook_id == "property_decl":
                    state.add(self._property_snippet(ctx, rng, state))
                else:
                    fragments = self._statement_hook(hook_id, ctx, rng, nesting=0)
                    name = ctx.fresh_identifier("s")
                    state.add(make_snippet(name, "text", (), "Any", fragments, state.peer_names))
                return
            except UnsatisfiableContextError as exc:
                last = exc
        raise SampleError(f"hook {hook_id!r} unsatisfiable after {self.cfg.hook_retries} retries: {last}")

    # -- declaration hooks

    def _decl_types(self, ctx: SemanticContext) -> list[str]:
        """Types the profile lists that currently have at least one producer."""
        names = self.type_names or ctx.types()
        out = [t for t in names if t in ctx.supertypes and ctx.callables_returning(t)]
        if not out:
            raise UnsatisfiableContextError("no sampleable type available")
        return out

    def _property_snippet(self, ctx: SemanticContext, rng: Random, state: _BlockState) -> Snippet:
        fragment, name, kind, type_name = self._declaration_fragment(ctx, rng)
        return make_snippet(name, kind, (), type_name, [fragment], state.peer_names)

    def hook_sample(self, hook_id: str, ctx: SemanticContext, rng: Random, target: Optional[str] = None):
        """Run one registered hook against a context.

        Declaration hooks return a :class:`Snippet`, statement hooks a list
        of fragments, and the expression hook (which needs a ``target``
        type) an :class:`ExprResult`.  Raises
        :class:`UnsatisfiableContextError` when the context cannot satisfy
        the hook's preconditions.
        """
        if hook_id not in self.g.hook_registry:
            raise GrammarError(f"hook {hook_id!r} is not registered")
        if hook_id == "expression":
            if target is None:
                raise ValueError("the expression hook needs a target type")
            return self._expression(target, ctx, rng, self.cfg.max_expr_depth)
        if hook_id == "fun_decl":
            name, params, returns, fragments = self._fun_parts(ctx, rng, nesting=0)
            return make_snippet(name, "function", params, returns, fragments, frozenset())
        if hook_id == "property_decl":
            fragment, name, kind, type_name = self._declaration_fragment(ctx, rng)
            return make_snippet(name, kind, (), type_name, [fragment], frozenset())
        return self._statement_hook(hook_id, ctx, rng, nesting=0)

    def _declaration_fragment(self, ctx: SemanticContext, rng: Random) -> tuple[Fragment, str, str, str]:
        type_name = rng.choice(self._decl_types(ctx))
        expr = self._expression(type_name, ctx, rng, self.cfg.max_expr_depth)
        mutable = rng.random() < 0.5
        keyword = self.kw["var"] if mutable else self.kw["val"]
        kind = "variable" if mutable else "property"
        name = ctx.fresh_identifier("v")
        ctx.declare_here(name, kind, (), type_name)
        tags = _merge_tags(expr.counter(), Counter({"declaration-statement": 1}))
        text = f"{keyword} {name}: {type_name} = {expr.text}"
        return Fragment.from_text(text, tags), name, kind, type_name

    def _fun_snippet(self, ctx: SemanticContext, rng: Random, state: _BlockState) -> Snippet:
        name, params, returns, fragments = self._fun_parts(ctx, rng, nesting=0)
        return make_snippet(name, "function", params, returns, fragments, state.peer_names)

    def _fun_parts(
        self, ctx: SemanticContext, rng: Random, nesting: int
    ) -> tuple[str, tuple[str, ...], str, list[Fragment]]:
        decl_types = self._decl_types(ctx)
        name = ctx.fresh_identifier("f")
        param_count = rng.randint(*self.param_bounds)
        params = [(ctx.fresh_identifier("p"), rng.choice(decl_types)) for _ in range(param_count)]
        returns = rng.choice(decl_types)
        rendered_params = ", ".join(f"{p}: {t}" for p, t in params)
        header = f"{self.kw['fun']} {name}({rendered_params}): {returns} {{"
        fragments = [Fragment.from_text(header, Counter({"function-declaration": 1}))]

        ctx.enter_scope()
        for p, t in params:
            ctx.declare_here(p, "property", (), t)
        statement_count = rng.randint(*self.body_bounds)
        for _ in range(statement_count):
            fragments.extend(self._statement(ctx, rng, nesting))
        expr = self._expression(returns, ctx, rng, self.cfg.max_expr_depth)
        fragments.append(Fragment.from_text(f"{self.kw['return']} {expr.text}", expr.counter()))
        fragments.append(Fragment.from_text("}"))
        ctx.exit_scope()

        ctx.declare_here(name, "function", tuple(t for _, t in params), returns)
        return name, tuple(t for _, t in params), returns, fragments

    # -- statement hooks

    def _statement(self, ctx: SemanticContext, rng: Random, nesting: int) -> list[Fragment]:
        node = self.g.nodes.get("statement")
        if node is None or node.kind != "alternation":
            return self._statement_hook("local_decl", ctx, rng, nesting)
        children = list(node.children)
        weights = list(node.weights or [1.0] * len(children))
        last: Optional[Exception] = None
        for attempt in range(self.cfg.hook_retries):
            if not children:
                break
            child_id = rng.choices(children, weights=weights, k=1)[0]
            hook_id = self.g.node(child_id).hook_id or child_id
            try:
                return self._statement_hook(hook_id, ctx, rng, nesting)
            except UnsatisfiableContextError as exc:
                # Fall back on the remaining alternatives instead of
                # redrawing a kind the context cannot satisfy.
                last = exc
                index = children.index(child_id)
                del children[index]
                del weights[index]
        raise SampleError(f"statement unsatisfiable after bounded retries: {last}")

    def _statement_hook(self, hook_id: str, ctx: SemanticContext, rng: Random, nesting: int) -> list[Fragment]:
        if hook_id == "local_decl":
            fragment, _, _, _ = self._declaration_fragment(ctx, rng)
            return [fragment]
        if hook_id == "assign_stmt":
            return [self._assignment_fragment(ctx, rng)]
        if hook_id == "call_stmt":
            return [self._call_fragment(ctx, rng)]
        if hook_id == "fun_decl":
            if nesting >= self.cfg.max_fun_nesting:
                raise UnsatisfiableContextError("function nesting limit reached")
            _, _, _, fragments = self._fun_parts(ctx, rng, nesting + 1)
            return fragments
        if hook_id == "expression":
            raise UnsatisfiableContextError("bare expressions are not statements")
        raise GrammarError(f"unknown statement hook {hook_id!r}")

    def _assignment_fragment(self, ctx: SemanticContext, rng: Random) -> Fragment:
        targets = [c for c in ctx.visible_callables() if c.kind == "variable"]
        if not targets:
            raise UnsatisfiableContextError("no mutable variable in scope")
        target = rng.choice(targets)
        expr = self._expression(target.returns, ctx, rng, self.cfg.max_expr_depth)
        tags = _merge_tags(expr.counter(), Counter({"assignment-statement": 1}))
        return Fragment.from_text(f"{target.name} = {expr.text}", tags)

    def _call_fragment(self, ctx: SemanticContext, rng: Random) -> Fragment:
        candidates = [c for c in ctx.visible_callables() if c.kind in ("function", "constructor")]
        if not candidates:
            raise UnsatisfiableContextError("no callable in scope")
        callee = rng.choice(candidates)
        expr = self._call_expression(callee, ctx, rng, self.cfg.max_expr_depth - 1)
        return Fragment.from_text(expr.text, expr.counter())

    # -- expressions

    def sample_expression(self, target: str, ctx: SemanticContext, rng: Random, depth: int) -> ExprResult:
        """Public expression hook; ``depth`` bounds compound nesting."""
        return self._expression(target, ctx, rng, depth)

    def _expression(self, target: str, ctx: SemanticContext, rng: Random, depth: int) -> ExprResult:
        producers = ctx.callables_returning(target, allow_subtypes=True)
        if depth <= 0 or rng.random() < self.cfg.simplicity_bias:
            return self._simple_expression(target, producers, ctx, rng, depth)
        return self._complex_expression(target, producers, ctx, rng, depth)

    def _simple_expression(
        self,
        target: str,
        producers: list,
        ctx: SemanticContext,
        rng: Random,
        depth: int,
    ) -> ExprResult:
        leaves = [c for c in producers if c.kind in ("constant", "variable", "property")]
        calls = [c for c in producers if c.kind in ("function", "constructor")]
        if depth <= 0:
            pool = leaves or [c for c in calls if not c.params]
        else:
            pool = leaves + calls
        if not pool:
            raise UnsatisfiableContextError(f"no producer for type {target}")
        chosen = rng.choice(pool)
        if chosen.kind in ("function", "constructor"):
            return self._call_expression(chosen, ctx, rng, depth - 1)
        return ExprResult(chosen.name, ())

    def _call_expression(self, callee, ctx: SemanticContext, rng: Random, depth: int) -> ExprResult:
        args = [self._expression(param, ctx, rng, depth) for param in callee.params]
        text = f"{callee.name}({', '.join(a.text for a in args)})"
        tags = _merge_tags(Counter({"call-expression": 1}), *(a.counter() for a in args))
        return ExprResult(text, tuple(sorted(tags.items())))

    def _complex_expression(
        self,
        target: str,
        producers: list,
        ctx: SemanticContext,
        rng: Random,
        depth: int,
    ) -> ExprResult:
        want_if = rng.random() < 0.5
        if want_if:
            try:
                cond = self._expression("Bool", ctx, rng, depth - 1)
            except (UnsatisfiableContextError, UnknownTypeError):
                want_if = False
            else:
                then = self._expression(target, ctx, rng, depth - 1)
                other = self._expression(target, ctx, rng, depth - 1)
                text = (
                    f"({self.kw['if']} ({cond.text}) {then.text} "
                    f"{self.kw['else']} {other.text})"
                )
                tags = _merge_tags(
                    Counter({"if-expression": 1}), cond.counter(), then.counter(), other.counter()
                )
                return ExprResult(text, tuple(sorted(tags.items())))
        lhs = self._expression(target, ctx, rng, depth - 1)
        rhs = self._expression(target, ctx, rng, depth - 1)
        text = f"({lhs.text} {self.kw['?:']} {rhs.text})"
        tags = _merge_tags(Counter({"elvis-expression": 1}), lhs.counter(), rhs.counter())
        return ExprResult(text, tuple(sorted(tags.items())))


def derive_seed(base_seed: int, index: int) -> int:
    """Stable per-sample seed; never depends on interpreter hash state."""
    return base_seed * 1_000_003 + index


def run_random_search(
    grammar: EnrichedGrammar,
    root_ctx: SemanticContext,
    cfg: SamplerConfig,
    budget_seconds: Optional[float],
    max_programs: Optional[int] = None,
    on_block: Optional[Callable[[int, Block], None]] = None,
    clock: Callable[[], float] = time.monotonic,
) -> list[Block]:
    """Random search: clone the root context, sample one block, append.

    Runs until the time budget is exhausted or ``max_programs`` blocks have
    been collected; per-sample failures are logged and skipped.
    """
    if budget_seconds is None and max_programs is None:
        raise ValueError("need a time budget or a program cap")
    sampler = Sampler(grammar, cfg)
    archive: list[Block] = []
    started = clock()
    index = 0
    while True:
        if budget_seconds is not None and clock() - started >= budget_seconds:
            break
        if max_programs is not None and len(archive) >= max_programs:
            break
        rng = Random(derive_seed(cfg.rng_seed, index))
        index += 1
        try:
            block = sampler.sample_block(root_ctx, rng)
        except SampleError as exc:
            log.warning("sample %d aborted: %s", index - 1, exc)
            continue
        archive.append(block)
        if on_block is not None:
            on_block(index - 1, block)
    return archive
