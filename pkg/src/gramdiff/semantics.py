"""Semantic context: visible callables, nominal type hierarchy, scoped names.

The context answers the queries that make sampled code valid-by-construction:
which types have producers, which callables return a requested type, and
which identifiers are still fresh.  It is extracted from a declarative seed
document rather than parsed from source files, so the engine stays
compiler-agnostic.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable

CALLABLE_KINDS = ("function", "property", "constructor", "variable", "constant")

_COUNTED_NAME_RE = re.compile(r"([A-Za-z_]+?)(\d+)$")


class SeedError(ValueError):
    """Malformed seed document."""


class SubtypeCycleError(SeedError):
    pass


class UnknownTypeError(ValueError):
    pass


class DuplicateSignatureError(ValueError):
    pass


class TypeConflictError(ValueError):
    """Same type declared with different supertype edges on both merge sides."""


@dataclass(frozen=True)
class Callable:
    name: str
    kind: str
    params: tuple[str, ...]
    returns: str
    scope_depth: int = 0

    @property
    def signature(self) -> tuple[str, tuple[str, ...]]:
        return (self.name, self.params)


class SemanticContext:
    """Mutable registry of types, callables, and per-depth name tables."""

    def __init__(self) -> None:
        self.supertypes: dict[str, tuple[str, ...]] = {}
        self.callables: list[Callable] = []
        self.scope_names: list[set[str]] = [set()]
        self.counters: dict[str, int] = {}

    # -- types

    @property
    def depth(self) -> int:
        return len(self.scope_names) - 1

    def types(self) -> tuple[str, ...]:
        return tuple(self.supertypes)

    def declare_type(self, name: str, supertypes: Iterable[str] = ()) -> None:
        if not name:
            raise SeedError("type name must be non-empty")
        edges = tuple(supertypes)
        if name in self.supertypes:
            if self.supertypes[name] != edges:
                raise TypeConflictError(
                    f"type {name} declared with conflicting supertypes"
                )
            return
        self.supertypes[name] = edges

    def require_type(self, name: str) -> None:
        if name not in self.supertypes:
            raise UnknownTypeError(f"unknown type: {name}")

    def is_subtype(self, sub: str, sup: str) -> bool:
        """Reflexive-transitive subtype query (closure computed, not stored)."""
        if sub == sup:
            return True
        seen: set[str] = set()
        work = [sub]
        while work:
            current = work.pop()
            if current == sup:
                return True
            if current in seen:
                continue
            seen.add(current)
            work.extend(self.supertypes.get(current, ()))
        return False

    def _check_acyclic(self) -> None:
        state: dict[str, int] = {}

        def visit(node: str) -> None:
            state[node] = 1
            for parent in self.supertypes.get(node, ()):
                mark = state.get(parent, 0)
                if mark == 1:
                    raise SubtypeCycleError(f"subtype cycle through {parent}")
                if mark == 0:
                    visit(parent)
            state[node] = 2

        for name in self.supertypes:
            if state.get(name, 0) == 0:
                visit(name)

    # -- scopes and names

    def enter_scope(self) -> None:
        self.scope_names.append(set())

    def exit_scope(self) -> None:
        if len(self.scope_names) == 1:
            raise RuntimeError("cannot exit the root scope")
        self.scope_names.pop()
        depth = len(self.scope_names)
        self.callables = [c for c in self.callables if c.scope_depth < depth]

    def names_in_scope(self) -> frozenset[str]:
        out: set[str] = set()
        for table in self.scope_names:
            out |= table
        return frozenset(out)

    def fresh_identifier(self, prefix: str) -> str:
        """A name guaranteed never to collide with any name seen so far.

        Counters only move forward, so names stay unique across the whole
        lifetime of the context, including scopes that have already exited.
        """
        counter = self.counters.get(prefix, 0)
        visible = self.names_in_scope()
        name = f"{prefix}{counter}"
        while name in visible:
            counter += 1
            name = f"{prefix}{counter}"
        self.counters[prefix] = counter + 1
        return name

    def _bump_counter(self, name: str) -> None:
        match = _COUNTED_NAME_RE.match(name)
        if match:
            prefix, index = match.group(1), int(match.group(2))
            if self.counters.get(prefix, 0) <= index:
                self.counters[prefix] = index + 1

    # -- callables

    def declare(self, c: Callable) -> None:
        """Register a callable; rejects duplicate function signatures in scope."""
        if c.kind not in CALLABLE_KINDS:
            raise ValueError(f"unknown callable kind: {c.kind}")
        self.require_type(c.returns)
        for param in c.params:
            self.require_type(param)
        if c.kind == "function":
            for other in self.callables:
                if (
                    other.kind == "function"
                    and other.scope_depth == c.scope_depth
                    and other.signature == c.signature
                ):
                    raise DuplicateSignatureError(
                        f"duplicate function signature: {c.name}({', '.join(c.params)})"
                    )
        self.callables.append(c)
        self.scope_names[c.scope_depth].add(c.name)
        self._bump_counter(c.name)

    def declare_here(self, name: str, kind: str, params: Iterable[str], returns: str) -> Callable:
        c = Callable(name, kind, tuple(params), returns, self.depth)
        self.declare(c)
        return c

    def visible_callables(self) -> list[Callable]:
        """Callables visible at the current depth, in declaration order."""
        depth = self.depth
        return [c for c in self.callables if c.scope_depth <= depth]

    def callables_returning(self, type_name: str, allow_subtypes: bool = True) -> list[Callable]:
        self.require_type(type_name)
        out = []
        for c in self.visible_callables():
            if c.returns == type_name or (allow_subtypes and self.is_subtype(c.returns, type_name)):
                out.append(c)
        return out

    def sampleable_types(self) -> list[str]:
        """Types with at least one producer, in declaration order."""
        return [t for t in self.supertypes if self.callables_returning(t, allow_subtypes=True)]

    # -- lifecycle

    def clone(self) -> "SemanticContext":
        out = SemanticContext()
        out.supertypes = dict(self.supertypes)
        out.callables = list(self.callables)
        out.scope_names = [set(table) for table in self.scope_names]
        out.counters = dict(self.counters)
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SemanticContext):
            return NotImplemented
        return (
            self.supertypes == other.supertypes
            and self.callables == other.callables
            and self.scope_names == other.scope_names
            and self.counters == other.counters
        )


def extract_context(seed_text: str) -> SemanticContext:
    """Build the root context from a seed-declaration document.

    The seed is a JSON document with ``types`` (name, supertypes) and
    ``callables`` (name, kind, params, returns).  Every referenced type must
    be declared and the subtype edges must form a partial order.
    """
    try:
        data = json.loads(seed_text)
    except json.JSONDecodeError as exc:
        raise SeedError(f"seed parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(data, dict):
        raise SeedError("seed document must be a JSON object")

    ctx = SemanticContext()
    for entry in data.get("types", []):
        name = entry.get("name")
        if not isinstance(name, str) or not name:
            raise SeedError("type entries need a non-empty name")
        ctx.declare_type(name, tuple(entry.get("supertypes", ())))
    for name, supers in ctx.supertypes.items():
        for sup in supers:
            if sup not in ctx.supertypes:
                raise UnknownTypeError(f"unknown type: {sup} (supertype of {name})")
    ctx._check_acyclic()

    for entry in data.get("callables", []):
        try:
            c = Callable(
                name=entry["name"],
                kind=entry["kind"],
                params=tuple(entry.get("params", ())),
                returns=entry["returns"],
                scope_depth=0,
            )
        except KeyError as exc:
            raise SeedError(f"callable entry missing field {exc}")
        ctx.declare(c)
    return ctx


def clone_context(ctx: SemanticContext) -> SemanticContext:
    """Deep, independent copy; mutations to the clone never reach the original."""
    return ctx.clone()


def merge_contexts(base: SemanticContext, overlay: SemanticContext) -> SemanticContext:
    """Union of two root contexts, freshening overlay names that collide.

    A colliding function signature (same name and parameter types) or a
    colliding non-function name is renamed with an ``_k`` suffix, keeping
    the merge total.  Same type declared with different supertype edges on
    the two sides is irreconcilable and raises :class:`TypeConflictError`.
    """
    merged = base.clone()
    for name, supers in overlay.supertypes.items():
        merged.declare_type(name, supers)

    def collides(c: Callable) -> bool:
        for existing in merged.callables:
            if existing.name != c.name:
                continue
            if c.kind == "function" and existing.kind == "function":
                if existing.params == c.params:
                    return True
            else:
                return True
        return False

    for c in overlay.callables:
        candidate = c
        if collides(candidate):
            suffix = 1
            while collides(candidate):
                candidate = Callable(
                    f"{c.name}_{suffix}", c.kind, c.params, c.returns, c.scope_depth
                )
                suffix += 1
        merged.declare(candidate)
    return merged


def signature_conflicts(
    a: Iterable[tuple[str, tuple[str, ...]]],
    b: Iterable[tuple[str, tuple[str, ...]]],
) -> frozenset[tuple[str, tuple[str, ...]]]:
    """(name, parameter types) pairs present in both signature sets."""
    return frozenset(a) & frozenset(b)
