"""Hierarchical code representation: blocks of snippets of fragments.

A fragment is one line of program text annotated with the identifiers it
uses and the language-feature counts it contributes.  A snippet is a named
top-level declaration (its signature metadata, its dependencies on sibling
snippets, and its ordered fragments).  A block is an ordered, self-contained
list of snippets; rendering a block appends the mandatory empty ``main``
footer so every program is a complete compilation unit.
"""

from __future__ import annotations

import heapq
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

FEATURES = (
    "function-declaration",
    "declaration-statement",
    "assignment-statement",
    "call-expression",
    "if-expression",
    "elvis-expression",
)

FEATURE_VECTOR_SIZE = len(FEATURES) + 1  # leading entry is program size

MAIN_FOOTER = "fun main() {}"

RESERVED_WORDS = frozenset({"fun", "var", "val", "return", "if", "else", "true", "false"})

_QUOTED_RE = re.compile(r"'[^'\n]'|\"[^\"\n]*\"")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_FUN_NAME_RE = re.compile(r"\bfun\s+([A-Za-z_][A-Za-z0-9_]*)\s*\(")

FeatureVector = tuple  # 7 natural numbers: (size, per-feature counts)


class DependencyCycleError(ValueError):
    def __init__(self, names: Sequence[str]):
        super().__init__(f"dependency cycle among snippets: {', '.join(names)}")
        self.names = tuple(names)


class SignatureConflictError(ValueError):
    def __init__(self, conflicts: Iterable[tuple[str, tuple[str, ...]]]):
        pairs = sorted(conflicts)
        rendered = ", ".join(f"{name}({', '.join(params)})" for name, params in pairs)
        super().__init__(f"conflicting signatures: {rendered}")
        self.conflicts = frozenset(pairs)


def identifiers_in(text: str) -> frozenset[str]:
    """Identifier tokens in a line of program text, reserved words excluded.

    Quoted char/string literals are stripped first so their contents never
    count as identifiers.
    """
    bare = _QUOTED_RE.sub(" ", text)
    return frozenset(tok for tok in _IDENT_RE.findall(bare) if tok not in RESERVED_WORDS)


def declared_function_names(block: "Block") -> frozenset[str]:
    """Function names declared anywhere in the block, nested scopes included.

    Function names must not shadow each other across scopes, so appends and
    splices need the full set, not just the top-level snippet names.
    """
    names: set[str] = set()
    for snippet in block.snippets:
        for fragment in snippet.fragments:
            for match in _FUN_NAME_RE.finditer(fragment.text):
                names.add(match.group(1))
    return frozenset(names)


@dataclass(frozen=True)
class Fragment:
    text: str
    referenced_names: frozenset[str]
    feature_tags: tuple[tuple[str, int], ...] = ()

    @classmethod
    def from_text(cls, text: str, tags: Optional[Counter] = None) -> "Fragment":
        counts = tuple(sorted((tags or Counter()).items()))
        return cls(text, identifiers_in(text), counts)


@dataclass(frozen=True)
class Snippet:
    name: str
    kind: str  # function | variable | property | constant | text
    params: tuple[str, ...]
    returns: str
    depends_on: tuple[str, ...]
    fragments: tuple[Fragment, ...]

    @property
    def signature(self) -> tuple[str, tuple[str, ...]]:
        return (self.name, self.params)

    def referenced(self) -> frozenset[str]:
        out: set[str] = set()
        for fragment in self.fragments:
            out |= fragment.referenced_names
        return frozenset(out)


@dataclass(frozen=True)
class Block:
    snippets: tuple[Snippet, ...] = ()

    def __len__(self) -> int:
        return len(self.snippets)

    def names(self) -> frozenset[str]:
        return frozenset(s.name for s in self.snippets)

    def signatures(self) -> frozenset[tuple[str, tuple[str, ...]]]:
        return frozenset(s.signature for s in self.snippets)


def make_snippet(
    name: str,
    kind: str,
    params: Sequence[str],
    returns: str,
    fragments: Sequence[Fragment],
    known_peer_names: Iterable[str],
) -> Snippet:
    """Build a snippet, deriving its dependency list from its fragments."""
    peers = set(known_peer_names)
    peers.discard(name)
    referenced: set[str] = set()
    for fragment in fragments:
        referenced |= fragment.referenced_names
    deps = tuple(sorted(referenced & peers))
    return Snippet(name, kind, tuple(params), returns, deps, tuple(fragments))


def _dependency_edges(snippets: Sequence[Snippet]) -> list[set[int]]:
    """Per-snippet provider indices.  Duplicate names map to every provider."""
    providers: dict[str, list[int]] = {}
    for index, snippet in enumerate(snippets):
        providers.setdefault(snippet.name, []).append(index)
    edges: list[set[int]] = []
    for index, snippet in enumerate(snippets):
        deps: set[int] = set()
        for name in snippet.depends_on:
            deps.update(i for i in providers.get(name, ()) if i != index)
        edges.append(deps)
    return edges


def topo_order(block: Block) -> Block:
    """Reorder snippets so every dependency precedes its dependents.

    Stable: snippets with no ordering constraint keep their relative order.
    Raises :class:`DependencyCycleError` when the dependency relation has a
    cycle.
    """
    snippets = block.snippets
    edges = _dependency_edges(snippets)
    dependents: list[set[int]] = [set() for _ in snippets]
    indegree = [0] * len(snippets)
    for index, deps in enumerate(edges):
        indegree[index] = len(deps)
        for dep in deps:
            dependents[dep].add(index)
    ready = [i for i, d in enumerate(indegree) if d == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        index = heapq.heappop(ready)
        order.append(index)
        for dependent in dependents[index]:
            indegree[dependent] -= 1
            if indegree[dependent] == 0:
                heapq.heappush(ready, dependent)
    if len(order) != len(snippets):
        stuck = [snippets[i].name for i, d in enumerate(indegree) if d > 0]
        raise DependencyCycleError(stuck)
    return Block(tuple(snippets[i] for i in order))


def self_sufficient_partition(block: Block, seed: Snippet) -> Block:
    """Minimal sub-block containing ``seed`` that is closed under both
    dependency directions.

    The closure starts from the seed snippet, then alternates between adding
    everything the members depend on and everything that depends on a member
    until a fixed point is reached; the result keeps the original snippet
    order and is itself a valid self-contained block.
    """
    snippets = block.snippets
    try:
        seed_index = next(i for i, s in enumerate(snippets) if s is seed)
    except StopIteration:
        raise ValueError("seed snippet is not part of the block") from None
    edges = _dependency_edges(snippets)
    dependents: list[set[int]] = [set() for _ in snippets]
    for index, deps in enumerate(edges):
        for dep in deps:
            dependents[dep].add(index)
    member = {seed_index}
    work = [seed_index]
    while work:
        index = work.pop()
        for neighbor in edges[index] | dependents[index]:
            if neighbor not in member:
                member.add(neighbor)
                work.append(neighbor)
    return Block(tuple(snippets[i] for i in sorted(member)))


def remove_partition(block: Block, partition: Block) -> Block:
    """Remove a self-sufficient partition; the remainder stays self-contained."""
    removed = {id(s) for s in partition.snippets}
    return Block(tuple(s for s in block.snippets if id(s) not in removed))


def signature_conflicts(
    a: Iterable[tuple[str, tuple[str, ...]]],
    b: Iterable[tuple[str, tuple[str, ...]]],
) -> frozenset[tuple[str, tuple[str, ...]]]:
    """Signatures (name, parameter types) present in both sets."""
    return frozenset(a) & frozenset(b)


def append_snippets(block: Block, snippets: Sequence[Snippet]) -> Block:
    """Append snippets, re-running conflict checks and topological ordering."""
    conflicts = signature_conflicts(block.signatures(), (s.signature for s in snippets))
    if conflicts:
        raise SignatureConflictError(conflicts)
    return topo_order(Block(block.snippets + tuple(snippets)))


def render(block: Block) -> str:
    """Program text: snippets in order, one fragment per line, plus footer."""
    lines = [f.text for s in block.snippets for f in s.fragments]
    lines.append(MAIN_FOOTER)
    return "\n".join(lines) + "\n"


def feature_vector(block: Block) -> FeatureVector:
    """Size plus the six per-feature counts summed over all fragments."""
    counts = Counter()
    for snippet in block.snippets:
        for fragment in snippet.fragments:
            for feature, count in fragment.feature_tags:
                counts[feature] += count
    return (len(render(block)),) + tuple(counts.get(f, 0) for f in FEATURES)


def validate_block(block: Block) -> None:
    """Raise if block invariants do not hold.

    Checks self-containment (every dependency names a member snippet), the
    conflicting-signature exclusion, and that the stored order is already
    topological.
    """
    names = block.names()
    for snippet in block.snippets:
        missing = set(snippet.depends_on) - names
        if missing:
            raise ValueError(f"snippet {snippet.name} depends on missing {sorted(missing)}")
    signatures = [s.signature for s in block.snippets]
    if len(set(signatures)) != len(signatures):
        seen: set = set()
        dupes = set()
        for sig in signatures:
            if sig in seen:
                dupes.add(sig)
            seen.add(sig)
        raise SignatureConflictError(dupes)
    for index, deps in enumerate(_dependency_edges(block.snippets)):
        for dep in deps:
            if dep > index:
                raise ValueError(
                    f"snippet {block.snippets[index].name} precedes its dependency "
                    f"{block.snippets[dep].name}"
                )
