"""Variation operators, diversity fitness, and the two genetic algorithms.

Both algorithms evolve populations of blocks toward structural diversity.
The single-objective GA (SODGA) minimizes ``1 / (1 + dis(B, P))`` where
``dis`` is the distance from a block's feature vector to its nearest
neighbor in the population; the many-objective GA (MODGA) maximizes
``(-size, feature counts...)`` under Pareto domination and maintains an
elitist archive of mutually non-dominated blocks.
"""

from __future__ import annotations

import logging
import math
import re
import time
from dataclasses import dataclass
from random import Random
from typing import Callable, Iterable, Optional, Sequence

from gramdiff.generator import Sampler, SamplerConfig, SampleError, derive_seed
from gramdiff.grammar import EnrichedGrammar
from gramdiff.ir import (
    Block,
    DependencyCycleError,
    FeatureVector,
    Fragment,
    Snippet,
    declared_function_names,
    feature_vector,
    identifiers_in,
    remove_partition,
    self_sufficient_partition,
    signature_conflicts,
    topo_order,
)
from gramdiff.semantics import SemanticContext, merge_contexts

log = logging.getLogger(__name__)

DISTANCE_KINDS = ("l2", "linf")


@dataclass
class Population:
    members: list[Block]
    generation: int = 0


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 50
    tournament_size: int = 10
    crossover_rate: float = 0.75
    mutation_rate: float = 0.8
    distance: str = "l2"
    mate_retries: int = 10
    elite_carry: int = 1


# ---------------------------------------------------------------------------
# Distances and fitness


def distance(a: FeatureVector, b: FeatureVector, kind: str = "l2") -> float:
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)}")
    if kind == "l2":
        return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
    if kind == "linf":
        return float(max(abs(x - y) for x, y in zip(a, b)))
    raise ValueError(f"unknown distance kind: {kind!r}")


def min_distance(vector: FeatureVector, others: Iterable[FeatureVector], kind: str) -> float:
    """Distance to the nearest of ``others``; +inf over an empty set."""
    best = math.inf
    for other in others:
        d = distance(vector, other, kind)
        if d < best:
            best = d
    return best


def dissimilarity(block: Block, population: Sequence[Block], kind: str = "l2") -> float:
    """Distance from a block to its most similar other member.

    The block is excluded from its own comparison set by identity, so a
    value-equal duplicate still counts (and yields distance zero).
    """
    vector = feature_vector(block)
    others = [feature_vector(b) for b in population if b is not block]
    return min_distance(vector, others, kind)


def fitness_so(block: Block, population: Sequence[Block], kind: str = "l2") -> float:
    """Single-objective diversity fitness, minimized: 1 / (1 + dis)."""
    dis = dissimilarity(block, population, kind)
    return 0.0 if math.isinf(dis) else 1.0 / (1.0 + dis)


def _fitness_from_vectors(index: int, vectors: Sequence[FeatureVector], kind: str) -> float:
    dis = min_distance(vectors[index], [v for i, v in enumerate(vectors) if i != index], kind)
    return 0.0 if math.isinf(dis) else 1.0 / (1.0 + dis)


def fitness_mo(block: Block) -> tuple:
    """Many-objective vector, all entries maximized: (-size, feature counts)."""
    vector = feature_vector(block)
    return (-vector[0],) + tuple(vector[1:])


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """Pareto domination for maximized objective vectors."""
    return all(x >= y for x, y in zip(a, b)) and any(x > y for x, y in zip(a, b))


# ---------------------------------------------------------------------------
# Selection


def tournament_select(
    parents: Population,
    offspring: Sequence[Block],
    kind: str,
    tournament_size: int,
    rng: Random,
    elite_carry: int = 1,
) -> Population:
    """Next population of the parents' size via repeated tournaments.

    Fitness is evaluated against the combined candidate pool; lower wins,
    ties break uniformly at random.  The globally best candidate is carried
    over explicitly so pure tournament luck cannot lose it.
    """
    n = len(parents.members)
    pool = list(parents.members) + list(offspring)
    if len(pool) < n:
        raise ValueError("candidate pool smaller than population size")
    vectors = [feature_vector(b) for b in pool]
    fitnesses = [_fitness_from_vectors(i, vectors, kind) for i in range(len(pool))]

    chosen: list[Block] = []
    if elite_carry:
        best = min(range(len(pool)), key=lambda i: (fitnesses[i], i))
        chosen.extend(pool[best] for _ in range(min(elite_carry, n)))
    while len(chosen) < n:
        size = min(tournament_size, len(pool))
        contestants = rng.sample(range(len(pool)), size)
        best_fit = min(fitnesses[i] for i in contestants)
        winners = [i for i in contestants if fitnesses[i] == best_fit]
        chosen.append(pool[rng.choice(winners)])
    return Population(chosen, parents.generation + 1)


def domination_counts(objectives: Sequence[tuple]) -> list[int]:
    """For each candidate, how many other candidates dominate it."""
    counts = [0] * len(objectives)
    for i, a in enumerate(objectives):
        for j, b in enumerate(objectives):
            if i != j and dominates(b, a):
                counts[i] += 1
    return counts


def domination_rank_select(
    parents: Population,
    offspring: Sequence[Block],
    rng: Random,
) -> Population:
    """Fill the next population rank by rank of Pareto-domination count.

    Candidates dominated by fewer others come first; the final partially
    fitting rank is sampled randomly.
    """
    n = len(parents.members)
    pool = list(parents.members) + list(offspring)
    if len(pool) < n:
        raise ValueError("candidate pool smaller than population size")
    counts = domination_counts([fitness_mo(b) for b in pool])
    by_rank: dict[int, list[int]] = {}
    for index, count in enumerate(counts):
        by_rank.setdefault(count, []).append(index)
    chosen: list[Block] = []
    for rank in sorted(by_rank):
        members = by_rank[rank]
        remaining = n - len(chosen)
        if remaining <= 0:
            break
        if len(members) <= remaining:
            chosen.extend(pool[i] for i in members)
        else:
            chosen.extend(pool[i] for i in rng.sample(members, remaining))
    return Population(chosen, parents.generation + 1)


# ---------------------------------------------------------------------------
# Elitist archive


class ElitistArchive:
    """Mutually non-dominated blocks under the many-objective fitness.

    At most one entry is kept per distinct feature vector (the first one
    offered wins); an insertion evicts every entry it strictly dominates.
    """

    def __init__(self) -> None:
        self.entries: list[tuple[Block, FeatureVector]] = []

    def __len__(self) -> int:
        return len(self.entries)

    def vectors(self) -> list[FeatureVector]:
        return [vector for _, vector in self.entries]

    def objectives(self) -> list[tuple]:
        return [(-v[0],) + tuple(v[1:]) for v in self.vectors()]

    def update(self, blocks: Iterable[Block]) -> int:
        """Offer blocks to the archive; returns how many were inserted."""
        inserted = 0
        for block in blocks:
            vector = tuple(feature_vector(block))
            objective = (-vector[0],) + vector[1:]
            have = {v: (-v[0],) + tuple(v[1:]) for _, v in self.entries}
            if vector in have:
                continue
            if any(dominates(obj, objective) for obj in have.values()):
                continue
            self.entries = [
                (b, v) for b, v in self.entries if not dominates(objective, have[v])
            ]
            self.entries.append((block, vector))
            inserted += 1
        return inserted

    def assert_mutually_nondominated(self) -> None:
        objectives = self.objectives()
        for i, a in enumerate(objectives):
            for j, b in enumerate(objectives):
                if i != j and dominates(a, b):
                    raise AssertionError("archive entries must not dominate each other")


def pareto_front_vectors(vectors: Iterable[FeatureVector]) -> set[FeatureVector]:
    """Brute-force Pareto front over distinct feature vectors."""
    distinct = list(dict.fromkeys(tuple(v) for v in vectors))
    objectives = {v: (-v[0],) + tuple(v[1:]) for v in distinct}
    front = set()
    for v in distinct:
        if not any(dominates(objectives[w], objectives[v]) for w in distinct if w != v):
            front.add(v)
    return front


# ---------------------------------------------------------------------------
# Variation operators


def block_context(root_ctx: SemanticContext, block: Block) -> SemanticContext:
    """Context overlay holding the block's top-level callables.

    Nested function names are reserved in the overlay's name table (without
    becoming producers) so that fresh identifiers drawn from the merged
    context can never shadow them.
    """
    overlay = SemanticContext()
    overlay.supertypes = dict(root_ctx.supertypes)
    for snippet in block.snippets:
        if snippet.kind in ("function", "variable", "property", "constant"):
            try:
                overlay.declare_here(snippet.name, snippet.kind, snippet.params, snippet.returns)
            except ValueError:
                # Offspring may carry duplicate names; keep the first.
                continue
    for name in declared_function_names(block):
        overlay.scope_names[0].add(name)
        overlay._bump_counter(name)
    return overlay


def mutate_removal(block: Block, rng: Random) -> Block:
    """Remove the self-sufficient partition of a uniformly chosen snippet."""
    if not block.snippets:
        return block
    seed = block.snippets[rng.randrange(len(block.snippets))]
    return remove_partition(block, self_sufficient_partition(block, seed))


def _collision_renames(declared: set[str], taken: frozenset[str]) -> dict[str, str]:
    """Suffix-``_k`` rename map for every declared name that is taken."""
    renames: dict[str, str] = {}
    occupied = set(taken) | set(declared)
    for name in sorted(declared & taken):
        suffix = 1
        fresh = f"{name}_{suffix}"
        while fresh in occupied:
            suffix += 1
            fresh = f"{name}_{suffix}"
        renames[name] = fresh
        occupied.add(fresh)
    return renames


_QUOTED_SPAN_RE = re.compile(r"'[^'\n]'|\"[^\"\n]*\"")
_IDENT_TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def rename_snippet(snippet: Snippet, renames: dict[str, str]) -> Snippet:
    """Rewrite a snippet under an identifier rename map.

    Quoted literals are left untouched; feature tags are unaffected by a
    pure rename.
    """

    def swap(match: "re.Match[str]") -> str:
        return renames.get(match.group(0), match.group(0))

    def rename_text(text: str) -> str:
        out = []
        pos = 0
        for quoted in _QUOTED_SPAN_RE.finditer(text):
            out.append(_IDENT_TOKEN_RE.sub(swap, text[pos:quoted.start()]))
            out.append(quoted.group(0))
            pos = quoted.end()
        out.append(_IDENT_TOKEN_RE.sub(swap, text[pos:]))
        return "".join(out)

    fragments = []
    for f in snippet.fragments:
        text = rename_text(f.text)
        fragments.append(Fragment(text, identifiers_in(text), f.feature_tags))
    return Snippet(
        name=renames.get(snippet.name, snippet.name),
        kind=snippet.kind,
        params=snippet.params,
        returns=snippet.returns,
        depends_on=tuple(renames.get(d, d) for d in snippet.depends_on),
        fragments=tuple(fragments),
    )


def _append_sampled(block: Block, sampled: Block) -> Block:
    """Append a sampled block's snippets, freshening name collisions once.

    Collisions cover top-level names and nested function names on both
    sides: a nested function shadowing a visible same-named function is a
    conflict, not a legal shadow.
    """
    incoming = list(sampled.snippets)
    taken = block.names() | declared_function_names(block)
    incoming_declared = {s.name for s in incoming} | declared_function_names(sampled)
    if incoming_declared & taken:
        renames = _collision_renames(incoming_declared, taken)
        incoming = [rename_snippet(s, renames) for s in incoming]
    try:
        return topo_order(Block(block.snippets + tuple(incoming)))
    except DependencyCycleError:
        # Name collisions across origins can fabricate spurious edges; keep
        # concatenation order (each part is internally ordered already).
        return Block(block.snippets + tuple(incoming))


def mutate_add_context_free(
    block: Block,
    root_ctx: SemanticContext,
    grammar: EnrichedGrammar,
    cfg: SamplerConfig,
    rng: Random,
) -> Block:
    """Sample a fresh block from the root context and append its snippets."""
    sampler = Sampler(grammar, cfg)
    sampled = sampler.sample_block(root_ctx, rng)
    return _append_sampled(block, sampled)


def mutate_add_context_aware(
    block: Block,
    root_ctx: SemanticContext,
    grammar: EnrichedGrammar,
    cfg: SamplerConfig,
    rng: Random,
) -> Block:
    """Sample from the merge of the root context and the block's own context.

    The fresh snippets may therefore reference the block's declarations.
    """
    sampler = Sampler(grammar, cfg)
    merged = merge_contexts(root_ctx.clone(), block_context(root_ctx, block))
    sampled = sampler.sample_block_in_context(merged, rng, initial_peers=block.names())
    return _append_sampled(block, sampled)


def recombine(p1: Block, p2: Block, rng: Random) -> tuple[Block, Block]:
    """Swap two random self-sufficient partitions between parent blocks.

    Mate-pair conflict analysis happens before this call; the duplicate-name
    constraint may still be violated across the splice and offspring are
    produced regardless.
    """
    if not p1.snippets or not p2.snippets:
        return p1, p2
    x1 = self_sufficient_partition(p1, p1.snippets[rng.randrange(len(p1.snippets))])
    x2 = self_sufficient_partition(p2, p2.snippets[rng.randrange(len(p2.snippets))])
    o1 = _splice(remove_partition(p1, x1), x2)
    o2 = _splice(remove_partition(p2, x2), x1)
    return o1, o2


def _splice(remainder: Block, incoming: Block) -> Block:
    merged = Block(remainder.snippets + incoming.snippets)
    try:
        return topo_order(merged)
    except DependencyCycleError:
        return merged


# ---------------------------------------------------------------------------
# The genetic algorithms


@dataclass
class RunHooks:
    """Observation points for campaign integration; all optional."""

    on_block: Optional[Callable[[int, Block], None]] = None
    on_snapshot: Optional[Callable[[float, dict], None]] = None
    on_archive_offer: Optional[Callable[[int, list[FeatureVector]], None]] = None
    snapshot_interval: Optional[float] = None


class _Emitter:
    def __init__(self, hooks: RunHooks):
        self.hooks = hooks
        self.counter = 0

    def emit(self, block: Block) -> None:
        if self.hooks.on_block is not None:
            self.hooks.on_block(self.counter, block)
        self.counter += 1


def _initial_population(
    sampler: Sampler,
    root_ctx: SemanticContext,
    cfg: SamplerConfig,
    n: int,
    emitter: _Emitter,
) -> Population:
    members: list[Block] = []
    index = 0
    while len(members) < n:
        rng = Random(derive_seed(cfg.rng_seed, index))
        index += 1
        try:
            block = sampler.sample_block(root_ctx, rng)
        except SampleError as exc:
            log.warning("initial sample aborted: %s", exc)
            continue
        members.append(block)
        emitter.emit(block)
    return Population(members, generation=0)


def _make_offspring(
    population: Population,
    sampler: Sampler,
    root_ctx: SemanticContext,
    cfg: SamplerConfig,
    ga: GAConfig,
    rng: Random,
    emitter: _Emitter,
    parent_pick: Callable[[Random], Block],
) -> list[Block]:
    """One offspring batch: tournament parents, guarded crossover, mutation."""
    offspring: list[Block] = []
    grammar = sampler.g
    while len(offspring) < ga.population_size:
        first = parent_pick(rng)
        second = parent_pick(rng)
        pair = (first, second)
        changed = [False, False]
        if rng.random() < ga.crossover_rate:
            mate = second
            for _ in range(ga.mate_retries):
                if not signature_conflicts(first.signatures(), mate.signatures()):
                    break
                mate = parent_pick(rng)
            if not signature_conflicts(first.signatures(), mate.signatures()):
                pair = recombine(first, mate, rng)
                changed = [True, True]
        out: list[Block] = []
        for index, child in enumerate(pair):
            if rng.random() < ga.mutation_rate:
                choice = rng.randrange(3)
                if choice == 0:
                    mutated = mutate_removal(child, rng)
                elif choice == 1:
                    mutated = mutate_add_context_free(child, root_ctx, grammar, cfg, rng)
                else:
                    mutated = mutate_add_context_aware(child, root_ctx, grammar, cfg, rng)
                if mutated is not child:
                    child = mutated
                    changed[index] = True
            out.append(child)
        for index, child in enumerate(out):
            if changed[index]:
                emitter.emit(child)
            offspring.append(child)
    return offspring[: ga.population_size]


def _binary_tournament_so(population: Population, kind: str) -> Callable[[Random], Block]:
    members = population.members
    vectors = [feature_vector(b) for b in members]
    fits = [_fitness_from_vectors(i, vectors, kind) for i in range(len(members))]

    def pick(rng: Random) -> Block:
        i = rng.randrange(len(members))
        j = rng.randrange(len(members))
        return members[i] if fits[i] <= fits[j] else members[j]

    return pick


def _binary_tournament_mo(population: Population) -> Callable[[Random], Block]:
    members = population.members
    counts = domination_counts([fitness_mo(b) for b in members])

    def pick(rng: Random) -> Block:
        i = rng.randrange(len(members))
        j = rng.randrange(len(members))
        return members[i] if counts[i] <= counts[j] else members[j]

    return pick


def population_fitness_sum(population: Population, kind: str) -> float:
    vectors = [feature_vector(b) for b in population.members]
    return sum(_fitness_from_vectors(i, vectors, kind) for i in range(len(vectors)))


def _snapshot_due(started: float, last: float, interval: Optional[float], clock) -> Optional[float]:
    if interval is None:
        return None
    elapsed = clock() - started
    if elapsed - last >= interval:
        return elapsed
    return None


def run_sodga(
    grammar: EnrichedGrammar,
    root_ctx: SemanticContext,
    cfg: SamplerConfig,
    ga: GAConfig,
    budget_seconds: Optional[float],
    max_generations: Optional[int] = None,
    hooks: Optional[RunHooks] = None,
    clock: Callable[[], float] = time.monotonic,
) -> Population:
    """Single-objective diversity GA; returns the most diverse population seen.

    Population diversity is compared by the sum of per-member fitness values
    (smaller sum = more diverse under the minimized fitness).
    """
    if ga.population_size < 2:
        raise ValueError("population size must be at least 2")
    hooks = hooks or RunHooks()
    sampler = Sampler(grammar, cfg)
    emitter = _Emitter(hooks)
    rng = Random(derive_seed(cfg.rng_seed, -1))
    started = clock()
    last_snapshot = 0.0

    population = _initial_population(sampler, root_ctx, cfg, ga.population_size, emitter)
    best = population
    best_sum = population_fitness_sum(population, ga.distance)

    while True:
        if budget_seconds is not None and clock() - started >= budget_seconds:
            break
        if max_generations is not None and population.generation >= max_generations:
            break
        pick = _binary_tournament_so(population, ga.distance)
        offspring = _make_offspring(population, sampler, root_ctx, cfg, ga, rng, emitter, pick)
        population = tournament_select(
            population, offspring, ga.distance, ga.tournament_size, rng, ga.elite_carry
        )
        current_sum = population_fitness_sum(population, ga.distance)
        if current_sum < best_sum:
            best = population
            best_sum = current_sum
        stamp = _snapshot_due(started, last_snapshot, hooks.snapshot_interval, clock)
        if stamp is not None and hooks.on_snapshot is not None:
            last_snapshot = stamp
            hooks.on_snapshot(stamp, _population_snapshot(population, ga.distance, best_sum))
    return best


def _population_snapshot(population: Population, kind: str, best_sum: float) -> dict:
    vectors = [feature_vector(b) for b in population.members]
    fits = [_fitness_from_vectors(i, vectors, kind) for i in range(len(vectors))]
    return {
        "kind": "population",
        "generation": population.generation,
        "fitness_sum": sum(fits),
        "best_fitness_sum": best_sum,
        "members": [
            {"vector": list(v), "size": v[0], "fitness": f}
            for v, f in zip(vectors, fits)
        ],
    }


def run_modga(
    grammar: EnrichedGrammar,
    root_ctx: SemanticContext,
    cfg: SamplerConfig,
    ga: GAConfig,
    budget_seconds: Optional[float],
    max_generations: Optional[int] = None,
    hooks: Optional[RunHooks] = None,
    clock: Callable[[], float] = time.monotonic,
) -> ElitistArchive:
    """Many-objective diversity GA; returns the elitist archive."""
    if ga.population_size < 2:
        raise ValueError("population size must be at least 2")
    hooks = hooks or RunHooks()
    sampler = Sampler(grammar, cfg)
    emitter = _Emitter(hooks)
    rng = Random(derive_seed(cfg.rng_seed, -1))
    started = clock()
    last_snapshot = 0.0

    archive = ElitistArchive()
    population = _initial_population(sampler, root_ctx, cfg, ga.population_size, emitter)

    while True:
        if budget_seconds is not None and clock() - started >= budget_seconds:
            break
        if max_generations is not None and population.generation >= max_generations:
            break
        if hooks.on_archive_offer is not None:
            hooks.on_archive_offer(
                population.generation, [feature_vector(b) for b in population.members]
            )
        archive.update(population.members)
        pick = _binary_tournament_mo(population)
        offspring = _make_offspring(population, sampler, root_ctx, cfg, ga, rng, emitter, pick)
        population = domination_rank_select(population, offspring, rng)
        stamp = _snapshot_due(started, last_snapshot, hooks.snapshot_interval, clock)
        if stamp is not None and hooks.on_snapshot is not None:
            last_snapshot = stamp
            hooks.on_snapshot(stamp, _archive_snapshot(archive, population))
    return archive


def _archive_snapshot(archive: ElitistArchive, population: Population) -> dict:
    return {
        "kind": "archive",
        "generation": population.generation,
        "archive_size": len(archive),
        "entries": [{"vector": list(v), "size": v[0]} for v in archive.vectors()],
    }
