import random
import re
from collections import Counter

import pytest

from gramdiff.ir import (
    Block,
    DependencyCycleError,
    FEATURES,
    Fragment,
    MAIN_FOOTER,
    SignatureConflictError,
    Snippet,
    append_snippets,
    feature_vector,
    identifiers_in,
    make_snippet,
    remove_partition,
    render,
    self_sufficient_partition,
    topo_order,
    validate_block,
)


def snippet(name, deps=(), params=(), text=None):
    """Synthetic snippet whose fragment text honestly references its deps."""
    body = text if text is not None else f"val {name}: Int = plus({', '.join(deps) or '1'})"
    fragment = Fragment.from_text(body)
    return Snippet(name, "property", tuple(params), "Int", tuple(sorted(deps)), (fragment,))


def chain(*names):
    """names[i+1] depends on names[i]."""
    out = [snippet(names[0])]
    for prev, cur in zip(names, names[1:]):
        out.append(snippet(cur, deps=(prev,)))
    return Block(tuple(out))


# -- tokenizer / fragment invariant


def test_identifiers_skip_reserved_and_quoted():
    text = 'var v0: Int = (if (true) plus(v1, 1) else chr(0))'
    assert identifiers_in(text) == {"v0", "Int", "plus", "v1", "chr"}
    assert identifiers_in('val v2: String = "plus v9"') == {"v2", "String"}
    assert identifiers_in("val v3: Char = 'f'") == {"v3", "Char"}


def test_fragment_referenced_names_match_tokenizer(block_pool):
    for block in block_pool[:20]:
        for snip in block.snippets:
            for fragment in snip.fragments:
                assert fragment.referenced_names == identifiers_in(fragment.text)


# -- topological order


def test_topo_singleton_unchanged():
    b = Block((snippet("s1"),))
    assert topo_order(b).snippets == b.snippets


def test_topo_forced_edge():
    s1 = snippet("s1")
    s2 = snippet("s2", deps=("s1",))
    ordered = topo_order(Block((s2, s1)))
    assert [s.name for s in ordered.snippets] == ["s1", "s2"]


def test_topo_stability_among_independent():
    independents = Block(tuple(snippet(f"s{i}") for i in range(6)))
    assert topo_order(independents).snippets == independents.snippets


def test_topo_cycle_error_lists_names():
    a = snippet("a", deps=("b",))
    b = snippet("b", deps=("a",))
    with pytest.raises(DependencyCycleError) as err:
        topo_order(Block((a, b)))
    assert {"a", "b"} <= set(err.value.names)


def random_dag_block(rng, n):
    snippets = []
    names = [f"s{i}" for i in range(n)]
    for i, name in enumerate(names):
        deps = tuple(names[j] for j in range(i) if rng.random() < 0.35)
        snippets.append(snippet(name, deps=deps))
    order = list(range(n))
    rng.shuffle(order)
    return Block(tuple(snippets[i] for i in order))


def test_topo_satisfies_all_edges_on_random_dags():
    rng = random.Random(2)
    for _ in range(200):
        block = random_dag_block(rng, rng.randint(1, 10))
        ordered = topo_order(block)
        position = {s.name: i for i, s in enumerate(ordered.snippets)}
        # Edge-satisfaction oracle: every dependency strictly precedes.
        for snip in ordered.snippets:
            for dep in snip.depends_on:
                assert position[dep] < position[snip.name]


# -- self-sufficient partitions


def closure_oracle(block, seed_name):
    """Independent fixpoint closure over both dependency directions."""
    deps = {s.name: set(s.depends_on) for s in block.snippets}
    dependents = {s.name: set() for s in block.snippets}
    for name, ds in deps.items():
        for d in ds:
            dependents[d].add(name)
    member = {seed_name}
    while True:
        grown = set(member)
        for name in member:
            grown |= deps[name]
            grown |= dependents[name]
        if grown == member:
            return member
        member = grown


def test_partition_isolated_snippet_is_singleton():
    b = Block((snippet("s1"), snippet("s2")))
    part = self_sufficient_partition(b, b.snippets[0])
    assert [s.name for s in part.snippets] == ["s1"]


def test_partition_chain_pulls_both_directions():
    b = chain("s1", "s2", "s3")
    part = self_sufficient_partition(b, b.snippets[1])
    assert [s.name for s in part.snippets] == ["s1", "s2", "s3"]


def test_partition_matches_fixpoint_oracle_on_random_graphs():
    rng = random.Random(9)
    for _ in range(300):
        block = random_dag_block(rng, rng.randint(1, 12))
        seed = block.snippets[rng.randrange(len(block.snippets))]
        part = self_sufficient_partition(block, seed)
        assert {s.name for s in part.snippets} == closure_oracle(block, seed.name)
        validate_block(topo_order(part))


def test_partition_idempotent():
    rng = random.Random(31)
    for _ in range(50):
        block = random_dag_block(rng, rng.randint(1, 10))
        seed = block.snippets[rng.randrange(len(block.snippets))]
        part = self_sufficient_partition(block, seed)
        again = self_sufficient_partition(part, seed)
        assert {s.name for s in again.snippets} == {s.name for s in part.snippets}


def test_partition_requires_member_seed():
    b = chain("s1", "s2")
    with pytest.raises(ValueError):
        self_sufficient_partition(b, snippet("elsewhere"))


# -- removal / append


def test_remove_entire_block_leaves_empty():
    b = chain("s1", "s2")
    assert remove_partition(b, b).snippets == ()


def test_remove_dependent_closed_tail_keeps_head_valid():
    b = chain("s1", "s2", "s3")
    # {s2, s3} is closed under dependents, so the remainder {s1} stays
    # self-contained even though the removed set pulls no dependencies.
    tail = Block(b.snippets[1:])
    remaining = remove_partition(b, tail)
    assert [s.name for s in remaining.snippets] == ["s1"]
    validate_block(remaining)


def test_append_rejects_signature_conflict():
    base = Block((Snippet("f0", "function", ("Int",), "Int", (), (Fragment.from_text("fun f0(p0: Int): Int {"),)),))
    clash = Snippet("f0", "function", ("Int",), "Bool", (), (Fragment.from_text("fun f0(p0: Int): Bool {"),))
    with pytest.raises(SignatureConflictError) as err:
        append_snippets(base, [clash])
    assert ("f0", ("Int",)) in err.value.conflicts


def test_append_reorders_topologically():
    s1 = snippet("s1")
    s2 = snippet("s2", deps=("s1",))
    out = append_snippets(Block((s2,)), [s1])
    assert [s.name for s in out.snippets] == ["s1", "s2"]


# -- rendering


def test_render_empty_block_is_footer_only():
    assert render(Block(())) == MAIN_FOOTER + "\n"


def test_render_single_snippet_then_footer():
    s = snippet("s1", text="val s1: Int = 1")
    assert render(Block((s,))) == "val s1: Int = 1\n" + MAIN_FOOTER + "\n"


def test_render_is_deterministic(block_pool):
    block = block_pool[0]
    assert render(block) == render(block)


# -- feature vectors


def test_feature_vector_empty_block():
    assert feature_vector(Block(())) == (len(MAIN_FOOTER) + 1, 0, 0, 0, 0, 0, 0)


def test_feature_vector_counts_direct():
    f1 = Fragment.from_text("fun f0(): Int {", Counter({"function-declaration": 1}))
    ret = Fragment.from_text("return plus(1, 0)", Counter({"call-expression": 1}))
    close = Fragment.from_text("}")
    f2 = Fragment.from_text("fun f1(): Int {", Counter({"function-declaration": 1}))
    ret2 = Fragment.from_text("return 1")
    s1 = Snippet("f0", "function", (), "Int", (), (f1, ret, close))
    s2 = Snippet("f1", "function", (), "Int", (), (f2, ret2, close))
    vec = feature_vector(Block((s1, s2)))
    assert vec[1] == 2  # function declarations
    assert vec[4] == 1  # call expressions


TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|\?:|[(){}:,=]|\d+\.\d+|\d+|'[^'\n]'|\"[^\"\n]*\"")

RESERVED = {"fun", "var", "val", "return", "if", "else", "true", "false"}


def token_scan_oracle(text):
    """Independent per-feature counts from rendered text (excluding footer)."""
    body = text[: text.rindex(MAIN_FOOTER)]
    counts = Counter()
    for line in body.splitlines():
        tokens = TOKEN_RE.findall(line)
        for i, tok in enumerate(tokens):
            prev = tokens[i - 1] if i else ""
            if tok == "fun":
                counts["function-declaration"] += 1
            elif tok in ("var", "val"):
                counts["declaration-statement"] += 1
            elif tok == "=" and i == 1:
                counts["assignment-statement"] += 1
            elif tok == "if":
                counts["if-expression"] += 1
            elif tok == "?:":
                counts["elvis-expression"] += 1
            elif (
                tok == "("
                and i
                and re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", prev)
                and prev not in RESERVED
                and (i < 2 or tokens[i - 2] != "fun")
            ):
                counts["call-expression"] += 1
    return counts


def test_feature_vector_matches_token_scan_oracle(block_pool):
    for block in block_pool:
        vec = feature_vector(block)
        text = render(block)
        assert vec[0] == len(text)
        oracle = token_scan_oracle(text)
        assert tuple(oracle.get(f, 0) for f in FEATURES) == vec[1:]


def test_feature_vector_invariant_under_reordering(block_pool):
    for block in block_pool[:10]:
        reordered = Block(tuple(reversed(block.snippets)))
        assert feature_vector(reordered)[1:] == feature_vector(block)[1:]
        assert feature_vector(reordered)[0] == feature_vector(block)[0]
