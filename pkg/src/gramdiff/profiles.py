"""Access to the shipped mini-language grammar profile and seed context."""

from __future__ import annotations

from importlib import resources

from gramdiff.grammar import EnrichedGrammar, load_grammar
from gramdiff.semantics import SemanticContext, extract_context


def shipped_grammar_text() -> str:
    return resources.files("gramdiff").joinpath("profiles/minilang_grammar.json").read_text("utf-8")


def shipped_seed_text() -> str:
    return resources.files("gramdiff").joinpath("profiles/minilang_seed.json").read_text("utf-8")


def shipped_grammar() -> EnrichedGrammar:
    return load_grammar(shipped_grammar_text())


def shipped_context() -> SemanticContext:
    return extract_context(shipped_seed_text())
