"""Lexer, parser, and type checker for the mini-language.

The language is a small statically typed subset of a Kotlin-like surface
syntax.  A program is a sequence of top-level declarations:

    fun f0(p0: Int): Int { <statements> return <expr> }
    var v0: Int = <expr>
    val v1: String = <expr>

Statements inside a function body are local ``var``/``val`` declarations,
assignments to mutable variables, bare calls, nested function declarations,
and a mandatory trailing ``return`` for functions with a declared return
type.  Expressions are literals, name references, calls, and the two
parenthesized compound forms ``(if (<e>) <e> else <e>)`` and
``(<e> ?: <e>)``.

Types are nominal: ``Any`` with subtypes ``Int``, ``Float``, ``Char``,
``Bool``, ``String``.  The standard library consists of ``plus(Int, Int):
Int``, ``concat(String, String): String``, ``chr(Int): Char``, and the two
``String`` constructors ``String()`` / ``String(String)``.

Scoping rules:

* Top-level declarations live in the file scope and are visible throughout
  the file, regardless of declaration order.
* Locals and nested functions are visible from their declaration statement
  to the end of the enclosing body; parameters are visible in the whole body.
* Variables and parameters may shadow outer names.  Functions may not:
  declaring a function whose name is already visible as a function (in the
  same scope or any outer scope) is a "conflicting overloads" error.  The
  language has no user-facing overloading.

Seeded bug profiles:

* ``D1`` silently accepts duplicate/shadowing function declarations and
  resolves calls to the first visible declaration that fits the arguments.
* ``D2`` rejects an elvis expression whose two operands are both
  constructor calls of the same type with a spurious "overload resolution
  ambiguity" error.
* ``D3`` aborts with a simulated out-of-memory crash on source files of
  10,000 or more characters.

``all`` enables D1, D2, and D3 together; ``none`` is the correct checker.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

BUG_PROFILES = ("none", "D1", "D2", "D3", "all")

OOM_SOURCE_THRESHOLD = 10_000

BUILTIN_TYPES: dict[str, tuple[str, ...]] = {
    "Any": (),
    "Int": ("Any",),
    "Float": ("Any",),
    "Char": ("Any",),
    "Bool": ("Any",),
    "String": ("Any",),
}

# name -> (param types, return type)
BUILTIN_FUNCTIONS: dict[str, tuple[tuple[str, ...], str]] = {
    "plus": (("Int", "Int"), "Int"),
    "concat": (("String", "String"), "String"),
    "chr": (("Int",), "Char"),
}

# constructed type -> tuple of parameter lists
BUILTIN_CONSTRUCTORS: dict[str, tuple[tuple[str, ...], ...]] = {
    "String": ((), ("String",)),
}

KEYWORDS = frozenset({"fun", "var", "val", "return", "if", "else", "true", "false"})


class Diagnostic(NamedTuple):
    code: str
    message: str
    line: int

    def render(self) -> str:
        return f"ERROR {self.code}: {self.message} @ line {self.line}"


@dataclass
class CheckVerdict:
    accepted: bool
    diagnostics: list[Diagnostic]


class SimulatedOutOfMemory(RuntimeError):
    """Raised by the D3 profile instead of checking oversized inputs."""


class _CheckFailure(Exception):
    """Internal: aborts checking of the current construct."""

    def __init__(self, diag: Diagnostic):
        self.diag = diag


# ---------------------------------------------------------------------------
# Lexer


class _Token(NamedTuple):
    kind: str
    text: str
    line: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<nl>\n)
  | (?P<float>\d+\.\d+)
  | (?P<int>\d+)
  | (?P<char>'[^'\n]')
  | (?P<string>"[^"\n]*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<elvis>\?:)
  | (?P<punct>[(){}:,=])
    """,
    re.VERBOSE,
)


def _lex(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    line = 1
    pos = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise _CheckFailure(
                Diagnostic("SYNTAX", f"unexpected character {source[pos]!r}", line)
            )
        pos = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        if kind == "nl":
            line += 1
            continue
        text = m.group()
        if kind == "ident" and text in KEYWORDS:
            kind = "kw"
        tokens.append(_Token(kind, text, line))
    tokens.append(_Token("eof", "", line))
    return tokens


# ---------------------------------------------------------------------------
# AST


@dataclass
class _Lit:
    type: str
    text: str
    line: int


@dataclass
class _Ref:
    name: str
    line: int


@dataclass
class _Call:
    name: str
    args: list
    line: int


@dataclass
class _If:
    cond: object
    then: object
    other: object
    line: int


@dataclass
class _Elvis:
    lhs: object
    rhs: object
    line: int


@dataclass
class _Prop:
    mutable: bool
    name: str
    type: str
    init: object
    line: int


@dataclass
class _Assign:
    name: str
    value: object
    line: int


@dataclass
class _CallStmt:
    call: _Call
    line: int


@dataclass
class _Return:
    value: object
    line: int


@dataclass
class _Fun:
    name: str
    params: list[tuple[str, str]]
    returns: Optional[str]
    body: list
    line: int


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, kind: str, text: Optional[str] = None) -> _Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            raise _CheckFailure(
                Diagnostic("SYNTAX", f"expected {want!r}, found {tok.text or 'end of input'!r}", tok.line)
            )
        return self.advance()

    def parse_program(self) -> list:
        decls = []
        while self.peek().kind != "eof":
            decls.append(self.parse_top_decl())
        return decls

    def parse_top_decl(self):
        tok = self.peek()
        if tok.kind == "kw" and tok.text == "fun":
            return self.parse_fun()
        if tok.kind == "kw" and tok.text in ("var", "val"):
            return self.parse_prop()
        raise _CheckFailure(
            Diagnostic("SYNTAX", f"expected declaration, found {tok.text!r}", tok.line)
        )

    def parse_fun(self) -> _Fun:
        start = self.expect("kw", "fun")
        name = self.expect("ident").text
        self.expect("punct", "(")
        params: list[tuple[str, str]] = []
        if not (self.peek().kind == "punct" and self.peek().text == ")"):
            while True:
                pname = self.expect("ident").text
                self.expect("punct", ":")
                ptype = self.expect("ident").text
                params.append((pname, ptype))
                if self.peek().kind == "punct" and self.peek().text == ",":
                    self.advance()
                    continue
                break
        self.expect("punct", ")")
        returns = None
        if self.peek().kind == "punct" and self.peek().text == ":":
            self.advance()
            returns = self.expect("ident").text
        self.expect("punct", "{")
        body = []
        while not (self.peek().kind == "punct" and self.peek().text == "}"):
            body.append(self.parse_stmt())
        self.expect("punct", "}")
        return _Fun(name, params, returns, body, start.line)

    def parse_prop(self) -> _Prop:
        kw = self.advance()
        name = self.expect("ident").text
        self.expect("punct", ":")
        type_name = self.expect("ident").text
        self.expect("punct", "=")
        init = self.parse_expr()
        return _Prop(kw.text == "var", name, type_name, init, kw.line)

    def parse_stmt(self):
        tok = self.peek()
        if tok.kind == "kw":
            if tok.text in ("var", "val"):
                return self.parse_prop()
            if tok.text == "fun":
                return self.parse_fun()
            if tok.text == "return":
                self.advance()
                return _Return(self.parse_expr(), tok.line)
            raise _CheckFailure(Diagnostic("SYNTAX", f"unexpected {tok.text!r}", tok.line))
        if tok.kind == "ident":
            nxt = self.tokens[self.pos + 1]
            if nxt.kind == "punct" and nxt.text == "=":
                self.advance()
                self.advance()
                return _Assign(tok.text, self.parse_expr(), tok.line)
            if nxt.kind == "punct" and nxt.text == "(":
                call = self.parse_expr()
                if not isinstance(call, _Call):
                    raise _CheckFailure(Diagnostic("SYNTAX", "expected call statement", tok.line))
                return _CallStmt(call, tok.line)
        raise _CheckFailure(Diagnostic("SYNTAX", f"unexpected {tok.text or 'end of input'!r}", tok.line))

    def parse_expr(self):
        tok = self.peek()
        if tok.kind == "punct" and tok.text == "(":
            self.advance()
            inner = self.peek()
            if inner.kind == "kw" and inner.text == "if":
                self.advance()
                self.expect("punct", "(")
                cond = self.parse_expr()
                self.expect("punct", ")")
                then = self.parse_expr()
                self.expect("kw", "else")
                other = self.parse_expr()
                self.expect("punct", ")")
                return _If(cond, then, other, inner.line)
            lhs = self.parse_expr()
            self.expect("elvis")
            rhs = self.parse_expr()
            self.expect("punct", ")")
            return _Elvis(lhs, rhs, tok.line)
        if tok.kind == "int":
            self.advance()
            return _Lit("Int", tok.text, tok.line)
        if tok.kind == "float":
            self.advance()
            return _Lit("Float", tok.text, tok.line)
        if tok.kind == "char":
            self.advance()
            return _Lit("Char", tok.text, tok.line)
        if tok.kind == "string":
            self.advance()
            return _Lit("String", tok.text, tok.line)
        if tok.kind == "kw" and tok.text in ("true", "false"):
            self.advance()
            return _Lit("Bool", tok.text, tok.line)
        if tok.kind == "ident":
            self.advance()
            if self.peek().kind == "punct" and self.peek().text == "(":
                self.advance()
                args = []
                if not (self.peek().kind == "punct" and self.peek().text == ")"):
                    while True:
                        args.append(self.parse_expr())
                        if self.peek().kind == "punct" and self.peek().text == ",":
                            self.advance()
                            continue
                        break
                self.expect("punct", ")")
                return _Call(tok.text, args, tok.line)
            return _Ref(tok.text, tok.line)
        raise _CheckFailure(
            Diagnostic("SYNTAX", f"expected expression, found {tok.text or 'end of input'!r}", tok.line)
        )


# ---------------------------------------------------------------------------
# Symbols and scopes


@dataclass(frozen=True)
class _Entry:
    name: str
    kind: str  # function | constructor | variable | property | constant
    params: tuple[str, ...]
    returns: str
    mutable: bool = False


@dataclass
class _Scope:
    entries: dict[str, list[_Entry]] = field(default_factory=dict)

    def add(self, entry: _Entry) -> None:
        self.entries.setdefault(entry.name, []).append(entry)

    def lookup(self, name: str) -> list[_Entry]:
        return self.entries.get(name, [])


def _builtin_scope() -> _Scope:
    scope = _Scope()
    for name, (params, returns) in BUILTIN_FUNCTIONS.items():
        scope.add(_Entry(name, "function", params, returns))
    for type_name, signatures in BUILTIN_CONSTRUCTORS.items():
        for params in signatures:
            scope.add(_Entry(type_name, "constructor", params, type_name))
    return scope


class _Checker:
    def __init__(self, bugs: frozenset[str]):
        self.bugs = bugs
        self.diagnostics: list[Diagnostic] = []
        self.scopes: list[_Scope] = [_builtin_scope()]

    # -- scope plumbing

    def push(self) -> None:
        self.scopes.append(_Scope())

    def pop(self) -> None:
        self.scopes.pop()

    def visible(self, name: str) -> list[_Entry]:
        """All visible entries for a name, innermost scope first."""
        found: list[_Entry] = []
        for scope in reversed(self.scopes):
            found.extend(scope.lookup(name))
        return found

    def is_subtype(self, sub: str, sup: str) -> bool:
        if sub == sup:
            return True
        seen = set()
        work = [sub]
        while work:
            t = work.pop()
            if t == sup:
                return True
            if t in seen:
                continue
            seen.add(t)
            work.extend(BUILTIN_TYPES.get(t, ()))
        return False

    def require_type(self, name: str, line: int) -> str:
        if name not in BUILTIN_TYPES:
            raise _CheckFailure(Diagnostic("UNKNOWN_TYPE", f"unknown type: {name}", line))
        return name

    def report(self, diag: Diagnostic) -> None:
        self.diagnostics.append(diag)

    # -- declarations

    def declare_function(self, fun: _Fun, entry: _Entry) -> None:
        clashes = [e for e in self.visible(fun.name) if e.kind in ("function", "constructor")]
        if clashes and "D1" not in self.bugs:
            self.report(
                Diagnostic("CONFLICTING_OVERLOADS", f"conflicting overloads: {fun.name}", fun.line)
            )
        if fun.name in BUILTIN_TYPES:
            self.report(
                Diagnostic("CONFLICTING_DECLARATIONS", f"declaration shadows builtin type: {fun.name}", fun.line)
            )
        self.scopes[-1].add(entry)

    def declare_value(self, name: str, entry: _Entry, line: int) -> None:
        if self.scopes[-1].lookup(name):
            self.report(
                Diagnostic("CONFLICTING_DECLARATIONS", f"conflicting declarations: {name}", line)
            )
        if name in BUILTIN_TYPES:
            self.report(
                Diagnostic("CONFLICTING_DECLARATIONS", f"declaration shadows builtin type: {name}", line)
            )
        self.scopes[-1].add(entry)

    # -- program checking

    def check_program(self, decls: list) -> None:
        # Top-level declarations share one file scope and are visible
        # file-wide, so names are collected before any body is checked.
        self.push()
        for decl in decls:
            if isinstance(decl, _Fun):
                for diag in self.guard(self.predeclare_fun, decl):
                    self.report(diag)
            elif isinstance(decl, _Prop):
                for diag in self.guard(self.predeclare_prop, decl):
                    self.report(diag)
        for decl in decls:
            if isinstance(decl, _Fun):
                for diag in self.guard(self.check_fun_body, decl):
                    self.report(diag)
            else:
                for diag in self.guard(self.check_prop_init, decl):
                    self.report(diag)
        self.pop()

    def guard(self, fn, *args) -> list[Diagnostic]:
        """Run a per-construct check, capturing its first failure."""
        try:
            fn(*args)
        except _CheckFailure as exc:
            return [exc.diag]
        return []

    def predeclare_fun(self, fun: _Fun) -> None:
        params = tuple(self.require_type(t, fun.line) for _, t in fun.params)
        returns = self.require_type(fun.returns, fun.line) if fun.returns else "Unit"
        self.declare_function(fun, _Entry(fun.name, "function", params, returns))

    def predeclare_prop(self, prop: _Prop) -> None:
        type_name = self.require_type(prop.type, prop.line)
        kind = "variable" if prop.mutable else "property"
        self.declare_value(prop.name, _Entry(prop.name, kind, (), type_name, prop.mutable), prop.line)

    def check_prop_init(self, prop: _Prop) -> None:
        if prop.type in BUILTIN_TYPES:
            self.check_expr(prop.init, prop.type)

    def check_fun_body(self, fun: _Fun) -> None:
        self.push()
        seen_params = set()
        for pname, ptype in fun.params:
            if pname in seen_params:
                self.report(
                    Diagnostic("DUPLICATE_PARAMETER", f"duplicate parameter: {pname}", fun.line)
                )
                continue
            seen_params.add(pname)
            if ptype in BUILTIN_TYPES:
                self.scopes[-1].add(_Entry(pname, "property", (), ptype))
        self.check_body(fun)
        self.pop()

    def check_body(self, fun: _Fun) -> None:
        body = fun.body
        for index, stmt in enumerate(body):
            is_last = index == len(body) - 1
            if isinstance(stmt, _Return):
                if fun.returns is None:
                    self.report(
                        Diagnostic("RETURN_POSITION", "return in function without return type", stmt.line)
                    )
                elif not is_last:
                    self.report(
                        Diagnostic("RETURN_POSITION", "return must be the final statement", stmt.line)
                    )
                if fun.returns in BUILTIN_TYPES:
                    for diag in self.guard(self.check_expr, stmt.value, fun.returns):
                        self.report(diag)
                continue
            for diag in self.guard(self.check_stmt, stmt):
                self.report(diag)
        if fun.returns is not None and not (body and isinstance(body[-1], _Return)):
            self.report(
                Diagnostic("RETURN_REQUIRED", f"function {fun.name} must end with return", fun.line)
            )

    def check_stmt(self, stmt) -> None:
        if isinstance(stmt, _Prop):
            type_name = self.require_type(stmt.type, stmt.line)
            # Declare even when the initializer is ill-typed, so one bad
            # initializer does not cascade into unresolved references.
            failure: Optional[_CheckFailure] = None
            try:
                self.check_expr(stmt.init, type_name)
            except _CheckFailure as exc:
                failure = exc
            kind = "variable" if stmt.mutable else "property"
            self.declare_value(stmt.name, _Entry(stmt.name, kind, (), type_name, stmt.mutable), stmt.line)
            if failure is not None:
                raise failure
        elif isinstance(stmt, _Fun):
            self.predeclare_fun(stmt)
            self.check_fun_body(stmt)
        elif isinstance(stmt, _Assign):
            entries = self.visible(stmt.name)
            if not entries:
                raise _CheckFailure(
                    Diagnostic("UNRESOLVED_REFERENCE", f"unresolved reference: {stmt.name}", stmt.line)
                )
            target = entries[0]
            if target.kind != "variable" or not target.mutable:
                raise _CheckFailure(
                    Diagnostic("ASSIGN_TO_VAL", f"{stmt.name} is not assignable", stmt.line)
                )
            self.check_expr(stmt.value, target.returns)
        elif isinstance(stmt, _CallStmt):
            self.check_expr(stmt.call, None)
        else:  # pragma: no cover - parser produces no other statement kinds
            raise _CheckFailure(Diagnostic("SYNTAX", "unsupported statement", getattr(stmt, "line", 0)))

    # -- expressions

    def check_expr(self, expr, expected: Optional[str]) -> str:
        """Check an expression against an expected type; returns its type."""
        if isinstance(expr, _Lit):
            return self.accept_type(expr.type, expected, expr.line)
        if isinstance(expr, _Ref):
            entries = self.visible(expr.name)
            if not entries:
                raise _CheckFailure(
                    Diagnostic("UNRESOLVED_REFERENCE", f"unresolved reference: {expr.name}", expr.line)
                )
            entry = entries[0]
            if entry.kind in ("function", "constructor"):
                raise _CheckFailure(
                    Diagnostic("FUNCTION_REFERENCE", f"{expr.name} is not a value", expr.line)
                )
            return self.accept_type(entry.returns, expected, expr.line)
        if isinstance(expr, _Call):
            return self.check_call(expr, expected)
        if isinstance(expr, _If):
            self.check_expr(expr.cond, "Bool")
            then_type = self.check_expr(expr.then, expected)
            other_type = self.check_expr(expr.other, expected)
            return then_type if then_type == other_type else "Any"
        if isinstance(expr, _Elvis):
            if "D2" in self.bugs and self.is_constructor_pair(expr):
                raise _CheckFailure(
                    Diagnostic(
                        "OVERLOAD_RESOLUTION_AMBIGUITY",
                        "overload resolution ambiguity between constructors",
                        expr.line,
                    )
                )
            lhs_type = self.check_expr(expr.lhs, expected)
            rhs_type = self.check_expr(expr.rhs, expected)
            return lhs_type if lhs_type == rhs_type else "Any"
        raise _CheckFailure(Diagnostic("SYNTAX", "unsupported expression", getattr(expr, "line", 0)))

    def is_constructor_pair(self, expr: _Elvis) -> bool:
        """True when both elvis operands construct the same type (the D2 trigger)."""
        if not (isinstance(expr.lhs, _Call) and isinstance(expr.rhs, _Call)):
            return False
        if expr.lhs.name != expr.rhs.name:
            return False
        resolved = [e for e in self.visible(expr.lhs.name) if e.kind == "constructor"]
        return bool(resolved)

    def accept_type(self, actual: str, expected: Optional[str], line: int) -> str:
        if expected is not None and not self.is_subtype(actual, expected):
            raise _CheckFailure(
                Diagnostic("TYPE_MISMATCH", f"expected {expected}, found {actual}", line)
            )
        return actual

    def check_call(self, call: _Call, expected: Optional[str]) -> str:
        entries = self.visible(call.name)
        callables = [e for e in entries if e.kind in ("function", "constructor")]
        if not entries:
            raise _CheckFailure(
                Diagnostic("UNRESOLVED_REFERENCE", f"unresolved reference: {call.name}", call.line)
            )
        if not callables:
            raise _CheckFailure(
                Diagnostic("NOT_CALLABLE", f"{call.name} is not callable", call.line)
            )
        if "D1" in self.bugs or callables[0].kind == "constructor":
            # Constructors of one type may differ in arity; the D1 profile
            # additionally scans duplicate functions for the first fit.
            failure: Optional[_CheckFailure] = None
            for candidate in callables:
                arity_ok = len(candidate.params) == len(call.args)
                try:
                    return self.apply_candidate(candidate, call, expected)
                except _CheckFailure as exc:
                    # Report the failure of an arity-matching candidate over
                    # an arity mismatch from an unrelated overload.
                    if failure is None or (arity_ok and failure.diag.code == "ARITY_MISMATCH"):
                        failure = exc
            assert failure is not None
            raise failure
        return self.apply_candidate(callables[0], call, expected)

    def apply_candidate(self, entry: _Entry, call: _Call, expected: Optional[str]) -> str:
        if len(call.args) != len(entry.params):
            raise _CheckFailure(
                Diagnostic(
                    "ARITY_MISMATCH",
                    f"{call.name} expects {len(entry.params)} arguments, got {len(call.args)}",
                    call.line,
                )
            )
        for arg, param_type in zip(call.args, entry.params):
            self.check_expr(arg, param_type)
        return self.accept_type(entry.returns, expected, call.line)


def _active_bugs(profile: str) -> frozenset[str]:
    if profile not in BUG_PROFILES:
        raise ValueError(f"unknown bug profile: {profile!r}")
    if profile == "none":
        return frozenset()
    if profile == "all":
        return frozenset({"D1", "D2", "D3"})
    return frozenset({profile})


def check_program(source: str, profile: str = "none") -> CheckVerdict:
    """Check a program; returns a verdict with diagnostics.

    Raises :class:`SimulatedOutOfMemory` when the D3 profile is active and
    the source is 10,000 characters or longer.
    """
    bugs = _active_bugs(profile)
    if "D3" in bugs and len(source) >= OOM_SOURCE_THRESHOLD:
        raise SimulatedOutOfMemory(
            f"OutOfMemoryError: simulated heap exhaustion on {len(source)}-character input"
        )
    try:
        tokens = _lex(source)
        decls = _Parser(tokens).parse_program()
    except _CheckFailure as exc:
        return CheckVerdict(False, [exc.diag])
    checker = _Checker(bugs)
    checker.check_program(decls)
    return CheckVerdict(not checker.diagnostics, checker.diagnostics)
