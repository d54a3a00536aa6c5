"""Built-in command-line checkers for the mini-language.

``refc-ok`` (profile ``none``) implements the correct semantics; ``refc-bug``
activates one or more seeded defects (profiles ``D1``, ``D2``, ``D3``,
``all``).  This subpackage deliberately has no imports from the generator
side of the project: it is the independent oracle the fuzzer is tested
against.
"""

from gramdiff.refc.checker import (
    BUG_PROFILES,
    BUILTIN_FUNCTIONS,
    BUILTIN_CONSTRUCTORS,
    BUILTIN_TYPES,
    CheckVerdict,
    Diagnostic,
    SimulatedOutOfMemory,
    check_program,
)

__all__ = [
    "BUG_PROFILES",
    "BUILTIN_FUNCTIONS",
    "BUILTIN_CONSTRUCTORS",
    "BUILTIN_TYPES",
    "CheckVerdict",
    "Diagnostic",
    "SimulatedOutOfMemory",
    "check_program",
]
