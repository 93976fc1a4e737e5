"""Model-level checking of hybrid-program control models.

Parse a small dL-style language, execute models deterministically under
externalized nondeterminism, generate loop-invariant and modeling-error
obligations, and decide them at desk scale by certified counterexample
and witness search.
"""

__version__ = "0.1.0"

from .parser import ParseError, parse_formula, parse_model, parse_program, parse_term
from .printer import pretty_print
from .semantics import run
from .checker import SearchConfig, certify, check, check_suite
from .models import builtin, table2_suite

__all__ = [
    "ParseError", "parse_formula", "parse_model", "parse_program",
    "parse_term", "pretty_print", "run", "SearchConfig", "certify", "check",
    "check_suite", "builtin", "table2_suite", "__version__",
]
