"""Compiler and verifier for ``.sr`` routing policies, with a reference interpreter."""

from .ast_core import Policy, canonicalize, compute_source_hash
from .diagnostics import Diagnostic, Severity
from .parser import ParseError, parse, parse_file, parse_with_diagnostics
from .verifier import VerificationReport, verify

__version__ = "0.1.0"

__all__ = [
    "Diagnostic",
    "ParseError",
    "Policy",
    "Severity",
    "VerificationReport",
    "__version__",
    "canonicalize",
    "compute_source_hash",
    "parse",
    "parse_file",
    "parse_with_diagnostics",
    "verify",
]
