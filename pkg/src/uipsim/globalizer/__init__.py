"""Static virtualization of C source: turn file-scope (and function-static)
object definitions into per-instance arrays and index every reference, so a
non-re-entrant stack can run as many instances inside one process.
"""

from .tokenizer import (
    Token,
    TokenizeError,
    UnterminatedComment,
    UnterminatedString,
    tokenize,
)
from .scanner import Declaration, Diagnostic, FunctionDef, find_globals
from .transform import (
    TransformConfig,
    TransformError,
    TransformResult,
    UnsupportedInitializer,
    globalize_file,
    globalize_source,
    transform,
)

__all__ = [
    "Token",
    "TokenizeError",
    "UnterminatedComment",
    "UnterminatedString",
    "tokenize",
    "Declaration",
    "Diagnostic",
    "FunctionDef",
    "find_globals",
    "TransformConfig",
    "TransformError",
    "TransformResult",
    "UnsupportedInitializer",
    "transform",
    "globalize_source",
    "globalize_file",
]
