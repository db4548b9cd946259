"""relang: an interpreter and embedded relational engine in which every
relation is stored as one ordered multitable index, relations may be domains
of other relations, and the connection operator replaces explicit joins."""

from . import errors
from .catalog import Catalog, RelationDef
from .evaluator import Env, TupleSet, eval_expr
from .shell import format_result, load_snapshot, run, save_snapshot
from .store import DbState
from .syntax import parse_expression, parse_script, parse_statement, render, tokenize
from .txn import CommitReport, Database

__all__ = [
    "Catalog",
    "CommitReport",
    "Database",
    "DbState",
    "Env",
    "RelationDef",
    "TupleSet",
    "errors",
    "eval_expr",
    "format_result",
    "load_snapshot",
    "parse_expression",
    "parse_script",
    "parse_statement",
    "render",
    "run",
    "save_snapshot",
    "tokenize",
]
