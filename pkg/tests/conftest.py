import pytest

import relang
from relang import parse_expression, parse_script
from relang.values import (
    IntVal,
    RealVal,
    RefVal,
    TextVal,
    TimestampVal,
    TupleVal,
    render_timestamp,
)

LIBRARY_DDL = """
relation (author (name text) (birthdate timestamp))
relation (book author (title text) timestamp)
relation (genre text)
relation (book_genre book genre)
relation (department text)
relation (available book department)
"""

LIBRARY_DATA = """
add author ({"Dawkins" "1941-03-26"} {"Homer" "800 BC"} {"Austen" "1775-12-16"})
add genre ({"sci-fi"} {"epic"} {"bore"})
add department ({"main"} {"annex"})
add book ({(author "Dawkins" .) "The Selfish Gene" "1976"} {(author "Homer" .) "Ulysses" "750 BC"} {(author "Austen" .) "Emma" "1815"})
add book_genre ({(book . "The Selfish Gene" .) (genre "sci-fi")} {(book . "Ulysses" .) (genre "epic")} {(book . "Emma" .) (genre "bore")})
add available ({(book . "Ulysses" .) (department "main")} {(book . "Emma" .) (department "main")} {(book . "The Selfish Gene" .) (department "annex")})
commit
"""

LIBRARY_SCRIPT = LIBRARY_DDL + LIBRARY_DATA


def build_db(script: str) -> relang.Database:
    db = relang.Database()
    for stmt in parse_script(script):
        db.execute(stmt)
    return db


@pytest.fixture
def library() -> relang.Database:
    return build_db(LIBRARY_SCRIPT)


@pytest.fixture
def library_ddl() -> relang.Database:
    return build_db(LIBRARY_DDL)


def q(db: relang.Database, text: str):
    """Evaluate one expression against the database's current transaction."""
    return db.eval(parse_expression(text))


def run(db: relang.Database, text: str):
    """Execute a statement sequence; returns the last result."""
    result = None
    for stmt in parse_script(text):
        result = db.execute(stmt)
    return result


def plain(value, state):
    """Reduce a stored value to plain Python data for assertions.

    References are dereferenced to the target tuple, so results are row-id
    independent.
    """
    if isinstance(value, IntVal):
        return value.value
    if isinstance(value, RealVal):
        return value.value
    if isinstance(value, TextVal):
        return value.value
    if isinstance(value, TimestampVal):
        return render_timestamp(value)
    if isinstance(value, RefVal):
        return tuple(plain(v, state) for v in state.get_row(value.relation, value.row))
    if isinstance(value, TupleVal):
        return tuple(plain(v, state) for v in value.values)
    raise AssertionError(f"unexpected value {value!r}")


def rows(result, state):
    """A TupleSet as a set of plain tuples (refs dereferenced)."""
    return {tuple(plain(v, state) for v in t) for t in result.tuples()}


def fingerprint(db: relang.Database) -> str:
    return relang.save_snapshot(db)
