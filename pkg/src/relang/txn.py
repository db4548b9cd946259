"""Transactions as lazily validated plans.

DML statements apply eagerly to a private shadow copy of the store (so later
statements read their own writes), but integrity problems do not fail the
statement: a reference to a tuple that does not exist yet, a removal that
would strand referrers, or an update that collides with another tuple all
become deferred obligations, re-checked in statement order at commit. Commit
either publishes the shadow atomically or aborts leaving the published state
untouched.

Variables bind once, live until the transaction ends, and always hold sets
of tuples.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import syntax
from .catalog import BUILTIN_FUNCTIONS, Catalog, Domain, RelationDef
from .errors import (
    ArityMismatch,
    DomainTypeMismatch,
    IntegrityError,
    NameCollision,
    Rebind,
    RelangError,
    SchemaMismatch,
    TypeMismatch,
    UnknownAttr,
)
from .evaluator import (
    Env,
    SchemaCol,
    TupleSet,
    _as_tuple_set,
    connect,
    eval_expr,
    coerce_scalar,
    relation_schema,
    scalar_context,
    scalar_type_name,
)
from .store import DbState
from .values import RefVal, TupleVal, Value, encode_tuple


class _Miss(Exception):
    """Internal: a referenced tuple does not exist (strict resolution)."""


def _cartesian(sets):
    """Flattened Cartesian product of tuple sets (product semantics)."""
    for combo in itertools.product(*[s.tuples() for s in sets]):
        yield tuple(itertools.chain.from_iterable(combo))


class _RefResolver:
    """Resolves a referenced tuple to a row id against the shadow state.

    In strict mode a missing target raises _Miss (the surrounding tuple
    simply is not resolvable). In deferred mode a missing target gets a
    reserved phantom row id recorded in a buffer; the transaction turns the
    buffer into pending obligations once the statement succeeds.
    """

    def __init__(self, state: DbState, deferred: bool, pending: Dict):
        self.state = state
        self.deferred = deferred
        self.pending = pending  # (relation, key) -> rowid, shared with the plan
        self.buffer: Dict[Tuple[str, bytes], int] = {}

    def resolve(self, relation: str, values: tuple) -> RefVal:
        rowid = self.state.contains_tuple(relation, values)
        if rowid is not None:
            return RefVal(relation, rowid)
        key = encode_tuple(values)
        existing = self.pending.get((relation, key))
        if existing is None:
            existing = self.buffer.get((relation, key))
        if existing is not None:
            return RefVal(relation, existing)
        if not self.deferred:
            raise _Miss(relation, values)
        rowid = self.state.reserve_rowid(relation)
        self.buffer[(relation, key)] = rowid
        return RefVal(relation, rowid)


def conform_flat(rel: RelationDef, flat, catalog: Catalog, resolver: _RefResolver):
    """Match a flat value list against a relation's domains.

    A relation-valued domain accepts either a ready reference/inline tuple or
    the referenced relation's values spelled out in place (the form products
    over selections produce); spelled-out tuples resolve through ``resolver``.
    """
    values, end = _conform_from(rel, flat, 0, catalog, resolver)
    if end != len(flat):
        raise ArityMismatch(
            f"{rel.name!r} takes {rel.arity} domains; {len(flat) - end} values left over"
        )
    encode_tuple(values)  # any unencodable value fails here, before any write
    return values


def _conform_from(rel: RelationDef, flat, i: int, catalog, resolver):
    out = []
    for dom in rel.domains:
        if i >= len(flat):
            raise ArityMismatch(f"too few values for {rel.name!r}")
        v = flat[i]
        if dom.is_scalar:
            try:
                out.append(coerce_scalar(v, dom.type_name))
            except TypeMismatch as exc:
                raise DomainTypeMismatch(str(exc)) from exc
            i += 1
            continue
        target = catalog.lookup(dom.type_name)
        if target.klass == "simple":
            if isinstance(v, RefVal) and v.relation == dom.type_name:
                out.append(v)
                i += 1
            else:
                sub, i = _conform_from(target, flat, i, catalog, resolver)
                out.append(resolver.resolve(dom.type_name, sub))
        else:  # domain-class value, stored inline
            if isinstance(v, TupleVal) and v.relation == dom.type_name:
                out.append(v)
                i += 1
            else:
                sub, i = _conform_from(target, flat, i, catalog, resolver)
                out.append(TupleVal(dom.type_name, sub))
    return tuple(out), i


# --- deferred obligations ------------------------------------------------------


@dataclass
class _PendingRef:
    stmt: int
    relation: str
    key: bytes
    describe: str


@dataclass
class _DeferredReferenced:
    stmt: int
    relation: str
    rowid: int
    describe: str


@dataclass
class _DeferredDuplicate:
    stmt: int
    relation: str
    key: bytes
    describe: str


@dataclass
class _UnmatchedMember:
    stmt: int
    relation: str
    describe: str


@dataclass
class CommitReport:
    """Per-relation row counts of a successful commit."""

    added: Dict[str, int] = field(default_factory=dict)
    removed: Dict[str, int] = field(default_factory=dict)
    updated: Dict[str, int] = field(default_factory=dict)

    def describe(self) -> str:
        parts = []
        for label, counts in (("added", self.added), ("removed", self.removed), ("updated", self.updated)):
            for rel in sorted(counts):
                parts.append(f"{label} {counts[rel]} {rel}")
        return "committed" + (": " + ", ".join(parts) if parts else " (no changes)")


class TxnPlan:
    """One transaction: a shadow state, bindings, and deferred obligations."""

    def __init__(self, base: DbState):
        self.base = base
        self.shadow = base.clone()
        self.bindings: Dict[str, TupleSet] = {}
        self.steps: List[Tuple[str, str, int]] = []  # (verb, relation, row count)
        self.obligations: List[object] = []
        self.pending: Dict[Tuple[str, bytes], int] = {}
        self.status = "open"
        self._stmt = 0

    def _require_open(self):
        if self.status != "open":
            raise RelangError(f"transaction is {self.status}")

    def env(self) -> Env:
        return Env(self.shadow.catalog, self.shadow, self.bindings)

    # -- set-argument resolution

    def _resolve_write_tuples(self, rel: RelationDef, expr, deferred: bool):
        """Evaluate a DML set argument into storage tuples of ``rel``.

        A parenthesized set whose member count equals the relation's arity is
        first tried as a single tuple (products and unions are otherwise
        easily confused in handwritten scripts); when that fails structurally
        it is evaluated as the union it reads as.
        """
        env = self.env()
        if isinstance(expr, syntax.Product):
            out = self._tuples_from_members(rel, expr.members, env, deferred, False)
            assert out is not None
            return out
        if isinstance(expr, syntax.Union_) and expr.members and len(expr.members) == rel.arity:
            out = self._tuples_from_members(rel, expr.members, env, deferred, True)
            if out is not None:
                return out
        value = eval_expr(expr, env)
        return self._tuples_from_value(rel, value, deferred)

    def _tuples_from_members(self, rel, members, env, deferred, union_fallback):
        """Resolve a tuple constructor member by member.

        A member that matches no tuples leaves a relation-valued position
        unresolvable; in a deferred command that is an integrity obligation
        (the referenced tuple was never added), not an empty no-op. Returns
        None when the members read better as the union they also form.
        """
        sets = []
        any_empty = False
        for m in members:
            ts = _as_tuple_set(eval_expr(m, env), "a set member")
            sets.append(ts)
            if ts.schema is None or len(ts) == 0:
                any_empty = True
        if any_empty:
            if union_fallback and self._union_compatible(sets):
                return None
            if deferred:
                self.obligations.append(
                    _UnmatchedMember(
                        self._stmt,
                        rel.name,
                        f"a member of the set added to {rel.name!r} matched no"
                        " tuples; the referenced tuple was never added",
                    )
                )
            return []
        resolver = _RefResolver(self.shadow, deferred, self.pending)
        tuples = []
        try:
            for combo in _cartesian(sets):
                try:
                    tuples.append(
                        conform_flat(rel, combo, self.shadow.catalog, resolver)
                    )
                except _Miss:
                    continue  # strict mode: tuple not present, nothing to name
        except (ArityMismatch, DomainTypeMismatch, TypeMismatch, SchemaMismatch):
            if union_fallback:
                return None
            raise
        self._adopt_buffer(resolver)
        return tuples

    @staticmethod
    def _union_compatible(sets) -> bool:
        shapes = [
            tuple(col.type_name for col in s.schema)
            for s in sets
            if s.schema is not None
        ]
        return len(set(shapes)) <= 1

    def _tuples_from_value(self, rel: RelationDef, value, deferred: bool):
        if isinstance(value, bool):
            raise TypeMismatch("a condition is not a set of tuples")
        if isinstance(value, TupleSet):
            if value.schema is None:
                return []
            if value.relation == rel.name:
                return list(value.tuples())
            flats = value.tuples()
        else:
            flats = [(value,)]
        resolver = _RefResolver(self.shadow, deferred, self.pending)
        out = []
        for flat in flats:
            try:
                out.append(conform_flat(rel, flat, self.shadow.catalog, resolver))
            except _Miss:
                # strict mode only: a tuple referencing nothing cannot be
                # stored, so it is not a member of the relation
                continue
        self._adopt_buffer(resolver)
        return out

    def _adopt_buffer(self, resolver: _RefResolver):
        for (relation, key), rowid in resolver.buffer.items():
            self.pending[(relation, key)] = rowid
            self.obligations.append(
                _PendingRef(
                    self._stmt,
                    relation,
                    key,
                    f"a tuple of {relation!r} referenced in this transaction was never added",
                )
            )

    def _resolve_target_rows(self, rel: RelationDef, expr):
        """Rows of ``rel`` named by a remove/update set argument, in canonical
        order. A set argument from a different relation resolves through the
        connection operator (keep target rows connected to the given set)."""
        env = self.env()
        value = None
        if not (isinstance(expr, syntax.Union_) and expr.members and len(expr.members) == rel.arity):
            value = eval_expr(expr, env)
        if value is not None and isinstance(value, TupleSet) and value.relation not in (None, rel.name):
            pairs = connect(rel.name, value, env)
            width = rel.arity
            targets = TupleSet(relation_schema(rel), relation=rel.name)
            for p in pairs.tuples():
                targets.add(tuple(p[:width]))
            tuples = targets.tuples()
        else:
            if value is not None and isinstance(value, TupleSet) and value.relation == rel.name:
                tuples = list(value.tuples())
            else:
                tuples = self._resolve_write_tuples(rel, expr, deferred=False)
        keyed = []
        for t in tuples:
            rowid = self.shadow.contains_tuple(rel.name, t)
            if rowid is not None:
                keyed.append((encode_tuple(t), rowid))
        keyed.sort()
        return [rowid for _key, rowid in keyed]

    # -- planned commands

    def plan_add(self, relation: str, set_expr) -> TupleSet:
        self._require_open()
        self._stmt += 1
        rel = self._simple_relation(relation)
        tuples = self._resolve_write_tuples(rel, set_expr, deferred=True)
        fresh = TupleSet(relation_schema(rel), relation=relation)
        for values in tuples:
            key = encode_tuple(values)
            pinned = self.pending.get((relation, key))
            _rowid, inserted = self.shadow.insert(
                relation, values, check_refs=False, rowid=pinned
            )
            if inserted:
                # a fresh row satisfies any reference that was waiting for it
                self.pending.pop((relation, key), None)
                fresh.add(values)
        self.steps.append(("add", relation, len(fresh)))
        return fresh

    def plan_remove(self, relation: str, set_expr, cascade: bool) -> TupleSet:
        self._require_open()
        self._stmt += 1
        rel = self._simple_relation(relation)
        removed = TupleSet(relation_schema(rel), relation=relation)
        for rowid in self._resolve_target_rows(rel, set_expr):
            idx = self.shadow.indexes[relation]
            if rowid not in idx.rows:
                continue  # already gone via an earlier cascade
            values = idx.rows[rowid]
            if cascade:
                self.shadow.erase(relation, rowid, cascade=True)
            else:
                if self.shadow.referrers(relation, rowid):
                    self.obligations.append(
                        _DeferredReferenced(
                            self._stmt,
                            relation,
                            rowid,
                            f"removed tuple of {relation!r} is still referenced",
                        )
                    )
                self.shadow.erase(relation, rowid, force=True)
            removed.add(values)
        self.steps.append(("abolish" if cascade else "remove", relation, len(removed)))
        return removed

    def plan_update(self, relation: str, set_expr, assignments) -> TupleSet:
        self._require_open()
        self._stmt += 1
        rel = self._simple_relation(relation)
        positions = []
        for attr, value_expr in assignments:
            pos = rel.attr_index(attr)
            if pos is None:
                raise UnknownAttr(f"{relation!r} has no attribute {attr!r}")
            positions.append((pos, value_expr))
        updated = TupleSet(relation_schema(rel), relation=relation)
        env = self.env()
        resolver = _RefResolver(self.shadow, True, self.pending)
        # compute every new tuple against the pre-statement state first, so a
        # type error in any row leaves the shadow untouched
        planned = []
        for rowid in self._resolve_target_rows(rel, set_expr):
            old = self.shadow.get_row(relation, rowid)
            frame = {d.attr: v for d, v in zip(rel.domains, old)}
            new = list(old)
            for pos, value_expr in positions:
                outcome = eval_expr(value_expr, env.with_locals(frame))
                new[pos] = self._conform_position(rel.domains[pos], outcome, resolver)
            planned.append((rowid, tuple(new)))
        for rowid, new in planned:
            collided = self.shadow.rekey(relation, rowid, new, allow_collision=True)
            if collided:
                self.obligations.append(
                    _DeferredDuplicate(
                        self._stmt,
                        relation,
                        encode_tuple(new),
                        f"update left two equal tuples in {relation!r}",
                    )
                )
            updated.add(new)
        self._adopt_buffer(resolver)
        self.steps.append(("update", relation, len(updated)))
        return updated

    def _conform_position(self, dom: Domain, outcome, resolver: _RefResolver) -> Value:
        if dom.is_scalar:
            v = scalar_context(outcome, f"a {dom.type_name} value")
            try:
                return coerce_scalar(v, dom.type_name)
            except TypeMismatch as exc:
                raise DomainTypeMismatch(str(exc)) from exc
        if isinstance(outcome, TupleSet):
            if len(outcome) != 1:
                raise TypeMismatch(
                    f"assignment to {dom.attr!r} needs exactly one tuple,"
                    f" got {len(outcome)}"
                )
            flat = outcome.tuples()[0]
        elif isinstance(outcome, (RefVal, TupleVal)):
            flat = (outcome,)
        else:
            raise TypeMismatch(f"assignment to {dom.attr!r} needs a {dom.type_name} tuple")
        target = self.shadow.catalog.lookup(dom.type_name)
        values, end = _conform_from(
            RelationDef(dom.type_name, target.klass, (dom,)), flat, 0,
            self.shadow.catalog, resolver,
        )
        if end != len(flat):
            raise ArityMismatch(f"too many values for {dom.attr!r}")
        return values[0]

    def _simple_relation(self, relation: str) -> RelationDef:
        rel = self.shadow.catalog.lookup(relation)
        if rel.klass != "simple":
            raise TypeMismatch(
                f"{relation!r} is a {rel.klass} relation; its tuples cannot be altered"
            )
        return rel

    # -- bindings

    def bind(self, name: str, value) -> None:
        self._require_open()
        if name in self.bindings:
            raise Rebind(f"variable {name!r} is already bound")
        if name in self.shadow.catalog or name in BUILTIN_FUNCTIONS:
            raise NameCollision(f"{name!r} is a relation name")
        if isinstance(value, bool):
            raise TypeMismatch("a variable holds a set of tuples, not a condition")
        if not isinstance(value, TupleSet):
            t = scalar_type_name(value)
            value = TupleSet.from_tuples((SchemaCol(t, t),), [(value,)])
        self.bindings[name] = value

    # -- commit / rollback

    def commit(self) -> CommitReport:
        self._require_open()
        for ob in self.obligations:
            problem = self._check_obligation(ob)
            if problem is not None:
                self.status = "aborted"
                raise IntegrityError(problem)
        # obligations are complete by construction; keep a defensive check
        dangling = self.shadow.dangling_refs()
        collisions = self.shadow.collision_keys()
        if dangling or collisions:
            self.status = "aborted"
            raise IntegrityError("shadow state failed final validation")
        self.status = "committed"
        return self._report()

    def _check_obligation(self, ob) -> Optional[str]:
        if isinstance(ob, _UnmatchedMember):
            return ob.describe
        if isinstance(ob, _PendingRef):
            if (ob.relation, ob.key) in self.pending:
                return ob.describe
        elif isinstance(ob, _DeferredReferenced):
            if self.shadow._referrers(ob.relation, ob.rowid):
                return ob.describe
        elif isinstance(ob, _DeferredDuplicate):
            idx = self.shadow.indexes.get(ob.relation)
            if idx is not None and ob.key in idx.collisions:
                return ob.describe
        return None

    def _report(self) -> CommitReport:
        report = CommitReport()
        for name, idx in self.shadow.indexes.items():
            base_idx = self.base.indexes.get(name)
            base_rows = base_idx.rows if base_idx is not None else {}
            added = len([r for r in idx.rows if r not in base_rows])
            removed = len([r for r in base_rows if r not in idx.rows])
            updated = len(
                [r for r in idx.rows if r in base_rows and idx.rows[r] != base_rows[r]]
            )
            if added:
                report.added[name] = added
            if removed:
                report.removed[name] = removed
            if updated:
                report.updated[name] = updated
        return report

    def rollback(self) -> None:
        self._require_open()
        self.status = "aborted"


# --- the engine facade ------------------------------------------------------------


@dataclass
class OutputRequest:
    """An output statement's evaluated result plus its formatting choices."""

    value: object
    format_name: Optional[str]
    order_attrs: Tuple[str, ...]


class Database:
    """A catalog, a published state, and the one ambient transaction.

    Statements accumulate in the ambient transaction until `commit` publishes
    them (or `rollback` discards them); queries inside the transaction read
    their own writes. Definitions apply to the catalog immediately and are
    not transactional.
    """

    def __init__(self):
        self.catalog = Catalog()
        self.published = DbState(self.catalog)
        self.txn = TxnPlan(self.published)

    def env(self) -> Env:
        return self.txn.env()

    def eval(self, expr) -> object:
        return eval_expr(expr, self.env())

    def execute(self, stmt):
        """Run one statement; returns None, an evaluation result, a
        CommitReport, or an OutputRequest."""
        if isinstance(stmt, syntax.Definition):
            self._define(stmt)
            return None
        if isinstance(stmt, syntax.Command):
            return self._command(stmt)
        if isinstance(stmt, syntax.Assignment):
            if isinstance(stmt.rhs, syntax.Command):
                value = self._command(stmt.rhs)
            else:
                value = self.eval(stmt.rhs)
            self.txn.bind(stmt.name, value)
            return None
        if isinstance(stmt, syntax.Output):
            return OutputRequest(self.eval(stmt.expr), stmt.format_name, stmt.order_attrs)
        if isinstance(stmt, syntax.Commit):
            return self.commit()
        if isinstance(stmt, syntax.Rollback):
            self.rollback()
            return None
        if isinstance(stmt, syntax.BareQuery):
            return self.eval(stmt.expr)
        raise RelangError(f"unexecutable statement: {stmt!r}")

    def run_script(self, statements):
        """Execute statements in order; returns the last result."""
        result = None
        for stmt in statements:
            result = self.execute(stmt)
        return result

    def _define(self, stmt: syntax.Definition):
        catalog = self.catalog.define(stmt)
        self.catalog = catalog
        rel = catalog.lookup(stmt.name)
        for state in (self.published, self.txn.shadow):
            state.catalog = catalog
            state.add_relation(rel)

    def _command(self, stmt: syntax.Command) -> TupleSet:
        if stmt.verb == "add":
            return self.txn.plan_add(stmt.relation, stmt.set_arg)
        if stmt.verb == "remove":
            return self.txn.plan_remove(stmt.relation, stmt.set_arg, cascade=False)
        if stmt.verb == "abolish":
            return self.txn.plan_remove(stmt.relation, stmt.set_arg, cascade=True)
        if stmt.verb == "update":
            return self.txn.plan_update(stmt.relation, stmt.set_arg, stmt.assignments)
        raise RelangError(f"unknown command verb {stmt.verb!r}")

    def commit(self) -> CommitReport:
        try:
            report = self.txn.commit()
        except IntegrityError:
            self.txn = TxnPlan(self.published)
            raise
        self.published = self.txn.shadow
        self.txn = TxnPlan(self.published)
        return report

    def rollback(self) -> None:
        self.txn.rollback()
        self.txn = TxnPlan(self.published)

    def refresh(self) -> None:
        """Reopen the ambient transaction over the current published state
        (for callers that built the published state directly)."""
        self.txn = TxnPlan(self.published)

    @property
    def uncommitted_steps(self) -> int:
        return len(self.txn.steps)
