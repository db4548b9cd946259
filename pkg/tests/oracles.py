"""Independent oracles and random-case generators for the acceptance suite.

The brute-force connection oracle finds the shortest schema path with
networkx (not the engine's search) and then enumerates the full Cartesian
product of every relation on the path, filtering on reference equality along
each edge. It must agree with the engine's chain-join exactly.
"""

import itertools
import random
import string

import networkx as nx

import relang
from relang import parse_script
from relang.values import (
    IntVal,
    RealVal,
    RefVal,
    TextVal,
    TimestampVal,
    encode_tuple,
)


def schema_multigraph(catalog) -> "nx.MultiGraph":
    g = nx.MultiGraph()
    for name in catalog.names():
        g.add_node(name)
    for edge in catalog.schema_graph().edges:
        g.add_edge(edge.adopter, edge.target, key=edge.label(), edge=edge)
    return g


def all_shortest_edge_paths(catalog, a, b):
    """Every shortest path as a list of Edge objects (parallel edges count
    as distinct paths)."""
    g = schema_multigraph(catalog)
    if a == b:
        return [[]]
    try:
        node_paths = list(nx.all_shortest_paths(g, a, b))
    except nx.NetworkXNoPath:
        return []
    edge_paths = []
    for nodes in node_paths:
        choices = []
        for u, v in zip(nodes, nodes[1:]):
            parallel = [d["edge"] for d in g.get_edge_data(u, v).values()]
            choices.append(parallel)
        for combo in itertools.product(*choices):
            edge_paths.append(list(combo))
    return edge_paths


def brute_force_connection(db, target, source_tuples, source_relation):
    """Connected (target ++ source) pairs by full product enumeration."""
    catalog, state = db.catalog, db.txn.shadow
    paths = all_shortest_edge_paths(catalog, target, source_relation)
    assert len(paths) == 1, f"oracle requires a unique path, got {len(paths)}"
    path = paths[0]
    names = [target]
    for edge in path:
        names.append(edge.target if names[-1] == edge.adopter else edge.adopter)
    row_lists = [sorted(state.indexes[n].rows.items()) for n in names]
    source_keys = {encode_tuple(t) for t in source_tuples}
    results = set()
    for combo in itertools.product(*row_lists):
        ok = True
        for i, edge in enumerate(path):
            a_rel, b_rel = names[i], names[i + 1]
            (a_rid, a_tup), (b_rid, b_tup) = combo[i], combo[i + 1]
            if edge.adopter == a_rel:
                ok = a_tup[edge.position] == RefVal(b_rel, b_rid)
            else:
                ok = b_tup[edge.position] == RefVal(a_rel, a_rid)
            if not ok:
                break
        if ok and encode_tuple(combo[-1][1]) in source_keys:
            results.add(encode_tuple(tuple(combo[0][1]) + tuple(combo[-1][1])))
    return results


def engine_connection_keys(db, target, source_relation):
    from relang.evaluator import connect, relation_schema, TupleSet

    env = db.env()
    rel = db.catalog.lookup(source_relation)
    source = TupleSet.from_tuples(
        relation_schema(rel), db.txn.shadow.scan(source_relation), relation=source_relation
    )
    return connect(target, source, env).keys(), source.tuples()


# --- random schema/database generation -------------------------------------------


def random_tree_db(rng: random.Random, max_rows=20):
    """A database over a random tree-shaped schema (unique shortest paths).

    Each non-root relation adopts exactly one earlier relation, plus scalar
    padding domains; rows reference random rows of the adopted relation.
    """
    db = relang.Database()
    n = rng.randint(2, 5)
    names = [f"r{i}" for i in range(n)]
    parents = {}
    for i, name in enumerate(names):
        domains = []
        if i > 0:
            parent = names[rng.randrange(i)]
            parents[name] = parent
            domains.append(f"(p_{parent} {parent})")
        for j in range(rng.randint(1, 2)):
            scalar = rng.choice(["int", "text", "real", "timestamp"])
            domains.append(f"(s{j} {scalar})")
        script = f"relation ({name} {' '.join(domains)})"
        for stmt in parse_script(script):
            db.execute(stmt)
    for i, name in enumerate(names):
        rel = db.catalog.lookup(name)
        count = rng.randint(0, max_rows)
        for _ in range(count):
            values = []
            ok = True
            for dom in rel.domains:
                if dom.type_name == "int":
                    values.append(IntVal(rng.randint(0, 9)))
                elif dom.type_name == "text":
                    values.append(TextVal(rng.choice(string.ascii_lowercase[:6])))
                elif dom.type_name == "real":
                    values.append(RealVal(rng.uniform(-5.0, 5.0)))
                elif dom.type_name == "timestamp":
                    values.append(
                        TimestampVal(
                            rng.randint(-800, 2100),
                            rng.choice([None, rng.randint(1, 12)]),
                        )
                    )
                else:
                    target_rows = sorted(db.published.indexes[dom.type_name].rows)
                    if not target_rows:
                        ok = False
                        break
                    values.append(RefVal(dom.type_name, rng.choice(target_rows)))
            if ok:
                db.published.insert(name, tuple(values))
    db.refresh()
    return db, names


def connectable_pair(db, names, rng: random.Random, max_edges=3):
    """A random (target, source) pair with a path of at most max_edges."""
    g = schema_multigraph(db.catalog)
    candidates = []
    for a in names:
        for b in names:
            try:
                d = nx.shortest_path_length(g, a, b)
            except nx.NetworkXNoPath:
                continue
            if d <= max_edges:
                candidates.append((a, b))
    return rng.choice(candidates)
