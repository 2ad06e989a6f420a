"""Independent reference implementations used as test oracles.

Nothing here calls the routine it checks: d-separation is decided on the
moralized ancestral graph, adjustment validity by enumerating paths, and
conditional independence by brute-force summation over joint tables.
"""

import itertools

import numpy as np

from tveval.graphs import Dag, GraphError

ACCEPTANCE_LINES = {}


def all_dags(n, names=None):
    """Every labelled DAG on ``n`` vertices."""
    vs = list(names or [f"V{i + 1}" for i in range(n)])
    pairs = list(itertools.combinations(vs, 2))
    out = []
    for states in itertools.product((0, 1, 2), repeat=len(pairs)):
        edges = [(a, b) if s == 1 else (b, a) for (a, b), s in zip(pairs, states) if s]
        try:
            out.append(Dag(vs, edges))
        except GraphError:
            pass
    return out


def subsets(items):
    items = list(items)
    for r in range(len(items) + 1):
        yield from itertools.combinations(items, r)


def descendants_of(g, v):
    out, stack = set(), [v]
    while stack:
        for c in g.children(stack.pop()):
            if c not in out:
                out.add(c)
                stack.append(c)
    return out


def ancestors_of(g, vs):
    out, stack = set(vs), list(vs)
    while stack:
        for p in g.parents(stack.pop()):
            if p not in out:
                out.add(p)
                stack.append(p)
    return out


def dsep_moral(g, x, y, z):
    """d-separation via the moral graph of the ancestral set."""
    keep = ancestors_of(g, {x, y} | set(z))
    adj = {v: set() for v in keep}
    for v in keep:
        ps = [p for p in g.parents(v) if p in keep]
        for p in ps:
            adj[v].add(p)
            adj[p].add(v)
        for a, b in itertools.combinations(ps, 2):
            adj[a].add(b)
            adj[b].add(a)
    seen, stack = {x}, [x]
    while stack:
        v = stack.pop()
        if v == y:
            return False
        for w in adj[v]:
            if w not in seen and w not in z:
                seen.add(w)
                stack.append(w)
    return True


def simple_paths(g, a, b):
    """All simple paths ``a .. b`` in the skeleton, as vertex lists."""
    nbrs = {v: set(g.parents(v)) | set(g.children(v)) for v in g.vertices}
    out = []

    def walk(path):
        v = path[-1]
        if v == b:
            out.append(list(path))
            return
        for w in nbrs[v]:
            if w not in path:
                path.append(w)
                walk(path)
                path.pop()

    walk([a])
    return out


def path_blocked(g, path, z):
    for i in range(1, len(path) - 1):
        u, v, w = path[i - 1], path[i], path[i + 1]
        collider = g.has_edge(u, v) and g.has_edge(w, v)
        if collider:
            if v not in z and not (descendants_of(g, v) & z):
                return True
        elif v in z:
            return True
    return False


def backdoor_valid(g, t, o, z):
    """Back-door criterion by path enumeration (``o`` not in ``z``)."""
    z = set(z)
    if z & descendants_of(g, t):
        return False
    for p in simple_paths(g, t, o):
        if g.has_edge(p[1], t) and not path_blocked(g, p, z):
            return False
    return True


def generalized_valid(g, t, o, z):
    """Complete adjustment criterion by path enumeration.

    ``z`` must avoid the descendants of every vertex (other than ``t``) on a
    causal path, and must block every non-causal path from ``t`` to ``o``.
    """
    z = set(z)
    if o in z:
        return o not in descendants_of(g, t)
    paths = simple_paths(g, t, o)
    causal = [p for p in paths if all(g.has_edge(p[i], p[i + 1]) for i in range(len(p) - 1))]
    forb = set()
    for p in causal:
        for v in p[1:]:
            forb |= {v} | descendants_of(g, v)
    if z & forb:
        return False
    for p in paths:
        if p in causal:
            continue
        if not path_blocked(g, p, z):
            return False
    return True


def sid_oracle(g, h, valid=generalized_valid):
    count = 0
    for a in g.vertices:
        z = set(h.parents(a))
        for b in g.vertices:
            if a == b:
                continue
            if a in g.parents(b) and b in z:
                count += 1
            elif not valid(g, a, b, z):
                count += 1
    return count


# ---------------------------------------------------------------------------
# joint-table helpers


def joint_by_enumeration(net):
    """Joint table of a discrete network by looping over every assignment."""
    vs = list(net.vertices)
    shape = tuple(net.arities[v] for v in vs)
    joint = np.zeros(shape)
    for assign in itertools.product(*[range(k) for k in shape]):
        x = dict(zip(vs, assign))
        p = 1.0
        for v in vs:
            ps = net.dag.parents(v)
            row = 0
            for u in ps:
                row = row * net.arities[u] + x[u]
            p *= net.cpts[v][row, x[v]]
        joint[assign] = p
    return joint


def ci_gap(joint, vs, x, y, z):
    """max |P(x, y | z) - P(x | z) P(y | z)| over states z with P(z) > 0."""
    keep = [vs.index(v) for v in (x, y, *z)]
    drop = tuple(i for i in range(len(vs)) if i not in keep)
    pxyz = joint.sum(axis=drop) if drop else joint
    # reorder axes to (x, y, z...)
    order = np.argsort(np.argsort(keep))
    pxyz = np.transpose(pxyz, order)
    pz = pxyz.sum(axis=(0, 1))
    seen = pz > 0
    cond = pxyz[..., seen] / pz[seen]
    gap = cond - cond.sum(axis=1)[:, None] * cond.sum(axis=0)[None, :]
    return float(np.abs(gap).max())
