"""DAG and CPDAG representations plus the graph queries used throughout.

Graphs are immutable value objects keyed by vertex *name*; the declaration
order of ``vertices`` fixes every tie-break (topological order, edge
listing, enumeration order).

Text format (shared by graph, network and learner output files)::

    vertices: A,B,C
    A -> B
    B -- C        # undirected, CPDAG only
"""

from __future__ import annotations

import heapq
import itertools
import re
from collections.abc import Iterable, Mapping

import numpy as np

__all__ = [
    "GraphError",
    "CycleError",
    "InextensiblePatternError",
    "Dag",
    "Cpdag",
    "topological_order",
    "descendants",
    "ancestors",
    "d_separated",
    "v_structures",
    "cpdag_of",
    "enumerate_extensions",
    "count_extensions",
    "parse_graph",
    "format_graph",
    "read_graph",
    "write_graph",
]

EXACT_ENUMERATION_LIMIT = 10_000

_NAME_RE = re.compile(r"^[A-Za-z0-9_.:\[\]+]+$")


class GraphError(ValueError):
    """Malformed graph, unknown vertex or invalid query."""


class CycleError(GraphError):
    def __init__(self, cycle):
        self.cycle = cycle
        super().__init__("directed cycle: " + " -> ".join(map(str, cycle)))


class InextensiblePatternError(GraphError):
    """A partially directed graph admits no consistent DAG extension."""

    def __init__(self, msg="inextensible pattern"):
        super().__init__(msg)


def _check_name(name):
    if not isinstance(name, str) or not _NAME_RE.match(name) or name.startswith("#"):
        raise GraphError(f"invalid vertex name {name!r}")


class _Graph:
    """Shared bookkeeping: vertex tuple, index map and name validation."""

    __slots__ = ("_vertices", "_index", "_hash")

    def _init_vertices(self, vertices):
        vertices = tuple(vertices)
        for v in vertices:
            _check_name(v)
        if len(set(vertices)) != len(vertices):
            dup = sorted({v for v in vertices if vertices.count(v) > 1})
            raise GraphError(f"duplicate vertices: {dup}")
        self._vertices = vertices
        self._index = {v: i for i, v in enumerate(vertices)}
        self._hash = None

    @property
    def vertices(self) -> tuple[str, ...]:
        return self._vertices

    def index(self, v) -> int:
        try:
            return self._index[v]
        except KeyError:
            raise GraphError(f"unknown vertex {v!r}") from None

    def check_vertex(self, v):
        if v not in self._index:
            raise GraphError(f"unknown vertex {v!r}")

    def _sorted_pairs(self, pairs):
        return sorted(pairs, key=lambda e: (self._index[e[0]], self._index[e[1]]))

    def __contains__(self, v):
        return v in self._index

    def __len__(self):
        return len(self._vertices)


class Dag(_Graph):
    """Directed acyclic graph over named vertices.

    Parameters
    ----------
    vertices : iterable of str
        Vertex names in declaration order.
    edges : iterable of (parent, child)
        Directed edges. Self-loops, duplicates, unknown endpoints and cycles
        raise :class:`GraphError`.
    """

    __slots__ = ("_edges", "_parents", "_children", "_topo")

    def __init__(self, vertices: Iterable[str], edges: Iterable[tuple[str, str]] = ()):
        self._init_vertices(vertices)
        edge_list = [tuple(e) for e in edges]
        seen = set()
        parents = {v: [] for v in self._vertices}
        children = {v: [] for v in self._vertices}
        for e in edge_list:
            if len(e) != 2:
                raise GraphError(f"malformed edge {e!r}")
            a, b = e
            self.check_vertex(a)
            self.check_vertex(b)
            if a == b:
                raise GraphError(f"self-loop on {a!r}")
            if e in seen:
                raise GraphError(f"duplicate edge {a} -> {b}")
            seen.add(e)
            parents[b].append(a)
            children[a].append(b)
        self._edges = frozenset(seen)
        key = self._index.__getitem__
        self._parents = {v: tuple(sorted(ps, key=key)) for v, ps in parents.items()}
        self._children = {v: tuple(sorted(cs, key=key)) for v, cs in children.items()}
        self._topo = self._kahn()

    def _kahn(self):
        indeg = {v: len(self._parents[v]) for v in self._vertices}
        heap = [self._index[v] for v in self._vertices if indeg[v] == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            v = self._vertices[heapq.heappop(heap)]
            order.append(v)
            for c in self._children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    heapq.heappush(heap, self._index[c])
        if len(order) != len(self._vertices):
            raise CycleError(self._find_cycle({v for v in self._vertices if indeg[v] > 0}))
        return tuple(order)

    def _find_cycle(self, remaining):
        # walk parents inside the residual subgraph until a vertex repeats
        v = min(remaining, key=self._index.__getitem__)
        path, pos = [], {}
        while v not in pos:
            pos[v] = len(path)
            path.append(v)
            v = next(p for p in self._parents[v] if p in remaining)
        cycle = path[pos[v]:][::-1]
        return cycle + [cycle[0]]

    @property
    def edges(self) -> frozenset:
        return self._edges

    def parents(self, v) -> tuple[str, ...]:
        """Parents of ``v`` in declaration order."""
        self.check_vertex(v)
        return self._parents[v]

    def children(self, v) -> tuple[str, ...]:
        self.check_vertex(v)
        return self._children[v]

    def sorted_edges(self) -> list[tuple[str, str]]:
        return self._sorted_pairs(self._edges)

    def has_edge(self, a, b) -> bool:
        return (a, b) in self._edges

    def adjacent(self, a, b) -> bool:
        return (a, b) in self._edges or (b, a) in self._edges

    # derived graphs -------------------------------------------------------
    def with_edges(self, add=(), remove=()) -> "Dag":
        remove = set(map(tuple, remove))
        missing = remove - self._edges
        if missing:
            raise GraphError(f"edges not present: {sorted(missing)}")
        kept = [e for e in self.sorted_edges() if e not in remove]
        extra = [tuple(e) for e in add if tuple(e) not in self._edges]
        return Dag(self._vertices, kept + extra)

    def without_incoming(self, v) -> "Dag":
        """Graph surgery: drop every edge into ``v``."""
        self.check_vertex(v)
        return Dag(self._vertices, [e for e in self.sorted_edges() if e[1] != v])

    def without_outgoing(self, v, only=None) -> "Dag":
        self.check_vertex(v)
        drop = set(self._children[v]) if only is None else set(only)
        return Dag(self._vertices, [e for e in self.sorted_edges() if not (e[0] == v and e[1] in drop)])

    def __eq__(self, other):
        if not isinstance(other, Dag):
            return NotImplemented
        return self._vertices == other._vertices and self._edges == other._edges

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((Dag, self._vertices, self._edges))
        return self._hash

    def __repr__(self):
        edges = ", ".join(f"{a}->{b}" for a, b in self.sorted_edges())
        return f"Dag([{', '.join(self._vertices)}], {{{edges}}})"


class Cpdag(_Graph):
    """Partially directed graph representing a Markov equivalence class.

    ``undirected`` holds unordered pairs; a pair may not appear both directed
    and undirected. Extensibility is not checked here, it is reported by
    :func:`enumerate_extensions` as :class:`InextensiblePatternError`.
    """

    __slots__ = ("_directed", "_undirected", "_nbrs")

    def __init__(self, vertices, directed=(), undirected=()):
        self._init_vertices(vertices)
        d, u = set(), set()
        for a, b in directed:
            self.check_vertex(a)
            self.check_vertex(b)
            if a == b:
                raise GraphError(f"self-loop on {a!r}")
            if (b, a) in d:
                raise GraphError(f"edge {a}-{b} directed both ways")
            d.add((a, b))
        for pair in undirected:
            a, b = tuple(pair)
            self.check_vertex(a)
            self.check_vertex(b)
            if a == b:
                raise GraphError(f"self-loop on {a!r}")
            if (a, b) in d or (b, a) in d:
                raise GraphError(f"pair {a}-{b} both directed and undirected")
            u.add(frozenset((a, b)))
        self._directed = frozenset(d)
        self._undirected = frozenset(u)
        nbrs = {v: set() for v in self._vertices}
        for a, b in d:
            nbrs[a].add(b)
            nbrs[b].add(a)
        for a, b in map(tuple, u):
            nbrs[a].add(b)
            nbrs[b].add(a)
        self._nbrs = {v: frozenset(s) for v, s in nbrs.items()}

    @classmethod
    def from_dag(cls, dag: Dag) -> "Cpdag":
        """Fully directed pattern holding exactly ``dag``'s edges."""
        return cls(dag.vertices, dag.edges, ())

    @property
    def directed(self) -> frozenset:
        return self._directed

    @property
    def undirected(self) -> frozenset:
        return self._undirected

    def adjacent(self, a, b) -> bool:
        return b in self._nbrs[a]

    def neighbors(self, v) -> frozenset:
        return self._nbrs[v]

    def sorted_directed(self):
        return self._sorted_pairs(self._directed)

    def sorted_undirected(self):
        pairs = [tuple(sorted(p, key=self._index.__getitem__)) for p in self._undirected]
        return self._sorted_pairs(pairs)

    def is_dag(self) -> bool:
        return not self._undirected

    def to_dag(self) -> Dag:
        if self._undirected:
            raise GraphError("pattern has undirected edges")
        return Dag(self._vertices, self.sorted_directed())

    def __eq__(self, other):
        if not isinstance(other, Cpdag):
            return NotImplemented
        return (
            self._vertices == other._vertices
            and self._directed == other._directed
            and self._undirected == other._undirected
        )

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((Cpdag, self._vertices, self._directed, self._undirected))
        return self._hash

    def __repr__(self):
        parts = [f"{a}->{b}" for a, b in self.sorted_directed()]
        parts += [f"{a}--{b}" for a, b in self.sorted_undirected()]
        return f"Cpdag([{', '.join(self._vertices)}], {{{', '.join(parts)}}})"


# ---------------------------------------------------------------------------
# queries


def topological_order(g: Dag) -> list[str]:
    """Parents before children; ties broken by declaration order."""
    return list(g._topo)


def _reach(start, step):
    seen = set()
    stack = list(start)
    while stack:
        v = stack.pop()
        for w in step(v):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def descendants(g: Dag, v) -> frozenset:
    """Vertices reachable from ``v`` by a directed path, ``v`` excluded."""
    g.check_vertex(v)
    return frozenset(_reach([v], g._children.__getitem__) - {v})


def ancestors(g: Dag, v) -> frozenset:
    g.check_vertex(v)
    return frozenset(_reach([v], g._parents.__getitem__) - {v})


def _as_set(g, z):
    if z is None:
        return frozenset()
    if isinstance(z, str):
        z = (z,)
    z = frozenset(z)
    for v in z:
        g.check_vertex(v)
    return z


def d_connected_set(g: Dag, x, z) -> frozenset:
    """Vertices d-connected to ``x`` given ``z`` (Bayes-ball reachability)."""
    z = _as_set(g, z)
    anc_z = frozenset(_reach(z, g._parents.__getitem__)) | z
    # direction: True = arrived from a child (moving up), False = from a parent
    stack = [(x, True)]
    visited = set()
    reached = set()
    while stack:
        v, up = stack.pop()
        if (v, up) in visited:
            continue
        visited.add((v, up))
        if v not in z:
            reached.add(v)
        if up:
            if v not in z:
                stack.extend((p, True) for p in g._parents[v])
                stack.extend((c, False) for c in g._children[v])
        else:
            if v not in z:
                stack.extend((c, False) for c in g._children[v])
            if v in anc_z:
                stack.extend((p, True) for p in g._parents[v])
    reached.discard(x)
    return frozenset(reached)


def d_separated(g: Dag, x, y, z=()) -> bool:
    """True iff every path between ``x`` and ``y`` is blocked by ``z``."""
    g.check_vertex(x)
    g.check_vertex(y)
    z = _as_set(g, z)
    if x == y:
        raise GraphError("d-separation query needs two distinct vertices")
    if x in z or y in z:
        raise GraphError("query vertices may not be in the conditioning set")
    return y not in d_connected_set(g, x, z)


def v_structures(g) -> frozenset:
    """Triples ``(a, c, b)`` with ``a -> c <- b`` and ``a``, ``b`` non-adjacent.

    Works on a :class:`Dag` or on the directed part of a :class:`Cpdag`;
    ``a`` precedes ``b`` in declaration order.
    """
    if isinstance(g, Dag):
        pa = g._parents
        adjacent = g.adjacent
    else:
        pa = {v: [] for v in g.vertices}
        for a, b in g.directed:
            pa[b].append(a)
        adjacent = g.adjacent
    out = set()
    for c in g.vertices:
        ps = sorted(pa[c], key=g._index.__getitem__)
        for a, b in itertools.combinations(ps, 2):
            if not adjacent(a, b):
                out.add((a, c, b))
    return frozenset(out)


# ---------------------------------------------------------------------------
# partially directed graph machinery (Meek closure, extensions)


class _Pdag:
    """Mutable working copy used by Meek closure and extension search."""

    __slots__ = ("vertices", "directed", "undirected", "adj")

    def __init__(self, vertices, directed, undirected):
        self.vertices = vertices
        self.directed = set(directed)
        self.undirected = set(undirected)
        self.adj = {v: set() for v in vertices}
        for a, b in self.directed:
            self.adj[a].add(b)
            self.adj[b].add(a)
        for p in self.undirected:
            a, b = tuple(p)
            self.adj[a].add(b)
            self.adj[b].add(a)

    def copy(self):
        new = _Pdag.__new__(_Pdag)
        new.vertices = self.vertices
        new.directed = set(self.directed)
        new.undirected = set(self.undirected)
        new.adj = self.adj  # skeleton never changes
        return new

    def is_undirected(self, a, b):
        return frozenset((a, b)) in self.undirected

    def orient(self, a, b):
        self.undirected.discard(frozenset((a, b)))
        self.directed.add((a, b))


def _meek_closure(p: _Pdag, order):
    """Apply Meek rules R1-R3 until nothing changes.

    Rules only orient currently undirected edges, so conflicting evidence
    never flips an existing arrow.
    """
    changed = True
    while changed:
        changed = False
        for pair in sorted(p.undirected, key=lambda q: sorted(order[v] for v in q)):
            if pair not in p.undirected:
                continue
            a, b = sorted(pair, key=order.__getitem__)
            for x, y in ((a, b), (b, a)):
                if _meek_forces(p, x, y):
                    p.orient(x, y)
                    changed = True
                    break
    return p


def _meek_forces(p, x, y):
    """Whether x -- y must become x -> y."""
    d = p.directed
    adj = p.adj
    # R1: w -> x -- y, w and y non-adjacent
    for w in adj[x]:
        if (w, x) in d and w != y and y not in adj[w]:
            return True
    # R2: x -> w -> y
    for w in adj[x]:
        if (x, w) in d and (w, y) in d:
            return True
    # R3: x -- c -> y, x -- e -> y, c and e non-adjacent
    cs = [c for c in adj[x] if c != y and p.is_undirected(x, c) and (c, y) in d]
    for c, e in itertools.combinations(cs, 2):
        if e not in adj[c]:
            return True
    return False


def _has_cycle(vertices, directed):
    kids = {v: [] for v in vertices}
    indeg = {v: 0 for v in vertices}
    for a, b in directed:
        kids[a].append(b)
        indeg[b] += 1
    stack = [v for v in vertices if indeg[v] == 0]
    seen = 0
    while stack:
        v = stack.pop()
        seen += 1
        for c in kids[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                stack.append(c)
    return seen != len(vertices)


def _directed_vstructs(vertices, directed, adj):
    pa = {v: [] for v in vertices}
    for a, b in directed:
        pa[b].append(a)
    out = set()
    for c, ps in pa.items():
        for a, b in itertools.combinations(ps, 2):
            if b not in adj[a]:
                out.add((frozenset((a, b)), c))
    return out


def cpdag_of(g: Dag) -> Cpdag:
    """Completed pattern of ``g``'s Markov equivalence class."""
    compelled = set()
    for a, c, b in v_structures(g):
        compelled.add((a, c))
        compelled.add((b, c))
    undirected = [frozenset(e) for e in g.edges if e not in compelled]
    p = _meek_closure(_Pdag(g.vertices, compelled, undirected), g._index)
    return Cpdag(g.vertices, p.directed, p.undirected)


def _valid_partial(p, vstructs0):
    if _has_cycle(p.vertices, p.directed):
        return False
    return vstructs0 is None or _directed_vstructs(p.vertices, p.directed, p.adj) <= vstructs0


def _extension_search(c: Cpdag, limit, rng=None, relaxed=False):
    """Depth-first search over orientations; yields extensions as Dags.

    Each branch orients one undirected edge and re-closes under Meek's
    rules (sound implications for any consistent extension), then prunes
    partial orientations that already contain a cycle or a new v-structure.
    With ``rng`` the branch order is randomised. ``relaxed`` drops the
    v-structure condition (and with it Meek's rules): any acyclic
    orientation keeping the directed edges qualifies.
    """
    order = c._index
    base = _Pdag(c.vertices, c.directed, c.undirected)
    vstructs0 = _directed_vstructs(c.vertices, c.directed, base.adj)
    if relaxed:
        vstructs0 = None
    else:
        base = _meek_closure(base, order)
    if not _valid_partial(base, vstructs0):
        return
    found = 0
    stack = [base]
    while stack:
        p = stack.pop()
        if not p.undirected:
            if relaxed or _directed_vstructs(p.vertices, p.directed, p.adj) == vstructs0:
                yield Dag(c.vertices, sorted(p.directed, key=lambda e: (order[e[0]], order[e[1]])))
                found += 1
                if limit is not None and found >= limit:
                    return
            continue
        pairs = sorted(p.undirected, key=lambda q: sorted(order[v] for v in q))
        if rng is None:
            a, b = sorted(pairs[0], key=order.__getitem__)
            choices = [(b, a), (a, b)]  # popped in reverse: a -> b explored first
        else:
            a, b = tuple(pairs[int(rng.integers(len(pairs)))])
            choices = [(a, b), (b, a)]
            if rng.random() < 0.5:
                choices.reverse()
        for x, y in choices:
            q = p.copy()
            q.orient(x, y)
            if not relaxed:
                _meek_closure(q, order)
            if _valid_partial(q, vstructs0):
                stack.append(q)


def count_extensions(c: Cpdag, limit=None) -> int:
    """Number of consistent extensions, stopping early at ``limit``."""
    return sum(1 for _ in _extension_search(c, limit))


def enumerate_extensions(c: Cpdag, cap: int = 100, seed: int = 0, relaxed: bool = False) -> list[Dag]:
    """Consistent DAG extensions of ``c``.

    All extensions are returned when there are at most ``cap`` of them.
    Otherwise ``cap`` extensions are drawn without replacement: uniformly
    when the class has at most ``EXACT_ENUMERATION_LIMIT`` members, and by
    randomised orientation otherwise (approximately uniform).

    With ``relaxed``, a pattern that has no consistent extension (possible
    for learner output on finite data) falls back to acyclic orientations
    of its undirected edges that keep every directed edge, new
    v-structures allowed.

    Raises
    ------
    InextensiblePatternError
        If no acyclic orientation preserves the skeleton and v-structures
        (without ``relaxed``), or the directed edges contain a cycle.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if isinstance(c, Dag):
        c = Cpdag.from_dag(c)
    mode = False
    exts = list(_extension_search(c, max(cap, EXACT_ENUMERATION_LIMIT) + 1))
    if not exts and relaxed:
        mode = True
        exts = list(_extension_search(c, max(cap, EXACT_ENUMERATION_LIMIT) + 1, relaxed=True))
    if not exts:
        raise InextensiblePatternError()
    if len(exts) <= cap:
        return exts
    rng = np.random.default_rng(seed)
    if len(exts) <= EXACT_ENUMERATION_LIMIT:
        idx = np.sort(rng.choice(len(exts), size=cap, replace=False))
        return [exts[i] for i in idx]
    chosen, seen = [], set()
    attempts = 0
    while len(chosen) < cap and attempts < 200 * cap:
        attempts += 1
        dag = next(_extension_search(c, 1, rng=rng, relaxed=mode), None)
        if dag is not None and dag not in seen:
            seen.add(dag)
            chosen.append(dag)
    return chosen


# ---------------------------------------------------------------------------
# text format


def format_graph(g, header_comments: Iterable[str] = ()) -> str:
    """Serialise a Dag or Cpdag to the graph text format."""
    lines = [f"# {c}" for c in header_comments]
    lines.append("vertices: " + ",".join(g.vertices))
    if isinstance(g, Dag):
        lines += [f"{a} -> {b}" for a, b in g.sorted_edges()]
    else:
        lines += [f"{a} -> {b}" for a, b in g.sorted_directed()]
        lines += [f"{a} -- {b}" for a, b in g.sorted_undirected()]
    return "\n".join(lines) + "\n"


def parse_graph(text: str, kind: str = "auto"):
    """Parse the graph text format.

    ``kind`` is ``"dag"``, ``"cpdag"`` or ``"auto"`` (a Dag unless an
    undirected edge is present).
    """
    vertices = None
    directed, undirected = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("vertices:"):
            if vertices is not None:
                raise GraphError(f"line {lineno}: repeated vertices header")
            body = line[len("vertices:"):].strip()
            vertices = [v.strip() for v in body.split(",")] if body else []
            continue
        if vertices is None:
            raise GraphError(f"line {lineno}: edge before vertices header")
        if "->" in line:
            a, b = (s.strip() for s in line.split("->", 1))
            directed.append((a, b))
        elif "--" in line:
            a, b = (s.strip() for s in line.split("--", 1))
            undirected.append((a, b))
        else:
            raise GraphError(f"line {lineno}: cannot parse {raw!r}")
    if vertices is None:
        raise GraphError("missing vertices header")
    if kind == "dag" or (kind == "auto" and not undirected):
        if undirected:
            raise GraphError("undirected edge in a DAG")
        return Dag(vertices, directed)
    if kind not in ("cpdag", "auto"):
        raise ValueError(f"unknown graph kind {kind!r}")
    return Cpdag(vertices, directed, [frozenset(p) for p in undirected])


def read_graph(path, kind="auto"):
    with open(path, encoding="utf-8") as fh:
        return parse_graph(fh.read(), kind)


def write_graph(g, path, header_comments=()):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_graph(g, header_comments))


def graph_header_comments(text: str) -> dict:
    """``key=value`` pairs found on leading comment lines (learner manifest)."""
    out = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line.startswith("#"):
            if line:
                break
            continue
        for tok in line[1:].split():
            if "=" in tok:
                k, v = tok.split("=", 1)
                out[k] = v
    return out


def skeleton_pairs(g) -> frozenset:
    if isinstance(g, Dag):
        return frozenset(frozenset(e) for e in g.edges)
    return frozenset(frozenset(e) for e in g.directed) | g.undirected


def edge_status(g) -> Mapping[frozenset, object]:
    """Unordered vertex pair -> ``(a, b)`` for ``a -> b`` or ``"--"``."""
    out = {}
    if isinstance(g, Dag):
        for e in g.edges:
            out[frozenset(e)] = e
    else:
        for e in g.directed:
            out[frozenset(e)] = e
        for p in g.undirected:
            out[p] = "--"
    return out
