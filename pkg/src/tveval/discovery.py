"""Structure-learning baselines: CI tests, PC and greedy BIC hill climbing."""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy
from scipy.stats import chi2, norm

from .dataset import Dataset, DatasetError
from .graphs import Cpdag, Dag, _extension_search, _has_cycle, _meek_closure, _Pdag, d_separated

__all__ = [
    "CiTestResult",
    "Score",
    "g_test",
    "fisher_z",
    "pc",
    "pc_from_oracle",
    "pc_core",
    "bic_score",
    "local_bic",
    "hill_climb",
    "LEARNERS",
]

DEFAULT_MAX_COND = 3


@dataclass(frozen=True)
class CiTestResult:
    statistic: float
    p_value: float
    independent: bool
    dof: int


@dataclass(frozen=True)
class Score:
    total: float
    per_vertex: dict


# ---------------------------------------------------------------------------
# conditional-independence tests


def _g_statistic(x, y, z_codes, kx, ky, kz):
    """G statistic and dof, dropping empty rows/columns inside each stratum."""
    counts = np.bincount((z_codes * kx + x) * ky + y, minlength=kz * kx * ky).reshape(kz, kx, ky).astype(float)
    stat = 0.0
    dof = 0
    for table in counts:
        n = table.sum()
        if n == 0:
            continue
        rows = table.sum(axis=1)
        cols = table.sum(axis=0)
        r = int(np.count_nonzero(rows))
        c = int(np.count_nonzero(cols))
        if r < 2 or c < 2:
            continue
        expected = np.outer(rows, cols) / n
        mask = table > 0
        stat += 2.0 * float(np.sum(table[mask] * np.log(table[mask] / expected[mask])))
        dof += (r - 1) * (c - 1)
    return stat, dof


def _strata(data, z):
    if not z:
        return np.zeros(data.n_rows, dtype=np.int64), 1
    dims = tuple(data.arity(v) for v in z)
    return np.ravel_multi_index(tuple(data[v] for v in z), dims), int(np.prod(dims))


def _check_ci_args(data, x, y, z):
    z = tuple(z)
    if x == y:
        raise DatasetError("x and y must differ")
    if x in z or y in z:
        raise DatasetError("x and y may not be in the conditioning set")
    for v in (x, y) + z:
        data.spec(v)
    return z


def g_test(data: Dataset, x, y, z: Sequence[str] = (), alpha: float = 0.05) -> CiTestResult:
    """Likelihood-ratio (G) test of ``x _||_ y | z`` on discrete columns.

    ``G = 2 * sum O ln(O / E)`` over the ``x`` by ``y`` table of each stratum
    of ``z``, summed over strata. Degenerate strata (a single non-empty row
    or column) add nothing to the statistic or the degrees of freedom; with
    no degrees of freedom left the test reports independence with p = 1.
    """
    z = _check_ci_args(data, x, y, z)
    data.require_discrete((x, y) + z)
    codes, kz = _strata(data, z)
    stat, dof = _g_statistic(data[x], data[y], codes, data.arity(x), data.arity(y), kz)
    p = 1.0 if dof == 0 else float(chi2.sf(stat, dof))
    return CiTestResult(stat, p, p > alpha, dof)


def partial_correlation(corr: np.ndarray, i: int, j: int, cond: Sequence[int]) -> float:
    idx = [i, j] + list(cond)
    sub = corr[np.ix_(idx, idx)]
    if np.linalg.cond(sub) > 1e12:
        raise np.linalg.LinAlgError("singular correlation submatrix")
    prec = np.linalg.inv(sub)
    return float(-prec[0, 1] / math.sqrt(prec[0, 0] * prec[1, 1]))


def fisher_z(data: Dataset, x, y, z: Sequence[str] = (), alpha: float = 0.05, corr=None) -> CiTestResult:
    """Fisher-z test on the partial correlation of ``x`` and ``y`` given ``z``.

    ``statistic = sqrt(n - |z| - 3) * atanh(r)`` with a two-sided normal
    p-value. ``corr`` optionally supplies the correlation matrix of all
    columns (in ``data.names`` order) to avoid recomputation.
    """
    z = _check_ci_args(data, x, y, z)
    n = data.n_rows
    if n <= len(z) + 3:
        raise DatasetError(f"need more than {len(z) + 3} rows for |z| = {len(z)}")
    names = list(data.names)
    if corr is None:
        corr = np.corrcoef(data.matrix(names), rowvar=False)
    pos = {v: i for i, v in enumerate(names)}
    r = partial_correlation(corr, pos[x], pos[y], [pos[v] for v in z])
    return fisher_z_from_r(r, n, len(z), alpha)


def fisher_z_from_r(r, n, cond_size, alpha=0.05) -> CiTestResult:
    r = min(max(r, -1 + 1e-15), 1 - 1e-15)
    stat = math.sqrt(n - cond_size - 3) * math.atanh(r)
    p = float(2 * norm.sf(abs(stat)))
    return CiTestResult(stat, p, p > alpha, n - cond_size - 3)


# ---------------------------------------------------------------------------
# PC


def pc_core(
    vertices: Sequence[str],
    independent: Callable[[str, str, tuple], bool],
    max_cond_size: int | None = DEFAULT_MAX_COND,
) -> Cpdag:
    """PC with the order-independent (stable) skeleton phase.

    ``independent(x, y, S)`` answers one CI query. Conditioning sets at
    each level come from adjacencies frozen at the start of that level;
    removals are applied in sorted pair order. Every collider (middle
    vertex outside the separating set) is oriented and Meek's rules finish
    the pattern. When noisy answers make the colliders contradict each
    other or admit no consistent DAG extension, colliders are instead
    accepted one at a time in declaration order, skipping any that would
    lose extensibility or close a directed cycle. The result is always
    acyclic; when even the skeleton rules out a consistent extension (a
    chordless cycle with no usable collider) it can only be scored through
    relaxed extensions (see :func:`tveval.graphs.enumerate_extensions`).
    """
    vertices = tuple(vertices)
    order = {v: i for i, v in enumerate(vertices)}
    adj = {v: set(vertices) - {v} for v in vertices}
    sepset = {}
    level = 0
    while max_cond_size is None or level <= max_cond_size:
        frozen = {v: sorted(adj[v], key=order.__getitem__) for v in vertices}
        testable = False
        removals = []
        for x, y in itertools.combinations(vertices, 2):
            if y not in adj[x]:
                continue
            found = None
            for a, b in ((x, y), (y, x)):
                cands = [w for w in frozen[a] if w != b]
                if len(cands) < level:
                    continue
                testable = True
                for S in itertools.combinations(cands, level):
                    if independent(a, b, S):
                        found = S
                        break
                if found is not None:
                    break
            if found is not None:
                removals.append((x, y, found))
        for x, y, S in removals:
            adj[x].discard(y)
            adj[y].discard(x)
            sepset[frozenset((x, y))] = frozenset(S)
        if not testable:
            break
        level += 1

    colliders = []
    for z in vertices:
        nbrs = sorted(adj[z], key=order.__getitem__)
        for x, y in itertools.combinations(nbrs, 2):
            if y not in adj[x] and z not in sepset.get(frozenset((x, y)), frozenset()):
                colliders.append((x, z, y))
    skeleton = {frozenset((a, b)) for a in vertices for b in adj[a]}
    arrows = {(x, z) for x, z, _ in colliders} | {(y, z) for _, z, y in colliders}
    p = _Pdag(vertices, arrows, skeleton - {frozenset(e) for e in arrows})
    if any((b, a) in arrows for a, b in arrows) or not _extensible(p):
        # inconsistent CI answers: take colliders in order, never giving up
        # extensibility once reached and never closing a directed cycle
        p = _Pdag(vertices, (), skeleton)
        status = _status(p)
        for x, z, y in colliders:
            if (z, x) in p.directed or (z, y) in p.directed:
                continue
            q = p.copy()
            q.orient(x, z)
            q.orient(y, z)
            sq = _status(q)
            if sq == 2 or (status == 1 and sq == 1):
                p, status = q, sq
    closed = _meek_closure(p.copy(), order)
    if not _has_cycle(vertices, closed.directed):
        p = closed
    return Cpdag(vertices, p.directed, p.undirected)


def _extensible(p: _Pdag) -> bool:
    c = Cpdag(p.vertices, p.directed, p.undirected)
    return next(_extension_search(c, 1), None) is not None


def _status(p: _Pdag) -> int:
    """2: consistently extensible, 1: acyclic only, 0: cyclic."""
    if _extensible(p):
        return 2
    return 0 if _has_cycle(p.vertices, p.directed) else 1


def pc(
    data: Dataset,
    test: str | Callable = "g_test",
    alpha: float = 0.05,
    max_cond_size: int | None = DEFAULT_MAX_COND,
    variables: Sequence[str] | None = None,
) -> Cpdag:
    """PC on ``data`` with the G-test or Fisher-z test (or a custom callable).

    A custom ``test`` has the signature ``(data, x, y, z, alpha) -> CiTestResult``.
    ``variables`` restricts learning to a subset of columns (default: every
    non-id column).
    """
    if variables is None:
        variables = [c for c in data.names if data.spec(c).role != "id"]
    variables = tuple(variables)
    if test == "g_test":
        data.require_discrete(variables)
        arr = {v: data[v] for v in variables}
        ar = {v: data.arity(v) for v in variables}

        def independent(x, y, S):
            if S:
                dims = tuple(ar[v] for v in S)
                codes = np.ravel_multi_index(tuple(arr[v] for v in S), dims)
                kz = int(np.prod(dims))
            else:
                codes, kz = np.zeros(data.n_rows, dtype=np.int64), 1
            stat, dof = _g_statistic(arr[x], arr[y], codes, ar[x], ar[y], kz)
            return dof == 0 or chi2.sf(stat, dof) > alpha

    elif test == "fisher_z":
        corr = np.corrcoef(data.matrix(variables), rowvar=False)
        pos = {v: i for i, v in enumerate(variables)}
        n = data.n_rows

        def independent(x, y, S):
            r = partial_correlation(corr, pos[x], pos[y], [pos[v] for v in S])
            return fisher_z_from_r(r, n, len(S), alpha).independent

    elif callable(test):

        def independent(x, y, S):
            return test(data, x, y, S, alpha).independent

    else:
        raise ValueError(f"unknown CI test {test!r}")
    return pc_core(variables, independent, max_cond_size)


def pc_from_oracle(dag: Dag, max_cond_size: int | None = None) -> Cpdag:
    """PC driven by exact d-separation in ``dag`` (faithful oracle)."""
    return pc_core(dag.vertices, lambda x, y, S: d_separated(dag, x, y, S), max_cond_size)


# ---------------------------------------------------------------------------
# BIC and hill climbing


def local_bic(data: Dataset, v, parents: Sequence[str]) -> float:
    """Log-likelihood at the MLE minus ``(k_v - 1) * prod(k_p) / 2 * ln n``."""
    parents = tuple(parents)
    k = data.arity(v)
    if parents:
        dims = tuple(data.arity(p) for p in parents)
        idx = np.ravel_multi_index(tuple(data[p] for p in parents), dims)
        rows = int(np.prod(dims))
    else:
        idx = np.zeros(data.n_rows, dtype=np.int64)
        rows = 1
    counts = np.bincount(idx * k + data[v], minlength=rows * k).reshape(rows, k).astype(float)
    totals = counts.sum(axis=1, keepdims=True)
    ll = float(np.sum(xlogy(counts, counts)) - np.sum(xlogy(totals, totals)))
    n_params = (k - 1) * rows
    return ll - 0.5 * n_params * math.log(data.n_rows)


def bic_score(dag: Dag, data: Dataset) -> Score:
    """Decomposable BIC of ``dag`` for discrete ``data``."""
    data.require_discrete(dag.vertices)
    if data.n_rows == 0:
        raise DatasetError("empty dataset")
    per = {v: local_bic(data, v, dag.parents(v)) for v in dag.vertices}
    return Score(float(sum(per.values())), per)


def _reaches(children, src, dst):
    stack, seen = [src], {src}
    while stack:
        v = stack.pop()
        if v == dst:
            return True
        for c in children[v]:
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return False


def hill_climb(
    data: Dataset,
    max_iters: int = 1000,
    seed=None,
    variables: Sequence[str] | None = None,
    max_parents: int | None = None,
    return_scores: bool = False,
):
    """Greedy BIC search from the empty graph.

    Each step applies the single edge addition, deletion or reversal with
    the largest score gain; among equal gains the first move in
    lexicographic (vertex order, then add/delete/reverse) order wins. The
    search stops at a local optimum or after ``max_iters`` moves. ``seed`` is
    accepted for interface symmetry; the search is deterministic.
    """
    del seed
    if variables is None:
        variables = [c for c in data.names if data.spec(c).role != "id"]
    vs = tuple(variables)
    data.require_discrete(vs)
    parents = {v: set() for v in vs}
    children = {v: set() for v in vs}
    order = {v: i for i, v in enumerate(vs)}
    cache = {}

    def local(v, ps):
        key = (v, frozenset(ps))
        if key not in cache:
            cache[key] = local_bic(data, v, sorted(ps, key=order.__getitem__))
        return cache[key]

    score = sum(local(v, parents[v]) for v in vs)
    trajectory = [score]
    eps = 1e-9
    for _ in range(max_iters):
        best, best_move = eps, None
        for a, b in itertools.permutations(vs, 2):
            if b in children[a]:
                # delete a -> b
                d = local(b, parents[b] - {a}) - local(b, parents[b])
                if d > best:
                    best, best_move = d, ("del", a, b)
                # reverse a -> b (b -> a); cycle iff another a ~> b path exists
                if max_parents is None or len(parents[a]) < max_parents:
                    children[a].discard(b)
                    cyc = _reaches(children, a, b)
                    children[a].add(b)
                    if not cyc:
                        d = (
                            local(b, parents[b] - {a}) - local(b, parents[b])
                            + local(a, parents[a] | {b}) - local(a, parents[a])
                        )
                        if d > best:
                            best, best_move = d, ("rev", a, b)
            elif a not in children[b]:
                if max_parents is not None and len(parents[b]) >= max_parents:
                    continue
                if _reaches(children, b, a):
                    continue
                d = local(b, parents[b] | {a}) - local(b, parents[b])
                if d > best:
                    best, best_move = d, ("add", a, b)
        if best_move is None:
            break
        op, a, b = best_move
        if op in ("del", "rev"):
            parents[b].discard(a)
            children[a].discard(b)
        if op in ("add",):
            parents[b].add(a)
            children[a].add(b)
        if op == "rev":
            parents[a].add(b)
            children[b].add(a)
        score += best
        trajectory.append(score)
    dag = Dag(vs, [(p, v) for v in vs for p in sorted(parents[v], key=order.__getitem__)])
    return (dag, trajectory) if return_scores else dag


LEARNERS = {
    "pc": pc,
    "hill_climb": hill_climb,
}
