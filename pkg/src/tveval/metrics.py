"""Structural distances between a true DAG and an estimated DAG or CPDAG."""

from __future__ import annotations

import csv
import io
from collections.abc import Callable
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .graphs import Cpdag, Dag, GraphError, _as_set, d_connected_set, descendants, edge_status, enumerate_extensions

__all__ = [
    "MetricResult",
    "shd",
    "is_valid_adjustment",
    "sid",
    "metric_on_cpdag",
    "CRITERIA",
]

CRITERIA = ("backdoor", "generalized")


@dataclass(frozen=True)
class MetricResult:
    """Metric value plus, for SID, per ordered pair whether it passed."""

    value: float
    per_pair_detail: dict | None = None

    def __float__(self):
        return float(self.value)

    def detail_csv(self, vertices) -> str:
        """Per-pair detail as a CSV matrix: row = intervened, column = outcome.

        Cells hold 1 for a correctly identified pair, 0 for a miss, blank on
        the diagonal.
        """
        if self.per_pair_detail is None:
            raise ValueError("no per-pair detail recorded")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + list(vertices))
        for a in vertices:
            w.writerow([a] + ["" if a == b else int(self.per_pair_detail[(a, b)]) for b in vertices])
        return buf.getvalue()


def _same_vertices(g, h):
    if set(g.vertices) != set(h.vertices):
        diff = sorted(set(g.vertices) ^ set(h.vertices))
        raise GraphError(f"vertex sets differ: {diff}")


def shd(g, h) -> MetricResult:
    """Structural Hamming distance.

    Every vertex pair whose status differs (absent, ``a->b``, ``b->a`` or
    undirected) costs 1, so a reversal counts once.
    """
    _same_vertices(g, h)
    sg, sh = edge_status(g), edge_status(h)
    count = sum(1 for p in set(sg) | set(sh) if sg.get(p) != sh.get(p))
    return MetricResult(float(count))


@lru_cache(maxsize=1 << 18)
def _valid(g: Dag, t, o, z: frozenset, criterion: str) -> bool:
    de_t = descendants(g, t)
    if o in z:
        # the adjustment formula then returns P(o): right iff t cannot affect o
        return o not in de_t
    if criterion == "backdoor":
        if z & de_t:
            return False
        cut = g.without_outgoing(t)
        return o not in d_connected_set(cut, t, z)
    # generalized adjustment criterion
    if o in de_t:
        # vertices on directed t ~> o paths, t excluded
        causal = {w for w in de_t if w == o or o in descendants(g, w)}
        forbidden = set(causal)
        for w in causal:
            forbidden |= descendants(g, w)
        if z & forbidden:
            return False
        cut = g.without_outgoing(t, only=[c for c in g.children(t) if c in causal])
    else:
        cut = g
    return o not in d_connected_set(cut, t, z)


def is_valid_adjustment(g: Dag, t, o, z=(), criterion: str = "backdoor") -> bool:
    """Whether ``z`` identifies ``P(o | do(t))`` by covariate adjustment in ``g``.

    ``criterion="backdoor"``: ``z`` holds no descendant of ``t`` and
    d-separates ``t`` and ``o`` once the edges out of ``t`` are removed.
    ``criterion="generalized"``: the complete adjustment criterion, which
    also accepts descendants of ``t`` that lie off every causal path.

    If ``o`` itself is in ``z`` the adjustment reduces to ``P(o)``, which is
    correct exactly when ``o`` is not a descendant of ``t``.
    """
    g.check_vertex(t)
    g.check_vertex(o)
    z = _as_set(g, z)
    if t == o:
        raise GraphError("treatment and outcome must differ")
    if t in z:
        raise GraphError("the adjustment set may not contain the treatment")
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}")
    return _valid(g, t, o, z, criterion)


def sid(g: Dag, h: Dag, criterion: str = "generalized", penalize_edges: bool = False) -> MetricResult:
    """Structural intervention distance of estimate ``h`` from truth ``g``.

    Counts ordered pairs ``(a, b)`` where ``a`` is a parent of ``b`` in ``g``
    while ``b`` is a parent of ``a`` in ``h``, or where ``h``'s parent set of
    ``a`` is not a valid adjustment set for ``P(b | do(a))`` in ``g``.
    ``penalize_edges`` adds ``max(0, |E(h)| - |E(g)|)``.
    """
    _same_vertices(g, h)
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}")
    detail = {}
    count = 0
    for a in g.vertices:
        z = frozenset(h.parents(a))
        for b in g.vertices:
            if a == b:
                continue
            ok = not (a in g.parents(b) and b in z) and _valid(g, a, b, z, criterion)
            detail[(a, b)] = ok
            count += not ok
    if penalize_edges:
        count += max(0, len(h.edges) - len(g.edges))
    return MetricResult(float(count), detail)


def metric_on_cpdag(
    g: Dag,
    c,
    metric: str | Callable,
    cap: int = 100,
    seed: int = 0,
    tv_context=None,
) -> MetricResult:
    """Mean of ``metric`` over the consistent extensions of ``c``.

    ``metric`` is ``"shd"``, ``"sid"``, ``"tv"`` or a callable
    ``(true_dag, extension) -> float``. ``"tv"`` needs ``tv_context``, a
    callable ``extension -> float`` (see :class:`tveval.harness.TvContext`).
    At most ``cap`` extensions are used; see :func:`enumerate_extensions`.
    A pattern without a consistent extension is averaged over its relaxed
    (acyclic, v-structures ignored) orientations, so any acyclic learner
    output can be scored.
    """
    if isinstance(c, Dag):
        c = Cpdag.from_dag(c)
    _same_vertices(g, c)
    if metric == "shd":
        fn = lambda e: shd(g, e).value  # noqa: E731
    elif metric == "sid":
        fn = lambda e: sid(g, e).value  # noqa: E731
    elif metric == "tv":
        if tv_context is None:
            raise ValueError("metric 'tv' needs a tv_context")
        fn = tv_context
    elif callable(metric):
        fn = lambda e: metric(g, e)  # noqa: E731
    else:
        raise ValueError(f"unknown metric {metric!r}")
    exts = enumerate_extensions(c, cap, seed, relaxed=True)
    values = [float(fn(e)) for e in exts]
    return MetricResult(float(np.mean(values)))
