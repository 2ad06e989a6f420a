"""Parameterised causal models: discrete CPT networks and linear-Gaussian SEMs.

Both network types are immutable. Interventions are graph surgery: the
intervened vertex loses its incoming edges and its local model becomes a
point mass. Inference is exact (variable elimination for discrete networks,
moment propagation for linear-Gaussian ones).
"""

from __future__ import annotations

import io
import itertools
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, DatasetError
from .graphs import Dag, ancestors, format_graph, parse_graph

__all__ = [
    "NetworkError",
    "InferenceTooLarge",
    "DiscreteNetwork",
    "GaussianNetwork",
    "Categorical",
    "GaussianMixture",
    "fit_mle_discrete",
    "fit_mle_gaussian",
    "intervene",
    "marginal",
    "marginals",
    "joint_table",
    "gaussian_moments",
    "format_network",
    "parse_network",
    "read_network",
    "write_network",
]

ROW_SUM_TOL = 1e-9
VARIANCE_FLOOR = 1e-12
# largest intermediate factor variable elimination may build
MAX_FACTOR_SIZE = 2**24
JOINT_ENUMERATION_LIMIT = 2**22


class NetworkError(ValueError):
    pass


class InferenceTooLarge(MemoryError):
    """Exact inference would need a factor above ``MAX_FACTOR_SIZE`` cells."""


# ---------------------------------------------------------------------------
# distributions


@dataclass(frozen=True, eq=False)
class Categorical:
    support: tuple
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or len(p) != len(self.support):
            raise NetworkError("support and probabilities differ in length")
        if np.any(p < -ROW_SUM_TOL) or abs(p.sum() - 1.0) > ROW_SUM_TOL:
            raise NetworkError(f"probabilities do not form a distribution: {p}")
        object.__setattr__(self, "probs", p)

    @property
    def mode(self):
        return self.support[int(np.argmax(self.probs))]

    def __repr__(self):
        return f"Categorical({dict(zip(self.support, np.round(self.probs, 6)))})"


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.means, dtype=float))
        v = np.atleast_1d(np.asarray(self.variances, dtype=float))
        w = np.ones_like(m) / len(m) if self.weights is None else np.atleast_1d(np.asarray(self.weights, dtype=float))
        if not (m.shape == v.shape == w.shape) or m.ndim != 1:
            raise NetworkError("mixture component arrays differ in shape")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
            raise NetworkError("non-finite mixture parameters")
        if np.any(v <= 0):
            raise NetworkError("mixture variances must be positive")
        if np.any(w < 0) or abs(w.sum() - 1.0) > ROW_SUM_TOL:
            raise NetworkError("mixture weights do not sum to 1")
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)
        object.__setattr__(self, "weights", w)

    @classmethod
    def normal(cls, mean, variance):
        return cls(np.array([mean]), np.array([variance]), np.array([1.0]))

    @property
    def mean(self) -> float:
        return float(self.weights @ self.means)

    @property
    def variance(self) -> float:
        m = self.mean
        return float(self.weights @ (self.variances + (self.means - m) ** 2))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        sd = np.sqrt(self.variances)
        z = (x - self.means) / sd
        return np.sum(self.weights * np.exp(-0.5 * z * z) / (sd * np.sqrt(2 * np.pi)), axis=-1)

    def cdf(self, x):
        from scipy.special import ndtr

        x = np.asarray(x, dtype=float)[..., None]
        return np.sum(self.weights * ndtr((x - self.means) / np.sqrt(self.variances)), axis=-1)

    def quantile(self, q: float) -> float:
        from scipy.optimize import brentq
        from scipy.stats import norm

        if len(self.means) == 1:
            return float(norm.ppf(q, self.means[0], np.sqrt(self.variances[0])))
        sd = np.sqrt(self.variances.max())
        lo, hi = self.means.min() - 12 * sd, self.means.max() + 12 * sd
        return float(brentq(lambda x: float(self.cdf(x)) - q, lo, hi, xtol=1e-12))

    def __repr__(self):
        if len(self.means) == 1:
            return f"Normal(mean={self.means[0]:.6g}, var={self.variances[0]:.6g})"
        return f"GaussianMixture(k={len(self.means)})"


# ---------------------------------------------------------------------------
# networks


def _row_count(arities, parents):
    return int(np.prod([arities[p] for p in parents], dtype=np.int64))


class DiscreteNetwork:
    """DAG plus one conditional probability table per vertex.

    ``cpts[v]`` has shape ``(rows, arity[v])``; rows enumerate parent
    assignments in row-major order over ``dag.parents(v)`` (declaration
    order, first parent most significant).
    """

    def __init__(self, dag: Dag, arities: Mapping[str, int], cpts: Mapping[str, np.ndarray]):
        self.dag = dag
        self.arities = {v: int(arities[v]) for v in dag.vertices}
        tables = {}
        for v in dag.vertices:
            k = self.arities[v]
            if k < 2:
                raise NetworkError(f"vertex {v!r}: arity must be >= 2")
            t = np.array(cpts[v], dtype=float)
            rows = _row_count(self.arities, dag.parents(v))
            if t.shape != (rows, k):
                raise NetworkError(f"vertex {v!r}: CPT shape {t.shape}, expected {(rows, k)}")
            if np.any(t < 0) or np.any(np.abs(t.sum(axis=1) - 1.0) > ROW_SUM_TOL):
                raise NetworkError(f"vertex {v!r}: CPT rows must be non-negative and sum to 1")
            t.setflags(write=False)
            tables[v] = t
        self.cpts = tables

    @property
    def vertices(self):
        return self.dag.vertices

    def row_index(self, v, assignment: Mapping[str, int]) -> int:
        ps = self.dag.parents(v)
        if not ps:
            return 0
        return int(np.ravel_multi_index(tuple(assignment[p] for p in ps), tuple(self.arities[p] for p in ps)))

    def conditional(self, v, assignment: Mapping[str, int]) -> Categorical:
        """``P(v | parents = assignment)``; extra keys are ignored."""
        return Categorical(tuple(range(self.arities[v])), self.cpts[v][self.row_index(v, assignment)])

    def factor(self, v):
        ps = self.dag.parents(v)
        shape = tuple(self.arities[p] for p in ps) + (self.arities[v],)
        return ps + (v,), self.cpts[v].reshape(shape)

    def __repr__(self):
        return f"DiscreteNetwork({self.dag!r}, arities={self.arities})"


class GaussianNetwork:
    """Linear-Gaussian structural equation model.

    ``X_v = intercepts[v] + sum_u weights[(u, v)] * X_u + N(0, noise_variance[v])``.
    Vertices in ``intervened`` are point masses at their intercept and carry
    zero noise variance; every other vertex needs positive variance.
    """

    def __init__(self, dag, weights, intercepts=None, noise_variance=None, intervened=()):
        self.dag = dag
        weights = {tuple(e): float(w) for e, w in weights.items()}
        if set(weights) != set(dag.edges):
            extra = set(weights) - set(dag.edges)
            missing = set(dag.edges) - set(weights)
            raise NetworkError(f"weights must match edges (extra {sorted(extra)}, missing {sorted(missing)})")
        self.weights = weights
        self.intercepts = {v: float((intercepts or {}).get(v, 0.0)) for v in dag.vertices}
        nv = noise_variance or {}
        self.noise_variance = {v: float(nv.get(v, 1.0)) for v in dag.vertices}
        self.intervened = frozenset(intervened)
        for v in dag.vertices:
            s2 = self.noise_variance[v]
            if v in self.intervened:
                if s2 != 0.0 or dag.parents(v):
                    raise NetworkError(f"intervened vertex {v!r} must be a parentless point mass")
            elif not (np.isfinite(s2) and s2 > 0):
                raise NetworkError(f"vertex {v!r}: noise variance must be positive, got {s2}")
        for x in list(self.weights.values()) + list(self.intercepts.values()):
            if not np.isfinite(x):
                raise NetworkError("non-finite parameter")

    @property
    def vertices(self):
        return self.dag.vertices

    def conditional(self, v, assignment: Mapping[str, float]) -> GaussianMixture | Categorical:
        mean = self.intercepts[v] + sum(self.weights[(u, v)] * assignment[u] for u in self.dag.parents(v))
        if v in self.intervened:
            return Categorical((mean,), np.array([1.0]))
        return GaussianMixture.normal(mean, self.noise_variance[v])

    def __repr__(self):
        return f"GaussianNetwork({self.dag!r})"


# ---------------------------------------------------------------------------
# fitting


def _check_columns(dag, data):
    if data.n_rows == 0:
        raise DatasetError("empty dataset")
    missing = [v for v in dag.vertices if v not in data]
    if missing:
        raise DatasetError(f"dataset lacks columns {missing}")


def fit_mle_discrete(dag: Dag, data: Dataset, pseudocount: float = 0.0) -> DiscreteNetwork:
    """Maximum-likelihood (optionally smoothed) CPTs for ``dag`` from ``data``.

    Each row is ``(count + pseudocount) / (row_total + k * pseudocount)``;
    a parent configuration that was never observed, with no pseudocount,
    gets a uniform row.
    """
    _check_columns(dag, data)
    data.require_discrete(dag.vertices)
    if pseudocount < 0:
        raise ValueError("pseudocount must be non-negative")
    arities = {v: data.arity(v) for v in dag.vertices}
    cpts = {}
    for v in dag.vertices:
        k = arities[v]
        counts = _family_counts(data, v, dag.parents(v), arities)
        counts = counts + pseudocount
        totals = counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            table = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / k)
        cpts[v] = table
    return DiscreteNetwork(dag, arities, cpts)


def _family_counts(data, v, parents, arities):
    k = arities[v]
    rows = _row_count(arities, parents)
    if parents:
        idx = np.ravel_multi_index(tuple(data[p] for p in parents), tuple(arities[p] for p in parents))
    else:
        idx = np.zeros(data.n_rows, dtype=np.int64)
    flat = np.bincount(idx * k + data[v], minlength=rows * k)
    return flat.reshape(rows, k).astype(float)


def fit_mle_gaussian(dag: Dag, data: Dataset) -> GaussianNetwork:
    """Per-vertex OLS on parents plus intercept.

    Noise variance is ``RSS / (n - p - 1)`` floored at ``VARIANCE_FLOOR``.
    """
    _check_columns(dag, data)
    n = data.n_rows
    weights, intercepts, variances = {}, {}, {}
    for v in dag.vertices:
        ps = dag.parents(v)
        p = len(ps)
        if n <= p + 1:
            raise NetworkError(f"vertex {v!r}: need more than {p + 1} rows, have {n}")
        X = np.column_stack([np.ones(n)] + [data[u].astype(float) for u in ps])
        y = data[v].astype(float)
        if np.linalg.matrix_rank(X) < p + 1:
            raise NetworkError(f"vertex {v!r}: rank-deficient design matrix")
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        resid = y - X @ coef
        intercepts[v] = float(coef[0])
        for u, w in zip(ps, coef[1:]):
            weights[(u, v)] = float(w)
        variances[v] = max(float(resid @ resid) / (n - p - 1), VARIANCE_FLOOR)
    return GaussianNetwork(dag, weights, intercepts, variances)


# ---------------------------------------------------------------------------
# surgery


def intervene(net, v, value):
    """Return ``net`` under ``do(v = value)``."""
    net.dag.check_vertex(v)
    dag = net.dag.without_incoming(v)
    if isinstance(net, DiscreteNetwork):
        k = net.arities[v]
        if isinstance(value, (bool, np.bool_)) or int(value) != value or not 0 <= int(value) < k:
            raise NetworkError(f"intervention value {value!r} invalid for {v!r} with arity {k}")
        cpts = dict(net.cpts)
        cpts[v] = np.eye(k)[[int(value)]]
        return DiscreteNetwork(dag, net.arities, cpts)
    if isinstance(net, GaussianNetwork):
        value = float(value)
        if not np.isfinite(value):
            raise NetworkError("intervention value must be finite")
        weights = {e: w for e, w in net.weights.items() if e[1] != v}
        intercepts = dict(net.intercepts)
        intercepts[v] = value
        noise = dict(net.noise_variance)
        noise[v] = 0.0
        return GaussianNetwork(dag, weights, intercepts, noise, net.intervened | {v})
    raise TypeError(f"unsupported network type {type(net).__name__}")


# ---------------------------------------------------------------------------
# discrete inference


def _contract(factors, out_vars, arities):
    """Multiply ``factors`` and sum out everything not in ``out_vars``."""
    ids = {}
    args = []
    for vars_, table in factors:
        args.append(table)
        args.append([ids.setdefault(x, len(ids)) for x in vars_])
    for x in out_vars:
        ids.setdefault(x, len(ids))
    args.append([ids[x] for x in out_vars])
    if not factors:
        return np.ones(tuple(arities[x] for x in out_vars))
    return np.einsum(*args, optimize=len(factors) > 2)


def _variable_elimination(factors, keep, arities, order_key):
    keep = tuple(keep)
    factors = list(factors)
    pending = set().union(*(set(f[0]) for f in factors)) - set(keep) if factors else set()
    while pending:
        def cost(x):
            scope = set()
            for vars_, _ in factors:
                if x in vars_:
                    scope.update(vars_)
            return int(np.prod([arities[s] for s in scope], dtype=np.int64)), order_key(x)

        x = min(pending, key=cost)
        size = cost(x)[0]
        if size > MAX_FACTOR_SIZE:
            raise InferenceTooLarge(f"elimination needs a factor of {size} cells")
        involved = [f for f in factors if x in f[0]]
        rest = [f for f in factors if x not in f[0]]
        scope = []
        for vars_, _ in involved:
            scope.extend(s for s in vars_ if s != x and s not in scope)
        rest.append((tuple(scope), _contract(involved, scope, arities)))
        factors = rest
        pending.discard(x)
    return _contract(factors, keep, arities)


def _discrete_marginal(net: DiscreteNetwork, v) -> Categorical:
    relevant = ancestors(net.dag, v) | {v}
    factors = [net.factor(u) for u in net.dag.vertices if u in relevant]
    table = _variable_elimination(factors, (v,), net.arities, net.dag.index)
    table = np.clip(table, 0.0, None)
    return Categorical(tuple(range(net.arities[v])), table / table.sum())


def joint_table(net: DiscreteNetwork) -> np.ndarray:
    """Full joint distribution; axes follow ``net.vertices``."""
    size = int(np.prod([net.arities[v] for v in net.vertices], dtype=np.int64))
    if size > JOINT_ENUMERATION_LIMIT:
        raise InferenceTooLarge(f"joint table would have {size} cells")
    factors = [net.factor(u) for u in net.vertices]
    return _contract(factors, net.vertices, net.arities)


# ---------------------------------------------------------------------------
# Gaussian inference


def gaussian_moments(net: GaussianNetwork):
    """Mean vector and covariance matrix, indexed by ``net.vertices``."""
    vs = net.vertices
    n = len(vs)
    B = np.zeros((n, n))
    for (u, v), w in net.weights.items():
        B[net.dag.index(v), net.dag.index(u)] = w
    b = np.array([net.intercepts[v] for v in vs])
    D = np.diag([net.noise_variance[v] for v in vs])
    A = np.linalg.solve(np.eye(n) - B, np.eye(n))
    return A @ b, A @ D @ A.T


def _gaussian_marginal_from_moments(net, mean, cov, v):
    i = net.dag.index(v)
    if v in net.intervened:
        return Categorical((float(mean[i]),), np.array([1.0]))
    return GaussianMixture.normal(float(mean[i]), float(cov[i, i]))


# ---------------------------------------------------------------------------
# public inference entry points


def marginal(net, v, method: str = "ve"):
    """Exact marginal distribution of ``v``.

    ``method="joint"`` forces full joint enumeration for discrete networks
    (useful as a cross-check); Gaussian networks ignore it.
    """
    net.dag.check_vertex(v)
    if isinstance(net, DiscreteNetwork):
        if method == "joint":
            joint = joint_table(net)
            axis = tuple(i for i, u in enumerate(net.vertices) if u != v)
            table = joint.sum(axis=axis)
            return Categorical(tuple(range(net.arities[v])), table / table.sum())
        if method != "ve":
            raise ValueError(f"unknown method {method!r}")
        return _discrete_marginal(net, v)
    if isinstance(net, GaussianNetwork):
        mean, cov = gaussian_moments(net)
        return _gaussian_marginal_from_moments(net, mean, cov, v)
    raise TypeError(f"unsupported network type {type(net).__name__}")


def marginals(net, targets=None) -> dict:
    """Marginals for several vertices, sharing work where possible."""
    targets = list(net.vertices if targets is None else targets)
    if isinstance(net, GaussianNetwork):
        mean, cov = gaussian_moments(net)
        return {v: _gaussian_marginal_from_moments(net, mean, cov, v) for v in targets}
    return {v: marginal(net, v) for v in targets}


# ---------------------------------------------------------------------------
# text format


def _fmt(x) -> str:
    return repr(float(x))


def format_network(net) -> str:
    """Serialise a network; floats use shortest round-trip repr."""
    out = io.StringIO()
    if isinstance(net, DiscreteNetwork):
        out.write("network: discrete\n[graph]\n")
        out.write(format_graph(net.dag))
        out.write("[arities]\n")
        for v in net.vertices:
            out.write(f"{v}: {net.arities[v]}\n")
        out.write("[cpts]\n")
        for v in net.vertices:
            ps = net.dag.parents(v)
            assignments = itertools.product(*(range(net.arities[p]) for p in ps))
            for row, assign in zip(net.cpts[v], assignments):
                probs = " ".join(_fmt(p) for p in row)
                out.write(f"{v} | {','.join(map(str, assign))} | {probs}\n")
    elif isinstance(net, GaussianNetwork):
        out.write("network: gaussian\n[graph]\n")
        out.write(format_graph(net.dag))
        out.write("[weights]\n")
        for a, b in net.dag.sorted_edges():
            out.write(f"{a} -> {b}: {_fmt(net.weights[(a, b)])}\n")
        out.write("[intercepts]\n")
        for v in net.vertices:
            out.write(f"{v}: {_fmt(net.intercepts[v])}\n")
        out.write("[noise_variance]\n")
        for v in net.vertices:
            out.write(f"{v}: {_fmt(net.noise_variance[v])}\n")
        if net.intervened:
            out.write("[intervened]\n")
            for v in net.vertices:
                if v in net.intervened:
                    out.write(f"{v}\n")
    else:
        raise TypeError(f"unsupported network type {type(net).__name__}")
    return out.getvalue()


def _sections(text):
    lines = text.splitlines()
    if not lines or not lines[0].startswith("network:"):
        raise NetworkError("missing 'network:' header")
    kind = lines[0].split(":", 1)[1].strip()
    sections, current = {}, None
    for raw in lines[1:]:
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        elif line and current is not None:
            sections[current].append(line)
    return kind, sections


def parse_network(text: str):
    kind, sec = _sections(text)
    try:
        dag = parse_graph("\n".join(sec["graph"]), kind="dag")
    except KeyError:
        raise NetworkError("missing [graph] section") from None
    if kind == "discrete":
        arities = {}
        for line in sec.get("arities", []):
            v, k = line.split(":")
            arities[v.strip()] = int(k)
        rows = {v: [] for v in dag.vertices}
        for line in sec.get("cpts", []):
            v, assign, probs = (s.strip() for s in line.split("|"))
            rows[v].append((assign, [float(p) for p in probs.split()]))
        cpts = {}
        for v in dag.vertices:
            ps = dag.parents(v)
            expected = [",".join(map(str, a)) for a in itertools.product(*(range(arities[p]) for p in ps))]
            got = [a for a, _ in rows[v]]
            if got != expected:
                raise NetworkError(f"vertex {v!r}: CPT rows out of order or incomplete")
            cpts[v] = np.array([r for _, r in rows[v]])
        return DiscreteNetwork(dag, arities, cpts)
    if kind == "gaussian":
        weights = {}
        for line in sec.get("weights", []):
            edge, w = line.rsplit(":", 1)
            a, b = (s.strip() for s in edge.split("->"))
            weights[(a, b)] = float(w)

        def kv(name):
            out = {}
            for line in sec.get(name, []):
                v, x = line.split(":")
                out[v.strip()] = float(x)
            return out

        return GaussianNetwork(
            dag, weights, kv("intercepts"), kv("noise_variance"), [s.strip() for s in sec.get("intervened", [])]
        )
    raise NetworkError(f"unknown network kind {kind!r}")


def read_network(path):
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


def write_network(net, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_network(net))
