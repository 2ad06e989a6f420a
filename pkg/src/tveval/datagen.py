"""Synthetic benchmark generation.

Random structures, the three parameter families (linear-Gaussian, Dirichlet
CPTs, logistic CPTs), ancestral sampling, factorial interventional designs,
logistic treatment biasing and look-alike configurations of the real
domains. Every generator is a pure function of its arguments and ``seed``.
"""

from __future__ import annotations

import itertools
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .dataset import Dataset, DatasetError, continuous, discrete, integer
from .graphs import Dag, descendants, topological_order
from .networks import DiscreteNetwork, GaussianNetwork, intervene

__all__ = [
    "FAMILIES",
    "GenConfig",
    "LookalikeConfig",
    "random_dag",
    "gen_linear_gaussian",
    "gen_dirichlet",
    "gen_logistic",
    "generate_network",
    "sample",
    "factorial_dataset",
    "bias_sample",
    "mutate_overspecify",
    "mutate_underspecify",
    "lookalike_config",
    "lookalike_structure",
    "consistent_dag",
    "generate_lookalike",
    "observational_network",
]

FAMILIES = ("linear_gaussian", "dirichlet", "logistic")
MAX_FACTORIAL_TREATMENTS = 20


def _rng(seed):
    return np.random.default_rng(seed)


def vertex_names(n, prefix="V"):
    return [f"{prefix}{i + 1}" for i in range(n)]


def random_dag(n: int, expected_neighborhood: float, seed=None, names: Sequence[str] | None = None) -> Dag:
    """Random DAG with the given expected total degree per vertex.

    A uniformly random vertex order is drawn and each of the ``n(n-1)/2``
    order-respecting pairs becomes an edge with probability
    ``expected_neighborhood / (n - 1)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        if expected_neighborhood != 0:
            raise ValueError("a single vertex has no neighbours")
        prob = 0.0
    else:
        if not 0 <= expected_neighborhood <= n - 1:
            raise ValueError(f"expected_neighborhood must lie in [0, {n - 1}]")
        prob = expected_neighborhood / (n - 1)
    names = list(names) if names is not None else vertex_names(n)
    if len(names) != n:
        raise ValueError("names must have length n")
    rng = _rng(seed)
    perm = rng.permutation(n)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < prob
    edges = [(names[perm[i]], names[perm[j]]) for i, j in zip(iu[keep], ju[keep])]
    return Dag(names, edges)


# ---------------------------------------------------------------------------
# parameter families


def gen_linear_gaussian(
    dag: Dag,
    weight_interval=(0.1, 1.0),
    strength_multiplier: float = 1.0,
    seed=None,
    random_sign: bool = False,
) -> GaussianNetwork:
    """Edge weights ``Uniform(weight_interval) * strength_multiplier``; N(0, 1) noise."""
    lo, hi = map(float, weight_interval)
    if not 0 < lo <= hi:
        raise ValueError("weight interval must satisfy 0 < lo <= hi")
    if strength_multiplier <= 0:
        raise ValueError("strength_multiplier must be positive")
    rng = _rng(seed)
    edges = dag.sorted_edges()
    w = rng.uniform(lo, hi, size=len(edges)) * strength_multiplier
    if random_sign:
        w *= rng.choice([-1.0, 1.0], size=len(edges))
    return GaussianNetwork(dag, dict(zip(edges, w.tolist())))


def _arities(dag, k):
    if isinstance(k, Mapping):
        return {v: int(k[v]) for v in dag.vertices}
    return {v: int(k) for v in dag.vertices}


def dirichlet_base(k: int) -> tuple[np.ndarray, float]:
    """``mu = (1/1, 1/2, ..., 1/k)`` and ``alpha = 1 / sum(mu)``."""
    mu = 1.0 / np.arange(1, k + 1)
    return mu, 1.0 / mu.sum()


def gen_dirichlet(dag: Dag, k=2, S: float = 10.0, seed=None, strength_multiplier: float = 1.0) -> DiscreteNetwork:
    """CPT rows drawn from ``Dirichlet(S * alpha * mu_a)``.

    Parent assignments are numbered ``a = 1..A`` in row-major order and
    ``mu_a`` is ``mu`` rotated right by ``a`` positions. ``k`` may be an int
    or a per-vertex mapping. A strength multiplier ``m`` uses ``S / m``.
    """
    arities = _arities(dag, k)
    if any(a < 2 for a in arities.values()):
        raise ValueError("arity must be >= 2")
    if S <= 0 or strength_multiplier <= 0:
        raise ValueError("S and strength_multiplier must be positive")
    s_eff = S / strength_multiplier
    rng = _rng(seed)
    cpts = {}
    for v in dag.vertices:
        kv = arities[v]
        mu, alpha = dirichlet_base(kv)
        rows = int(np.prod([arities[p] for p in dag.parents(v)], dtype=np.int64))
        table = np.empty((rows, kv))
        for r in range(rows):
            table[r] = rng.dirichlet(s_eff * alpha * np.roll(mu, r + 1))
        # tiny concentrations can underflow to exact zeros; keep rows valid
        table = np.maximum(table, np.finfo(float).tiny)
        cpts[v] = table / table.sum(axis=1, keepdims=True)
    return DiscreteNetwork(dag, arities, cpts)


def gen_logistic(dag: Dag, delta: float = 0.375, seed=None, strength_multiplier: float = 1.0) -> DiscreteNetwork:
    """Binary network with ``P(X=1 | x) = expit(sum_j x_j W_j)``, ``W_j`` in ``{+d, -d}``.

    Weights belong to vertices (a parent contributes the same weight to
    every child). ``d = delta * strength_multiplier``.
    """
    if delta <= 0 or strength_multiplier <= 0:
        raise ValueError("delta and strength_multiplier must be positive")
    d = delta * strength_multiplier
    rng = _rng(seed)
    W = dict(zip(dag.vertices, rng.choice([d, -d], size=len(dag))))
    cpts = {}
    for v in dag.vertices:
        ps = dag.parents(v)
        w = np.array([W[p] for p in ps])
        states = np.array(list(itertools.product((0, 1), repeat=len(ps))), dtype=float).reshape(2 ** len(ps), len(ps))
        p1 = expit(states @ w)
        cpts[v] = np.column_stack([1 - p1, p1])
    net = DiscreteNetwork(dag, {v: 2 for v in dag.vertices}, cpts)
    net.vertex_weights = W
    return net


@dataclass(frozen=True)
class GenConfig:
    """Random structure plus one parameter family."""

    n_vertices: int = 14
    expected_neighborhood: float = 2.0
    family: str = "dirichlet"
    weight_interval: tuple = (0.1, 1.0)
    S: float = 10.0
    arity: int = 2
    delta: float = 0.375
    strength_multiplier: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.n_vertices > 1 and not self.expected_neighborhood < self.n_vertices:
            raise ValueError("expected_neighborhood must be below n_vertices")
        if self.S <= 0 or self.delta <= 0 or self.arity < 2 or self.strength_multiplier <= 0:
            raise ValueError("invalid family parameters")
        lo, hi = self.weight_interval
        if not 0 < lo <= hi:
            raise ValueError("invalid weight interval")


def generate_network(cfg: GenConfig, dag: Dag | None = None):
    """Structure (unless given) and parameters for ``cfg``.

    Structure and parameters use independent streams spawned from ``seed``.
    """
    s_struct, s_param = np.random.SeedSequence(cfg.seed).spawn(2)
    if dag is None:
        dag = random_dag(cfg.n_vertices, cfg.expected_neighborhood, s_struct)
    if cfg.family == "linear_gaussian":
        return gen_linear_gaussian(dag, cfg.weight_interval, cfg.strength_multiplier, s_param)
    if cfg.family == "dirichlet":
        return gen_dirichlet(dag, cfg.arity, cfg.S, s_param, cfg.strength_multiplier)
    return gen_logistic(dag, cfg.delta, s_param, cfg.strength_multiplier)


# ---------------------------------------------------------------------------
# sampling


def _specs_for(net, roles=None):
    roles = roles or {}
    if isinstance(net, DiscreteNetwork):
        return {v: discrete(net.arities[v], roles.get(v, "covariate")) for v in net.vertices}
    return {v: continuous(roles.get(v, "covariate")) for v in net.vertices}


def _draw_discrete(table_rows, u):
    cum = np.cumsum(table_rows, axis=1)
    cum[:, -1] = 1.0
    return (u[:, None] > cum).sum(axis=1)


def _ancestral(net, n, noise, given=None):
    """Ancestral pass driven by pre-drawn per-vertex noise columns.

    ``noise[v]`` is uniform(0,1) for discrete networks and standard normal
    for Gaussian ones. Vertices in ``given`` are copied, not sampled.
    """
    given = given or {}
    out = {}
    for v in topological_order(net.dag):
        if v in given:
            out[v] = np.asarray(given[v])
            continue
        ps = net.dag.parents(v)
        if isinstance(net, DiscreteNetwork):
            if ps:
                idx = np.ravel_multi_index(tuple(out[p] for p in ps), tuple(net.arities[p] for p in ps))
            else:
                idx = np.zeros(n, dtype=np.int64)
            out[v] = _draw_discrete(net.cpts[v][idx], noise[v])
        else:
            x = np.full(n, net.intercepts[v])
            for p in ps:
                x = x + net.weights[(p, v)] * out[p]
            out[v] = x + np.sqrt(net.noise_variance[v]) * noise[v]
    return out


def _noise(net, n, rng):
    if isinstance(net, DiscreteNetwork):
        return {v: rng.random(n) for v in net.vertices}
    return {v: rng.standard_normal(n) for v in net.vertices}


def sample(net, n: int, seed=None, roles: Mapping[str, str] | None = None) -> Dataset:
    """``n`` independent joint draws by ancestral sampling."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    cols = _ancestral(net, n, _noise(net, n, rng))
    return Dataset({v: cols[v] for v in net.vertices}, _specs_for(net, roles))


def factorial_dataset(net, subjects: int, treatments: Sequence[str], seed=None, id_column: str = "id") -> Dataset:
    """Every subject under every joint assignment of binary treatments.

    Covariates (vertices that are neither treatments nor their descendants)
    are drawn once per subject. Each subject also keeps one exogenous noise
    draw per outcome, shared across its ``2^k`` rows, so rows of a subject
    are that unit's potential outcomes. Rows are subject-major with
    assignments in binary counting order (first treatment most
    significant).
    """
    treatments = list(treatments)
    k = len(treatments)
    if k > MAX_FACTORIAL_TREATMENTS:
        raise MemoryError(f"{k} treatments give 2^{k} rows per subject")
    if subjects < 1:
        raise ValueError("subjects must be >= 1")
    for t in treatments:
        net.dag.check_vertex(t)
        if isinstance(net, DiscreteNetwork) and net.arities[t] != 2:
            raise ValueError(f"treatment {t!r} is not binary")
    if id_column in net.vertices:
        raise ValueError(f"id column name {id_column!r} clashes with a vertex")
    affected = set(treatments)
    for t in treatments:
        affected |= descendants(net.dag, t)
    roles = {v: "outcome" for v in affected}
    roles.update({t: "treatment" for t in treatments})
    rng = _rng(seed)
    noise = _noise(net, subjects, rng)
    base = _ancestral(net, subjects, noise)
    covariates = {v: base[v] for v in net.vertices if v not in affected}
    assignments = list(itertools.product((0, 1), repeat=k))
    blocks = []
    for assign in assignments:
        do_net = net
        for t, x in zip(treatments, assign):
            do_net = intervene(do_net, t, x)
        blocks.append(_ancestral(do_net, subjects, noise, covariates))
    m = len(assignments)
    cols = {id_column: np.repeat(np.arange(subjects), m)}
    for v in net.vertices:
        stacked = np.stack([b[v] for b in blocks], axis=1)  # subjects x assignments
        cols[v] = stacked.reshape(-1)
    if isinstance(net, DiscreteNetwork):
        for t in treatments:
            cols[t] = cols[t].astype(np.int64)
    specs = {id_column: integer("id")}
    specs.update(_specs_for(net, roles))
    if isinstance(net, GaussianNetwork):
        for t in treatments:
            specs[t] = discrete(2, "treatment")
            cols[t] = np.rint(cols[t]).astype(np.int64)
    return Dataset(cols, specs)


def bias_sample(interventional: Dataset, beta: float, c: str, seed=None) -> Dataset:
    """Keep one row per subject, choosing treatments by a logistic rule.

    Treatments are the ``treatment``-role columns in column order, numbered
    ``j = 1..k``. Subject ``e`` with covariate code ``C_e`` (state + 1 of
    discrete column ``c``) gets sign ``+1`` when ``C_e * j`` is even and
    ``-1`` otherwise, and ``T_j ~ Bernoulli(expit(sign * beta))``. The row
    of ``e`` matching the drawn assignment is emitted.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    id_col = _id_column(interventional)
    spec = interventional.spec(c)
    if spec.kind != "discrete":
        raise DatasetError(f"biasing covariate {c!r} must be a discrete column coded 1..l")
    treatments = interventional.with_role("treatment")
    if not treatments:
        raise DatasetError("no treatment columns")
    for t in treatments:
        if interventional.spec(t).kind != "discrete" or interventional.spec(t).arity != 2:
            raise DatasetError(f"treatment {t!r} is not binary")
    ids = interventional[id_col]
    T = interventional.matrix(treatments, dtype=np.int64).astype(np.int64)
    C = interventional[c]
    subjects, first, inverse = np.unique(ids, return_index=True, return_inverse=True)
    varying = np.flatnonzero(C != C[first][inverse])
    if varying.size:
        raise DatasetError(f"subject {ids[varying[0]]}: biasing covariate varies across rows")
    order = np.argsort(first)
    subjects, first = subjects[order], first[order]
    code = C[first] + 1
    k = len(treatments)
    j = np.arange(1, k + 1)
    sign = np.where((code[:, None] * j[None, :]) % 2 == 0, 1.0, -1.0)
    p = expit(sign * beta)
    rng = _rng(seed)
    draws = (rng.random(p.shape) < p).astype(np.int64)
    lookup = {}
    for row, (e, assign) in enumerate(zip(ids.tolist(), map(tuple, T.tolist()))):
        lookup.setdefault((e, assign), row)
    rows = []
    for e, assign in zip(subjects.tolist(), map(tuple, draws.tolist())):
        try:
            rows.append(lookup[(e, assign)])
        except KeyError:
            raise DatasetError(f"subject {e} has no row for assignment {assign}") from None
    return interventional.take(rows)


def _id_column(data):
    ids = data.with_role("id")
    if len(ids) != 1:
        raise DatasetError(f"expected one id column, found {ids}")
    return ids[0]


def treatment_signs(codes, k):
    """Parity signs for covariate codes (1-based) and treatments ``1..k``."""
    codes = np.asarray(codes)
    j = np.arange(1, k + 1)
    return np.where((codes[:, None] * j[None, :]) % 2 == 0, 1, -1)


# ---------------------------------------------------------------------------
# structure mutations


def mutate_overspecify(g: Dag, t, outcomes) -> Dag:
    """Add ``t -> o`` for every outcome not already a child of ``t``."""
    g.check_vertex(t)
    add = [(t, o) for o in outcomes if o not in g.children(t)]
    for o in outcomes:
        g.check_vertex(o)
    return g.with_edges(add=add)


def mutate_underspecify(g: Dag, t) -> Dag:
    """Remove every edge out of ``t``."""
    return g.without_outgoing(t)


# ---------------------------------------------------------------------------
# look-alike configurations

_LOOKALIKE = {
    # treatments / outcomes / covariates follow the variable lists of each
    # real system; subjects follow the released datasets
    "J": dict(name="JDK", subjects=473, n_treatments=4, n_outcomes=4, n_covariates=5),
    "P": dict(name="Postgres", subjects=5000, n_treatments=3, n_outcomes=4, n_covariates=5),
    "H": dict(name="HTTP", subjects=2599, n_treatments=3, n_outcomes=5, n_covariates=1),
}


@dataclass(frozen=True)
class LookalikeConfig:
    """Shape of a synthetic stand-in for one of the real domains.

    Only ``subjects`` and (for JDK) ``n_treatments`` are fixed by the real
    data; the remaining counts and structural knobs are defaults.
    """

    domain: str
    name: str
    subjects: int
    n_treatments: int
    n_outcomes: int
    n_covariates: int
    treatment_out_degree: int = 3
    covariate_outcome_prob: float = 0.5
    outcome_edge_prob: float = 0.2
    beta: float = 1.0
    gen: GenConfig = field(default_factory=lambda: GenConfig(family="dirichlet", arity=3))

    def with_(self, **kw) -> "LookalikeConfig":
        return replace(self, **kw)

    @property
    def treatments(self):
        return [f"T{i + 1}" for i in range(self.n_treatments)]

    @property
    def outcomes(self):
        return [f"O{i + 1}" for i in range(self.n_outcomes)]

    @property
    def covariates(self):
        # C1 is the biasing covariate
        return [f"C{i + 1}" for i in range(self.n_covariates)]

    @property
    def biasing_covariate(self):
        return "C1"


def lookalike_config(domain: str) -> LookalikeConfig:
    """Defaults for the JDK (``"J"``), Postgres (``"P"``) or HTTP (``"H"``) look-alike."""
    aliases = {k: k for k in _LOOKALIKE}
    aliases.update({v["name"].upper(): k for k, v in _LOOKALIKE.items()})
    key = aliases.get(str(domain).upper())
    if key is None:
        raise ValueError(f"unknown look-alike domain {domain!r}; use J, P or H")
    return LookalikeConfig(domain=key, **_LOOKALIKE[key])


def lookalike_structure(cfg: LookalikeConfig, seed=None) -> Dag:
    """Generating DAG: covariates and root treatments pointing into outcomes.

    The biasing covariate feeds every outcome so that, once treatments are
    biased on it, it confounds each treatment-outcome pair. Each treatment
    affects ``treatment_out_degree`` random outcomes; other covariates reach
    each outcome with ``covariate_outcome_prob``; outcomes form a random
    forward-ordered DAG with ``outcome_edge_prob``.
    """
    rng = _rng(seed)
    T, O, C = cfg.treatments, cfg.outcomes, cfg.covariates
    vertices = C + T + O
    edges = [(cfg.biasing_covariate, o) for o in O]
    for c in C[1:]:
        edges += [(c, o) for o in O if rng.random() < cfg.covariate_outcome_prob]
    deg = min(cfg.treatment_out_degree, len(O))
    for t in T:
        for i in np.sort(rng.choice(len(O), size=deg, replace=False)):
            edges.append((t, O[i]))
    for i, j in itertools.combinations(range(len(O)), 2):
        if rng.random() < cfg.outcome_edge_prob:
            edges.append((O[i], O[j]))
    return Dag(vertices, edges)


def consistent_dag(generating: Dag, cfg: LookalikeConfig) -> Dag:
    """Generating DAG plus biasing covariate -> every treatment."""
    return generating.with_edges(add=[(cfg.biasing_covariate, t) for t in cfg.treatments])


def observational_network(net: DiscreteNetwork, cfg: LookalikeConfig) -> DiscreteNetwork:
    """Network that generates the biased observational rows exactly.

    Non-treatment CPTs are those of ``net``; each treatment ``T_j`` gets the
    biasing covariate as its only parent with the assignment rule of
    :func:`bias_sample`.
    """
    c = cfg.biasing_covariate
    dag = consistent_dag(net.dag, cfg)
    codes = np.arange(1, net.arities[c] + 1)
    signs = treatment_signs(codes, cfg.n_treatments)
    cpts = dict(net.cpts)
    for j, t in enumerate(cfg.treatments):
        if net.dag.parents(t):
            raise ValueError(f"treatment {t!r} has parents in the generating DAG")
        p = expit(signs[:, j] * cfg.beta)
        cpts[t] = np.column_stack([1.0 - p, p])
    return DiscreteNetwork(dag, net.arities, cpts)


def generate_lookalike(cfg: LookalikeConfig, seed=None):
    """Network, factorial data and biased observational data for ``cfg``.

    Returns ``(network, consistent_dag, interventional, observational)``.
    Treatments are binary; every other vertex uses the family arity.
    """
    if cfg.gen.family == "linear_gaussian":
        raise ValueError("look-alike generation needs a discrete family (dirichlet or logistic)")
    s_struct, s_param, s_data, s_bias = np.random.SeedSequence(seed).spawn(4)
    dag = lookalike_structure(cfg, s_struct)
    if cfg.gen.family == "dirichlet":
        arity = {v: (2 if v in cfg.treatments else cfg.gen.arity) for v in dag.vertices}
        net = gen_dirichlet(dag, arity, cfg.gen.S, s_param, cfg.gen.strength_multiplier)
    else:
        net = gen_logistic(dag, cfg.gen.delta, s_param, cfg.gen.strength_multiplier)
    inter = factorial_dataset(net, cfg.subjects, cfg.treatments, s_data)
    obs = bias_sample(inter, cfg.beta, cfg.biasing_covariate, s_bias)
    return net, consistent_dag(dag, cfg), inter, obs
