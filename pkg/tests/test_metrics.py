import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import all_dags, backdoor_valid, descendants_of, generalized_valid, joint_by_enumeration, sid_oracle, subsets
from tveval.datagen import gen_dirichlet, random_dag
from tveval.graphs import Cpdag, Dag, GraphError, cpdag_of, enumerate_extensions
from tveval.metrics import is_valid_adjustment, metric_on_cpdag, shd, sid
from tveval.networks import intervene

DAGS3 = all_dags(3)
DAGS4 = all_dags(4)


# -- SHD --------------------------------------------------------------------


def test_shd_counts_each_pair_once():
    g = Dag(["A", "B", "C"], [("A", "B"), ("B", "C")])
    assert shd(g, g).value == 0
    assert shd(g, Dag(["A", "B", "C"], [("B", "A"), ("B", "C")])).value == 1  # reversal
    assert shd(g, Dag(["A", "B", "C"], [("A", "B")])).value == 1  # deletion
    assert shd(g, Dag(["A", "B", "C"], [("A", "B"), ("B", "C"), ("A", "C")])).value == 1
    assert shd(g, Dag(["A", "B", "C"], [("C", "A")])).value == 3
    assert shd(g, cpdag_of(g)).value == 2  # two undirected edges


def test_shd_symmetric_and_rejects_vertex_mismatch():
    g, h = DAGS3[5], DAGS3[17]
    assert shd(g, h).value == shd(h, g).value
    with pytest.raises(GraphError):
        shd(g, Dag(["X", "Y", "Z"], []))


# -- adjustment validity ----------------------------------------------------


def test_backdoor_matches_path_oracle_exhaustively():
    for g in DAGS4:
        for t, o in itertools.permutations(g.vertices, 2):
            rest = [v for v in g.vertices if v not in (t, o)]
            for z in subsets(rest):
                assert is_valid_adjustment(g, t, o, z, "backdoor") == backdoor_valid(g, t, o, z), (g, t, o, z)


def test_generalized_matches_path_oracle_exhaustively():
    for g in DAGS4:
        for t, o in itertools.permutations(g.vertices, 2):
            rest = [v for v in g.vertices if v != t]
            for z in subsets(rest):
                got = is_valid_adjustment(g, t, o, z, "generalized")
                assert got == generalized_valid(g, t, o, z), (g, t, o, z)


def _adjusted(joint, vs, t, o, z, t_val):
    """sum_z P(o | t, z) P(z) from a joint table; P(o) when o is in z."""
    it, io_ = vs.index(t), vs.index(o)
    if o in z:
        return joint.sum(axis=tuple(i for i in range(len(vs)) if i != io_))
    iz = [vs.index(v) for v in z]
    keep = sorted([it, io_] + iz)
    p = joint.sum(axis=tuple(i for i in range(len(vs)) if i not in keep))
    p = np.moveaxis(p, [keep.index(it), keep.index(io_)], [0, 1])  # (t, o, z...)
    pz = p.sum(axis=(0, 1))
    p_o_given_tz = p[t_val] / p[t_val].sum(axis=0, keepdims=True)
    return (p_o_given_tz * pz[None]).reshape(p.shape[1], -1).sum(axis=1)


def _interventional(net, t, o, t_val):
    j = joint_by_enumeration(intervene(net, t, t_val))
    vs = list(net.vertices)
    return j.sum(axis=tuple(i for i in range(len(vs)) if i != vs.index(o)))


def _semantic_valid(net, t, o, z):
    vs = list(net.vertices)
    joint = joint_by_enumeration(net)
    return all(
        np.allclose(_adjusted(joint, vs, t, o, z, tv), _interventional(net, t, o, tv), atol=1e-9)
        for tv in range(net.arities[t])
    )


def test_generalized_criterion_matches_numeric_adjustment_on_three_vertices():
    # with generic (random) parameters the adjustment formula equals the
    # truncated-factorisation distribution exactly when z is a valid set
    for i, g in enumerate(DAGS3):
        net = gen_dirichlet(g, k=2, S=1.0, seed=i)
        for t, o in itertools.permutations(g.vertices, 2):
            for z in subsets([v for v in g.vertices if v != t]):
                assert is_valid_adjustment(g, t, o, z, "generalized") == _semantic_valid(net, t, o, z)


def test_generalized_criterion_matches_numeric_adjustment_on_four_vertices():
    rng = np.random.default_rng(0)
    for i in rng.choice(len(DAGS4), size=60, replace=False):
        g = DAGS4[i]
        net = gen_dirichlet(g, k=2, S=1.0, seed=int(i))
        for t, o in itertools.permutations(g.vertices, 2):
            for z in subsets([v for v in g.vertices if v != t]):
                assert is_valid_adjustment(g, t, o, z, "generalized") == _semantic_valid(net, t, o, z)


def test_criteria_differ_on_descendant_off_causal_path():
    g = Dag(["T", "D", "O"], [("T", "D"), ("T", "O")])
    assert not is_valid_adjustment(g, "T", "O", ["D"], "backdoor")
    assert is_valid_adjustment(g, "T", "O", ["D"], "generalized")


def test_adjustment_argument_checks():
    g = Dag(["A", "B"], [("A", "B")])
    with pytest.raises(GraphError):
        is_valid_adjustment(g, "A", "B", ["A"])
    with pytest.raises(GraphError):
        is_valid_adjustment(g, "A", "A")
    with pytest.raises(ValueError):
        is_valid_adjustment(g, "A", "B", criterion="frontdoor")


# -- SID --------------------------------------------------------------------


def test_sid_hand_examples():
    g = Dag(["X", "Y", "Z"], [("X", "Y"), ("Y", "Z")])
    assert sid(g, g).value == 0
    # empty estimate: do(X) on Y and Z is wrongly taken as P(Y), P(Z)
    assert sid(g, Dag(["X", "Y", "Z"], [])).value == 3
    # reversed first edge: pair (Y, X) fails through the parent clause
    res = sid(g, Dag(["X", "Y", "Z"], [("Y", "X"), ("Y", "Z")]))
    assert res.per_pair_detail[("X", "Y")] is False
    assert sid(g, Dag(["X", "Y", "Z"], [("Y", "X"), ("Y", "Z")])).value == sid_oracle(
        g, Dag(["X", "Y", "Z"], [("Y", "X"), ("Y", "Z")])
    )


def test_sid_matches_oracle_on_all_three_vertex_pairs():
    for g in DAGS3:
        for h in DAGS3:
            assert sid(g, h).value == sid_oracle(g, h)
            assert sid(g, h, "backdoor").value == sid_oracle(g, h, _bd)


def _bd(g, t, o, z):
    if o in z:
        return o not in descendants_of(g, t)
    return backdoor_valid(g, t, o, z)


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1), st.floats(0.3, 0.9))
def test_sid_zero_for_supergraphs(n, seed, keep):
    rng = np.random.default_rng(seed)
    h = random_dag(n, min(n - 1.01, 3.0), seed)
    g = Dag(h.vertices, [e for e in h.sorted_edges() if rng.random() < keep])
    assert sid(g, h).value == 0


def test_sid_penalize_edges_and_detail_csv():
    g = Dag(["A", "B", "C"], [("A", "B")])
    h = Dag(["A", "B", "C"], [("A", "B"), ("A", "C"), ("B", "C")])
    assert sid(g, h).value == 0
    assert sid(g, h, penalize_edges=True).value == 2
    # empty estimate: do(A) needs no adjustment, do(B) leaves A -> B open
    res = sid(g, Dag(["A", "B", "C"], []))
    assert res.value == 1
    assert res.detail_csv(g.vertices).splitlines() == [",A,B,C", "A,,1,1", "B,0,,1", "C,1,1,"]


# -- averaging over extensions ----------------------------------------------


def test_metric_on_cpdag_is_mean_over_extensions():
    g = Dag(["A", "B", "C"], [("A", "B"), ("B", "C")])
    c = cpdag_of(g)
    exts = enumerate_extensions(c)
    assert len(exts) == 3
    assert metric_on_cpdag(g, c, "sid").value == pytest.approx(np.mean([sid(g, e).value for e in exts]))
    assert metric_on_cpdag(g, c, "shd").value == pytest.approx(np.mean([shd(g, e).value for e in exts]))
    assert metric_on_cpdag(g, g, "sid").value == 0
    assert metric_on_cpdag(g, c, lambda a, b: 1.0).value == 1.0


def test_metric_on_cpdag_argument_errors():
    g = Dag(["A", "B"], [("A", "B")])
    c = Cpdag(["A", "B"], [], [frozenset("AB")])
    with pytest.raises(ValueError):
        metric_on_cpdag(g, c, "tv")
    with pytest.raises(ValueError):
        metric_on_cpdag(g, c, "nope")
