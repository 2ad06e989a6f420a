import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import tveval.networks as networks
from oracles import joint_by_enumeration
from tveval.datagen import gen_dirichlet, gen_linear_gaussian, random_dag, sample
from tveval.dataset import Dataset, DatasetError, continuous, discrete
from tveval.graphs import Dag
from tveval.harness import worked_example_models
from tveval.networks import (
    Categorical,
    DiscreteNetwork,
    GaussianMixture,
    GaussianNetwork,
    InferenceTooLarge,
    NetworkError,
    fit_mle_discrete,
    fit_mle_gaussian,
    format_network,
    gaussian_moments,
    intervene,
    joint_table,
    marginal,
    parse_network,
)


def _marginal_from(joint, vs, v):
    return joint.sum(axis=tuple(i for i, u in enumerate(vs) if u != v))


# -- discrete inference -----------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31), st.integers(2, 3))
def test_variable_elimination_matches_enumeration(n, seed, k):
    g = random_dag(n, min(2.0, n - 1.01), seed)
    net = gen_dirichlet(g, k=k, S=2.0, seed=seed)
    joint = joint_by_enumeration(net)
    assert np.isclose(joint.sum(), 1.0)
    assert np.allclose(joint_table(net), joint, atol=1e-12)
    for v in net.vertices:
        exact = _marginal_from(joint, list(net.vertices), v)
        assert np.allclose(marginal(net, v).probs, exact, atol=1e-12)
        assert np.allclose(marginal(net, v, method="joint").probs, exact, atol=1e-12)


def test_intervention_is_truncated_factorisation():
    g = Dag(["A", "B", "C"], [("A", "B"), ("A", "C"), ("B", "C")])
    net = gen_dirichlet(g, k=2, S=1.0, seed=3)
    joint = joint_by_enumeration(net)
    # P(C | do(B=1)) = sum_a P(a) P(C | a, B=1)
    expected = sum(joint[a].sum() * net.cpts["C"][a * 2 + 1] for a in range(2))
    assert np.allclose(marginal(intervene(net, "B", 1), "C").probs, expected)
    assert np.allclose(marginal(intervene(net, "B", 1), "A").probs, joint.sum(axis=(1, 2)))


def test_intervention_value_checked():
    net = gen_dirichlet(Dag(["A", "B"], [("A", "B")]), k=2, seed=0)
    for bad in (2, -1, 0.5, True):
        with pytest.raises(NetworkError):
            intervene(net, "A", bad)


def test_factor_size_guard(monkeypatch):
    net = gen_dirichlet(Dag(["A", "B", "C"], [("A", "C"), ("B", "C")]), k=3, seed=0)
    monkeypatch.setattr(networks, "MAX_FACTOR_SIZE", 8)
    with pytest.raises(InferenceTooLarge):
        marginal(net, "C")
    monkeypatch.setattr(networks, "JOINT_ENUMERATION_LIMIT", 8)
    with pytest.raises(InferenceTooLarge):
        joint_table(net)


def test_cpt_validation():
    g = Dag(["A", "B"], [("A", "B")])
    good = {"A": [[0.5, 0.5]], "B": [[0.1, 0.9], [0.3, 0.7]]}
    DiscreteNetwork(g, {"A": 2, "B": 2}, good)
    with pytest.raises(NetworkError):
        DiscreteNetwork(g, {"A": 2, "B": 2}, {**good, "B": [[0.1, 0.8], [0.3, 0.7]]})
    with pytest.raises(NetworkError):
        DiscreteNetwork(g, {"A": 2, "B": 2}, {**good, "B": [[0.1, 0.9]]})


# -- Gaussian inference -----------------------------------------------------


def test_worked_example_moments_closed_form():
    g1, p2, p3 = worked_example_models()
    assert marginal(g1, "V3").mean == pytest.approx(0.0)
    assert marginal(g1, "V3").variance == pytest.approx(2.01)  # 1 + 0.01 + 1
    do = marginal(intervene(g1, "V1", 2.0), "V3")
    assert (do.mean, do.variance) == pytest.approx((2.0, 1.01))
    point = marginal(intervene(g1, "V1", 2.0), "V1")
    assert isinstance(point, Categorical) and point.support == (2.0,)
    assert marginal(p3, "V3").variance == pytest.approx(1.01)
    assert marginal(p2, "V3").variance == pytest.approx(2.0)


def test_gaussian_moments_match_simulation():
    g = random_dag(6, 2.5, seed=11)
    net = gen_linear_gaussian(g, seed=11)
    mean, cov = gaussian_moments(net)
    d = sample(net, 200_000, seed=5)
    X = d.matrix(net.vertices)
    assert np.allclose(X.mean(axis=0), mean, atol=0.03)
    assert np.allclose(np.cov(X, rowvar=False), cov, atol=0.05 * np.abs(cov).max())


def test_mixture_quantile_and_cdf_consistent():
    m = GaussianMixture([0.0, 3.0], [1.0, 0.5], [0.3, 0.7])
    for q in (0.05, 0.5, 0.9):
        assert float(m.cdf(m.quantile(q))) == pytest.approx(q, abs=1e-9)
    assert GaussianMixture.normal(0, 1).quantile(0.9) == pytest.approx(1.2815515655446004)


def test_gaussian_validation():
    g = Dag(["A", "B"], [("A", "B")])
    with pytest.raises(NetworkError):
        GaussianNetwork(g, {})
    with pytest.raises(NetworkError):
        GaussianNetwork(g, {("A", "B"): 1.0}, noise_variance={"A": 0.0})


# -- fitting ----------------------------------------------------------------


def test_mle_discrete_counts_by_hand():
    g = Dag(["A", "B"], [("A", "B")])
    a = [0, 0, 0, 1, 1, 0]
    b = [0, 1, 1, 1, 1, 0]
    data = Dataset({"A": a, "B": b}, {"A": discrete(2), "B": discrete(3)})
    net = fit_mle_discrete(g, data)
    assert np.allclose(net.cpts["A"], [[4 / 6, 2 / 6]])
    assert np.allclose(net.cpts["B"], [[2 / 4, 2 / 4, 0], [0, 1, 0]])
    smooth = fit_mle_discrete(g, data, pseudocount=1.0)
    assert np.allclose(smooth.cpts["B"][1], [1 / 5, 3 / 5, 1 / 5])


def test_mle_unseen_parent_configuration_is_uniform():
    g = Dag(["A", "B"], [("A", "B")])
    data = Dataset({"A": [0, 0], "B": [1, 0]}, {"A": discrete(2), "B": discrete(2)})
    assert np.allclose(fit_mle_discrete(g, data).cpts["B"][1], [0.5, 0.5])


def test_mle_gaussian_recovers_parameters():
    g = Dag(["X", "Y"], [("X", "Y")])
    net = GaussianNetwork(g, {("X", "Y"): -0.7}, {"X": 1.0, "Y": 0.5}, {"X": 2.0, "Y": 0.25})
    fit = fit_mle_gaussian(g, sample(net, 100_000, seed=1))
    assert fit.weights[("X", "Y")] == pytest.approx(-0.7, abs=0.01)
    assert fit.intercepts["Y"] == pytest.approx(0.5, abs=0.01)
    assert fit.noise_variance["Y"] == pytest.approx(0.25, rel=0.02)


def test_mle_gaussian_errors():
    g = Dag(["X", "Y"], [("X", "Y")])
    d = Dataset({"X": [1.0, 1.0, 1.0, 1.0], "Y": [0.0, 1.0, 2.0, 3.0]}, {"X": continuous(), "Y": continuous()})
    with pytest.raises(NetworkError):
        fit_mle_gaussian(g, d)  # constant regressor
    with pytest.raises(NetworkError):
        fit_mle_gaussian(g, d.take([0, 1]))
    with pytest.raises(DatasetError):
        fit_mle_discrete(Dag(["Q"], []), d)


# -- text format ------------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31))
def test_network_round_trip(n, seed):
    g = random_dag(n, min(2.0, n - 1.01) if n > 1 else 0, seed)
    for net in (gen_dirichlet(g, k=3, seed=seed), gen_linear_gaussian(g, seed=seed)):
        back = parse_network(format_network(net))
        assert back.dag == net.dag
        assert format_network(back) == format_network(net)
    gi = intervene(gen_linear_gaussian(g, seed=seed), g.vertices[0], 1.5)
    assert parse_network(format_network(gi)).intervened == {g.vertices[0]}


def test_parse_network_errors():
    with pytest.raises(NetworkError):
        parse_network("network: banana\n")
